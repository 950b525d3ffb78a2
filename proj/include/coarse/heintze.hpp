#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace coarse {

struct JordanBlock {
    double eigenvalue = 1.0;
    int size = 1;
};

// Purely real Heintze group N x_alpha R. Abelian(k): N = R^k, alpha given by
// Jordan blocks (sizes 1 or 2). Heisenberg(m): N = H^{2m+1}, alpha the
// standard grading scaled by one horizontal eigenvalue a (center 2a).
struct HeintzeSpec {
    enum class NType { Abelian, Heisenberg };
    NType type = NType::Abelian;
    int m = 1;  // k for Abelian, m for Heisenberg
    std::vector<JordanBlock> blocks;
    bool normalized = false;

    static HeintzeSpec abelian_diag(const std::vector<double>& eigenvalues);
    static HeintzeSpec abelian(const std::vector<JordanBlock>& blocks);
    static HeintzeSpec heisenberg(int m, double horizontal = 1.0);

    int dim() const;  // dim N
    std::vector<double> eigenvalues() const;  // with multiplicity, coordinate order
    void validate() const;
    std::string label() const;
    nlohmann::json to_json() const;
};

HeintzeSpec normalize(const HeintzeSpec& s);
double homogeneous_dimension(const HeintzeSpec& s);
bool is_carnot_type(const HeintzeSpec& s);

// Dilation exp(t alpha) on N-coordinates.
std::vector<double> dilate(const HeintzeSpec& s, double t, const std::vector<double>& n);
// Homogeneous quasinorm of n (distance to identity).
double quasinorm(const HeintzeSpec& s, const std::vector<double>& n);
// rho_hat(n1, n2) = |n1^{-1} n2|.
double homogeneous_quasimetric(const HeintzeSpec& s, const std::vector<double>& n1,
                               const std::vector<double>& n2);
// Group law on N.
std::vector<double> group_mul(const HeintzeSpec& s, const std::vector<double>& a,
                              const std::vector<double>& b);
std::vector<double> group_inv(const HeintzeSpec& s, const std::vector<double>& a);

struct BoxRegion {
    enum class Kind { UnitCube, UnitQuasiball };
    Kind kind = Kind::UnitCube;
};

struct BoxCountResult {
    double estimate = 0.0;
    double stderr_ = 0.0;
    std::vector<double> scales;
    std::vector<double> counts;
    std::size_t n_points = 0;
    std::size_t n_used = 0;  // interior scales that entered the regression
};

// Regresses log N(eps) on log(1/eps), dropping the coarsest and finest scale
// and any scale with more than n_points / 8 occupied boxes.
BoxCountResult box_counting_dimension(const HeintzeSpec& s, BoxRegion region,
                                      const std::vector<double>& scales, std::uint64_t seed,
                                      std::size_t n_points = 1000000);

struct LineCountResult {
    double exponent = 0.0;
    double expected = 0.0;
    std::vector<double> radii;
    std::vector<double> transversal_measure;
    std::vector<double> ball_measure;
};

// Lines parallel to coordinate axis `direction` meeting quasiballs B(0, r).
LineCountResult line_count_scaling(const HeintzeSpec& s, int direction,
                                   const std::vector<double>& radii, std::uint64_t seed,
                                   std::size_t n_samples = 200000);

// Transversal measure for one radius (0 for r = 0).
double line_transversal_measure(const HeintzeSpec& s, int direction, double r,
                                std::uint64_t seed, std::size_t n_samples);

enum class DivisionAlgebra { R, C, H, O };

struct SymmetricSpaceId {
    DivisionAlgebra K = DivisionAlgebra::R;
    int n = 2;  // KH^n, dim X = n dim_R K
    std::string label() const;
    bool operator==(const SymmetricSpaceId&) const = default;
};

struct InvariantRecord {
    int dim_X = 0;
    int dim_boundary = 0;
    int p = 0;
    int dim_Im_K = 0;
    bool operator==(const InvariantRecord&) const = default;
};

int dim_R(DivisionAlgebra K);
void validate_id(const SymmetricSpaceId& id);
InvariantRecord symmetric_space_invariants(const SymmetricSpaceId& id);

struct Verdict {
    enum class Kind { Homothetic, DistinguishedByTopDim, DistinguishedByP, Undistinguished };
    Kind kind = Kind::Homothetic;
    std::string str() const;
};

Verdict sbe_distinguishable(const SymmetricSpaceId& a, const SymmetricSpaceId& b);

// All ids with dim X <= max_dim.
std::vector<SymmetricSpaceId> symmetric_spaces_up_to(int max_dim);

// Halton point (bases 2, 3, 5, 7, ...) with a Cranley-Patterson shift.
double halton(std::uint64_t index, int base);

}  // namespace coarse
