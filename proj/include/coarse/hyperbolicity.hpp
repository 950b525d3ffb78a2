#pragma once

#include <array>
#include <string>

#include "coarse/report.hpp"
#include "coarse/spaces.hpp"

namespace coarse {

double gromov_product(const Configuration& c, std::size_t x, std::size_t y, std::size_t o);
double gromov_product(const Space& s, const Point& x, const Point& y, const Point& o);

struct DeltaEstimate {
    double delta = 0.0;
    std::array<std::size_t, 4> witness{0, 0, 0, 0};
    std::size_t n_points = 0;
    bool exhaustive = true;
    std::size_t samples = 0;  // 4-subsets examined when not exhaustive
    nlohmann::json to_json() const;
};

struct DeltaOptions {
    std::size_t scan_limit = 300;
    std::size_t subsample_k = 2'000'000;
    std::uint64_t seed = 0;
};

// Defect of one quadruple: (largest pair-sum - second largest) / 2.
double quadruple_defect(const Configuration& c, std::size_t i, std::size_t j, std::size_t k, std::size_t l);
DeltaEstimate delta_four_point(const Configuration& c, const DeltaOptions& opt = {});

enum class LemmaId {
    Contraction,
    Connectedness,
    LinedUpProduct,
    RightTriangle,
    Quadrilateral,
    ProjectionSup,
    LinearDivergence
};
std::string lemma_name(LemmaId id);
LemmaId lemma_from_name(const std::string& s);
double lemma_constant(LemmaId id);  // multiple of delta (or of eta for lined_up_product)

struct AuditOptions {
    double radius = 6.0;         // sampling ball
    double eta = 1.0;            // lined_up_product neighbourhood
    double alpha = 0.25;         // connectedness spacing
    double line_window = 40.0;   // parameter window used to sample bi-infinite lines
    bool check_pilot_delta = true;
    std::size_t retry_cap = 100000;
};

struct AuditReport {
    LemmaId lemma = LemmaId::Contraction;
    std::size_t trials = 0;
    double max_observed = 0.0;
    double paper_bound = 0.0;
    double pilot_delta = 0.0;
    double acceptance_rate = 1.0;
    std::vector<nlohmann::json> violations;
    std::size_t violation_count = 0;
    std::uint64_t seed = 0;
    Report to_report() const;
    nlohmann::json to_json() const { return to_report().to_json(); }
};

// Numeric tolerance for audit comparisons.
inline constexpr double kAuditTol = 1e-6;

AuditReport audit_lemma(const Space& space, double delta, LemmaId id, std::size_t trials, std::uint64_t seed,
                        const AuditOptions& opt = {});

}  // namespace coarse
