#pragma once

#include <array>

#include "coarse/report.hpp"
#include "coarse/spaces.hpp"

namespace coarse {

// mu = 2^{1/delta} for delta > 0, e for delta = 0.
double mu_from_delta(double delta);

struct VisualKernel {
    double delta = 0.0;
    double mu = 2.718281828459045;
    static VisualKernel from_delta(double delta);
};

struct KernelMatrix {
    std::size_t n = 0;
    std::vector<double> values;  // n x n
    double K = 1.0;
    double v(std::size_t i, std::size_t j) const { return values[i * n + j]; }
    static KernelMatrix from_values(std::size_t n, std::vector<double> values);
    nlohmann::json to_json() const;
    static KernelMatrix from_json(const nlohmann::json& j);
};

// Quasi-ultrametric constant: max over triples of v(i,k) / max(v(i,j), v(j,k)).
double quasi_ultrametric_constant(std::size_t n, const std::vector<double>& values);

KernelMatrix visual_kernel_matrix(const VisualKernel& k, const Configuration& c);

// Random kernel with K <= 2 by construction: the ultrametric 2^{-lcp} of
// random binary words, each entry scaled by an independent factor in [1, 2].
KernelMatrix random_k2_kernel(std::size_t n, Rng& g);

// Chain construction (all-pairs shortest paths over the complete graph).
std::vector<double> chain_metric(const KernelMatrix& km);
std::vector<double> chain_metric_floyd(std::size_t n, const std::vector<double>& w);
std::vector<double> chain_metric_dijkstra(std::size_t n, const std::vector<double>& w);
// Exhaustive enumeration of simple chains; n <= 8.
std::vector<double> chain_metric_bruteforce(std::size_t n, const std::vector<double>& w);

struct FrinkCheck {
    double max_lower_excess = 0.0;  // max(check - kernel)
    double max_ratio = 0.0;         // max(kernel / check)
    bool holds = true;              // check <= kernel <= 4 check
};
FrinkCheck frink_sandwich(const KernelMatrix& km, const std::vector<double>& check);

struct BoundaryProduct {
    double value = 0.0;
    std::optional<double> closed_form;
    double numeric = 0.0;
    int doublings = 0;
};
// Limit of (ray_xi(t) | ray_eta(t))_o by doubling t; closed form reported when available.
BoundaryProduct boundary_gromov_product(const Space& space, const BoundaryPoint& xi, const BoundaryPoint& eta,
                                        double tol = 1e-4, int max_doublings = 40);

struct CrossRatioResult {
    double ratio = 1.0;
    double log_plus = 0.0;
    double boxtimes_sup = 0.0;
    double boxtimes_inf = 0.0;
    nlohmann::json to_json() const;
};

// Pairwise values rho(i,j) on four points, indices 0..3. log base mu; the
// boxtimes fields are -log_mu of the kernel values.
CrossRatioResult cross_ratio(const std::array<std::array<double, 4>, 4>& rho, double mu);
CrossRatioResult cross_ratio(const std::vector<double>& mat, std::size_t n, std::array<std::size_t, 4> idx,
                             double mu);
// On ideal points through boundary Gromov products, kernel mu^{-(.|.)}.
CrossRatioResult cross_ratio(const Space& space, const std::array<BoundaryPoint, 4>& xi, double mu);

struct XRatioGap {
    double d = 0.0;
    double logplus = 0.0;
    double gap = 0.0;
};
XRatioGap xratio_vs_geodesic_distance(const Space& space, const std::array<BoundaryPoint, 4>& xi, double mu);

struct GapSweep {
    std::vector<double> R;
    std::vector<double> max_gap;
    double slope = 0.0;  // of max gap against log R
    double overall_max = 0.0;
    Report report;
};
// Random quadruples at separation scale R: xi_1, xi_2 near -R, xi_3, xi_4 near R
// for alternating linked/unlinked patterns, plus uniform ones.
GapSweep xratio_gap_sweep(const std::vector<double>& Rs, std::size_t per_R, std::uint64_t seed);

}  // namespace coarse
