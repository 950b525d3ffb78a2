#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "coarse/coarse_maps.hpp"
#include "coarse/spaces.hpp"
#include "coarse/sublinear.hpp"

namespace coarse {

using BoundaryFn = std::function<BoundaryPoint(const BoundaryPoint&)>;
using BoundaryMetric = std::function<double(const BoundaryPoint&, const BoundaryPoint&)>;
using Quadruple = std::array<BoundaryPoint, 4>;
// Draws a quadruple whose points sit roughly e^{-S} apart.
using QuadrupleSampler = std::function<Quadruple(Rng&, double S)>;

// Two tight pairs at mutual distance e^{-S}, tightened by e^{-T1}, e^{-T2}
// (T_i uniform in [0, S]), then randomly relabelled. Coordinates live in R^dim
// around `center`; points carry `tag`.
QuadrupleSampler clustered_quadruples(ModelTag tag, std::vector<double> center, double jitter_center = 0.0);

struct SqmOptions {
    double nu = 2.718281828459045;
    // Separation exponents S are log-uniform in [S_min, S_max].
    double S_min = 0.5, S_max = 12.0;
    // Fixed separation threshold; chosen adaptively when absent.
    std::optional<double> epsilon;
    std::vector<double> epsilon_candidates{1.0, 0.5, 0.25, 0.1, 0.05};
    Family family = Family::Auto;
    // Optional exact Gromov products for the max-product proxy; falls back to -log_nu rho.
    BoundaryMetric gromov;
    EnvelopeOptions envelope;
    std::string source = "source", target = "target";
};

struct SqmEstimate {
    double alpha_lower = 1, alpha_upper = 1;
    AdmissibleFunction fitted_v;
    Family family = Family::Constant;
    double theta = 0, k = 0;
    double epsilon_scale = 0;
    double nu = 2.718281828459045;
    std::vector<ShellRow> residual_table;
    std::size_t n_quadruples = 0;
    std::string source, target;
    // Same fit against the closest-pair proxy, when it succeeds.
    nlohmann::json closest_pair_fit;
    nlohmann::json to_json() const;
};

// log^+_nu cross ratio of (phi xi_i) against that of xi_i.
SqmEstimate sqm_check(const BoundaryFn& phi, const BoundaryMetric& rho, const BoundaryMetric& theta,
                      const QuadrupleSampler& sampler, std::size_t n, std::uint64_t seed,
                      const SqmOptions& opt = {});

// ---------------------------------------------------------------- annuli

struct AnnulusSpec {
    BoundaryPoint center;
    double r = 0, s = 0;
    double modulus() const;
    void validate() const;
};

struct AnnulusResult {
    double modulus = 0;
    double measured = 0;  // log(max / min) of image distances to the image center
    double bound = 0;     // 2 lambda modulus + w(-log r)
    double D1 = 0;
    std::size_t n = 0;
    nlohmann::json to_json() const;
};

// Points of R^dim with rho(center, x) in [r, s]: random direction, then the
// radial scale is solved by bisection for a log-uniform target value.
std::vector<BoundaryPoint> annulus_points(const BoundaryMetric& rho, const AnnulusSpec& A, int dim, std::size_t n,
                                          std::uint64_t seed);

// Threshold (tau^4 / 4) min(epsilon, diam / 3).
double annulus_threshold(double tau, double epsilon, double diam);

AnnulusResult annulus_image_modulus(const BoundaryFn& phi, const AnnulusSpec& A, const std::vector<BoundaryPoint>& pts,
                                    const BoundaryMetric& theta, double lambda, const AdmissibleFunction& w,
                                    double D1);

// Smallest ratio between consecutive distances from a center, over radii in
// [r_lo, r_hi]; a lower estimate of the uniform perfectness constant.
double uniform_perfectness(const BoundaryMetric& rho, const std::vector<BoundaryPoint>& pts, double r_lo,
                           double r_hi);

// ---------------------------------------------------------------- moduli of continuity

using PairSampler = std::function<std::pair<BoundaryPoint, BoundaryPoint>(Rng&, double S)>;

struct HolderFit {
    double lambda_lower = 1, lambda_upper = 1;
    AdmissibleFunction v;
    Family family = Family::Constant;
    double worst_excess = 0;  // largest breach of the two-sided bounds with the fitted v
    std::vector<ShellRow> shells;
    nlohmann::json to_json() const;
};

// Envelope fit of -log theta(phi x, phi y) against -log rho(x, y) for pairs at
// distance about e^{-S}, S uniform in [1, S_max].
HolderFit modulus_of_continuity(const BoundaryFn& phi, const BoundaryMetric& rho, const BoundaryMetric& theta,
                                const PairSampler& sampler, std::size_t n, std::uint64_t seed,
                                double S_max = 12.0, Family family = Family::Auto);

// Constants of phi o psi from those of psi (first) and phi (second).
SqmEstimate compose_sqm(const SqmEstimate& psi, const SqmEstimate& phi);

}  // namespace coarse
