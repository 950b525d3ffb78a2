#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "coarse/report.hpp"
#include "coarse/spaces.hpp"
#include "coarse/sublinear.hpp"

namespace coarse {

struct CoarseMap {
    SpacePtr source, target;
    std::function<Point(const Point&)> eval;
    // Optional coarse inverse, used for the co-density (surjectivity) table.
    std::function<Point(const Point&)> quasi_inverse;
    std::string label;

    Point operator()(const Point& p) const { return eval(p); }
};

CoarseMap identity_map(SpacePtr space);
// x at distance r from o goes to distance max(0, r + sign u(r)) on [o, x).
// HalfPlane, Hyperboloid and RegularTree (target radius rounded to an integer).
CoarseMap make_radial_sbe(SpacePtr space, const AdmissibleFunction& u, int sign);
// Tree map repeating every letter `factor` times; a (factor, factor, O(1)) embedding.
CoarseMap make_tree_stretch(std::shared_ptr<const RegularTree> tree, int factor);

struct LogModelPair {
    std::shared_ptr<const HeintzeLog> first, second;
    CoarseMap map;
};
// Identity on (N-coordinates, height) between two log models whose
// derivations share eigenvalues and differ in their Jordan structure.
LogModelPair make_heintze_logmodel_pair(const HeintzeSpec& a, const HeintzeSpec& b);

// ---------------------------------------------------------------- envelopes

enum class Family { Constant, Log, Power, Auto };
Family family_from_name(const std::string& s);
const char* family_name(Family f);

// One observation: target quantity y against source quantity x at scale m.
struct ResidualSample {
    double scale = 0;
    double x = 0;
    double y = 0;
};

struct EnvelopeOptions {
    double quantile = 0.99;
    double shell_ratio = 1.4142135623730951;
    double min_scale = 1.0;
    std::size_t min_per_shell = 20;
    // Slope search stops once the linear part of the envelope, relative to
    // the typical x / scale, drops below this.
    double linear_tol = 0.005;
    Family family = Family::Auto;
};

struct ShellRow {
    double lo = 0, hi = 0, scale = 0;
    std::size_t count = 0;
    double upper = 0;  // envelope of y - upper_slope x
    double lower = 0;  // envelope of lower_slope x - y
};

struct EnvelopeFit {
    double lower_slope = 0, upper_slope = 0;
    AdmissibleFunction v;
    Family family = Family::Constant;
    double theta = 0, k = 0;
    double fitted_exponent = 0;  // local log-log slope of v over the shells
    std::vector<ShellRow> shells;
    nlohmann::json to_json() const;
};

// Throws FitFailure when no slope in [1e-3, 1e3] removes the linear part.
EnvelopeFit fit_envelopes(const std::vector<ResidualSample>& samples, const EnvelopeOptions& opt);

// Least-squares fit of a + b g(m) within the family, raised to dominate `values`.
AdmissibleFunction fit_family(const std::vector<double>& scales, const std::vector<double>& values,
                              Family family, Family* chosen = nullptr);

// ---------------------------------------------------------------- SBE estimation

struct SbeEstimate {
    double lambda_lower = 1, lambda_upper = 1;
    AdmissibleFunction fitted_v;
    Family family = Family::Constant;
    std::vector<ShellRow> shell_residuals;
    std::vector<std::pair<double, double>> surjectivity_defect;  // radius, max gap
    std::size_t n_pairs = 0;
    nlohmann::json to_json() const;
};

// Points of `space` with |p| in [lo, hi).
std::vector<Point> sample_shell(const Space& space, double lo, double hi, std::size_t n, std::uint64_t seed);

SbeEstimate estimate_sbe_constants(const CoarseMap& map, std::size_t n_pairs, double R_max, std::uint64_t seed,
                                   Family family_hint = Family::Auto);

// ---------------------------------------------------------------- thresholds

struct EmbeddingThresholds {
    double t_circle = 0, R_circle = 0, v_hat_factor = 0;
};
EmbeddingThresholds embedding_thresholds(double lambda, double f_o_norm, const AdmissibleFunction& v);

struct MorseBounds {
    double h = 0, h_tilde = 0, bound = 0, anti_bound = 0;
};
MorseBounds morse_bounds(double lambda, double delta, double c);

// u up-arrow tau, with the convention 1 for tau <= 1.
double up(const AdmissibleFunction& v, double tau);

struct TrackingConstants {
    double lambda = 1, delta = 0, L = 1;
    AdmissibleFunction v;
    double t_circle = 0, R_circle = 0, v_hat_ref = 0;
    double H = 0, H_tilde = 0, t_track = 0, R_track = 0;
    double R_sqcap = 0;
    int K = 5;
    double H2 = 0, H2_tilde = 0, R_tilde = 0;
    double J = 0, R_final = 0;
    std::map<std::string, double> provenance;
    nlohmann::json to_json() const;
};

// Literal evaluation of the tracking constant chain. The ray branch needs an
// unbounded v (UnboundedRequired otherwise).
TrackingConstants tracking_radii(double lambda, double delta, const AdmissibleFunction& v, double L,
                                 bool ray_branch = true);

struct RadiiGrowthRow {
    double p = 0, w_p = 0, R_tilde = 0, R = 0;
};
struct RadiiGrowth {
    std::vector<RadiiGrowthRow> rows;
    double K_tilde = 0, K = 0;
    nlohmann::json to_json() const;
};
// R_tilde and R for the advanced functions w_p(t) = w(p + t); K_tilde and K are
// the largest ratios R_tilde / w(p) and R / w(p) over the sweep.
RadiiGrowth tracking_radii_growth(const AdmissibleFunction& w, double lambda, double delta, double L,
                                  const std::vector<double>& ps);

// ---------------------------------------------------------------- O(u)-paths

// Sampled quasigeodesic. Half-plane rays are stored in Fermi coordinates
// about the axis ray: (foot, lateral) with the point (lateral, foot). Tree
// rays are stored as (foot, branch depth) off the axis ray.
struct OuPath {
    ModelTag model = ModelTag::HalfPlane;
    double lambda = 1;
    double c = 0;
    std::optional<AdmissibleFunction> v;
    std::vector<double> t;
    std::vector<Point> points;  // explicit points; empty for framed rays
    bool framed = false;
    std::vector<double> foot, lateral;
    GeodesicLine reference;     // geodesic the path was built from
    std::function<Point(double)> eval;  // explicit paths: point at any t
    std::size_t size() const { return t.size(); }
    double budget(double a, double b) const;
};

struct PathSpec {
    double lambda = 1;
    double c = 0;                      // constant budget (ignored if v set)
    std::optional<AdmissibleFunction> v;
    double step = 0.25;                // parameter spacing of samples
    bool perturb = true;
};

// Segment between two points.
OuPath generate_quasigeodesic(const Space& space, const Point& a, const Point& b, const PathSpec& spec,
                              std::uint64_t seed);
// Line between two boundary points, sampled for |t| <= half_length.
OuPath generate_quasigeodesic(const Space& space, const BoundaryPoint& a, const BoundaryPoint& b,
                              const PathSpec& spec, double half_length, std::uint64_t seed);
// Ray from the basepoint in axis frame, sampled densely on each window [w, w + width].
OuPath generate_quasiray(ModelTag model, const PathSpec& spec, const std::vector<double>& windows,
                         double width, std::uint64_t seed, int tree_valence = 3);

double path_distance(const OuPath& p, std::size_t i, std::size_t j, const Space* space);
// Worst violation of the pairwise embedding inequalities (<= 0 when they hold).
double path_self_audit(const OuPath& p, const Space* space);

Report verify_morse(const Space& space, const OuPath& path, double delta);

Report verify_ray_tracking(const OuPath& ray, const TrackingConstants& tc);

struct TransferOptions {
    bool waive_scale_hypotheses = false;
};
Report verify_distance_transfer(const Space& space, const OuPath& p1, const OuPath& p2, double delta,
                                const AdmissibleFunction& v, double L, const TransferOptions& opt = {});

// Nested minimization over samples with local refinement (change < 1e-3).
double distance_between_paths(const Space& space, const OuPath& p1, const OuPath& p2);

BoundaryPoint boundary_map(const CoarseMap& map, const BoundaryPoint& xi);

}  // namespace coarse
