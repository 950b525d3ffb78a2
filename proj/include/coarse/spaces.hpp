#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "coarse/heintze.hpp"
#include "coarse/util.hpp"

namespace coarse {

enum class ModelTag { HalfPlane, Hyperboloid, RegularTree, HeintzeLog, Matrix };
const char* model_name(ModelTag t);

// HalfPlane: (x, t), t > 0. Hyperboloid: Minkowski (x0, ..., xn). RegularTree:
// child indices from the root (first letter < valence, others < valence - 1),
// so every word is reduced. HeintzeLog: (N-coordinates..., height s).
// Matrix: (index) into an explicit distance matrix.
struct Point {
    ModelTag tag = ModelTag::HalfPlane;
    std::vector<double> coords;
};

// HalfPlane: coords {x} or infinite. Hyperboloid: unit vector in R^n.
// RegularTree: prefix + nonempty period. HeintzeLog: N-coordinates or omega
// (infinite flag).
struct BoundaryPoint {
    ModelTag tag = ModelTag::HalfPlane;
    std::vector<double> coords;
    bool infinite = false;
    std::vector<int> prefix;
    std::vector<int> period;
};

bool same_boundary_point(const BoundaryPoint& a, const BoundaryPoint& b);

class GeodesicImpl {
public:
    virtual ~GeodesicImpl() = default;
    virtual Point at(double s) const = 0;
    // Exact projection parameter if the model has one (trees).
    virtual std::optional<double> exact_project(const Point&) const { return std::nullopt; }
};

// Unit-speed parametrization on [lo, hi] (either end may be infinite).
struct GeodesicLine {
    std::shared_ptr<const GeodesicImpl> impl;
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    std::optional<BoundaryPoint> end_lo, end_hi;
    Point at(double s) const { return impl->at(s); }
    double clamp(double s) const { return s < lo ? lo : (s > hi ? hi : s); }
};

struct RegionSpec {
    double radius = 5.0;  // ball about the basepoint
};

class Space {
public:
    virtual ~Space() = default;
    virtual ModelTag tag() const = 0;
    virtual std::string name() const = 0;
    virtual Point basepoint() const = 0;
    virtual double raw_distance(const Point& a, const Point& b) const = 0;
    double distance(const Point& a, const Point& b) const;

    virtual GeodesicLine geodesic(const Point& a, const Point& b) const;
    virtual GeodesicLine geodesic(const BoundaryPoint& a, const BoundaryPoint& b) const;
    virtual GeodesicLine geodesic(const Point& a, const BoundaryPoint& b) const;
    // Ray toward xi; from the basepoint unless the model documents otherwise.
    virtual GeodesicLine ray(const BoundaryPoint& xi) const;

    virtual std::vector<Point> sample(const RegionSpec& region, std::size_t n, std::uint64_t seed) const;
    virtual BoundaryPoint random_boundary_point(Rng& g) const;
    // Closed-form boundary Gromov product seen from the basepoint, if any.
    virtual std::optional<double> boundary_product_closed_form(const BoundaryPoint& a,
                                                               const BoundaryPoint& b) const;
    // Boundary chart: coordinates of the ideal point "seen" through p.
    virtual std::vector<double> chart(const Point& p) const;
    virtual std::vector<double> chart(const BoundaryPoint& xi) const;
    virtual double chart_distance(const std::vector<double>& a, const std::vector<double>& b) const;
    virtual BoundaryPoint from_chart(const std::vector<double>& c) const;

    double norm(const Point& p) const { return distance(basepoint(), p); }
};

using SpacePtr = std::shared_ptr<const Space>;

class HalfPlane : public Space {
public:
    ModelTag tag() const override { return ModelTag::HalfPlane; }
    std::string name() const override { return "halfplane"; }
    Point basepoint() const override { return {ModelTag::HalfPlane, {0.0, 1.0}}; }
    double raw_distance(const Point& a, const Point& b) const override;
    GeodesicLine geodesic(const Point& a, const Point& b) const override;
    GeodesicLine geodesic(const BoundaryPoint& a, const BoundaryPoint& b) const override;
    GeodesicLine geodesic(const Point& a, const BoundaryPoint& b) const override;
    GeodesicLine ray(const BoundaryPoint& xi) const override;
    std::vector<Point> sample(const RegionSpec& region, std::size_t n, std::uint64_t seed) const override;
    BoundaryPoint random_boundary_point(Rng& g) const override;
    std::optional<double> boundary_product_closed_form(const BoundaryPoint& a,
                                                       const BoundaryPoint& b) const override;
    std::vector<double> chart(const Point& p) const override;
    std::vector<double> chart(const BoundaryPoint& xi) const override;
    double chart_distance(const std::vector<double>& a, const std::vector<double>& b) const override;
    BoundaryPoint from_chart(const std::vector<double>& c) const override;

    static Point point(double x, double t) { return {ModelTag::HalfPlane, {x, t}}; }
    static BoundaryPoint ideal(double x) { return {ModelTag::HalfPlane, {x}, false, {}, {}}; }
    static BoundaryPoint infinity() { return {ModelTag::HalfPlane, {}, true, {}, {}}; }
    // Point at distance rho from p in direction angle (measured as in the disk model at p).
    static Point offset(const Point& p, double rho, double angle);
    // Angle at p, in the convention of offset(), of the geodesic from p to q.
    static double direction(const Point& p, const Point& q);
    // Geodesic with given ideal endpoints, parameter 0 at the given offset.
    static GeodesicLine line(const BoundaryPoint& e1, const BoundaryPoint& e2, double s0);
    // Hyperbolic distance between the geodesic lines (a1 a2) and (b1 b2); 0 if they cross.
    static double line_distance(const BoundaryPoint& a1, const BoundaryPoint& a2, const BoundaryPoint& b1,
                                const BoundaryPoint& b2);
    // Closed-form projection parameter onto a full line (test oracle).
    static double closest_param(const GeodesicLine& g, const Point& p);
};

class Hyperboloid : public Space {
public:
    explicit Hyperboloid(int n) : n_(n) {}
    int dim() const { return n_; }
    ModelTag tag() const override { return ModelTag::Hyperboloid; }
    std::string name() const override { return "hyperboloid" + std::to_string(n_); }
    Point basepoint() const override;
    double raw_distance(const Point& a, const Point& b) const override;
    GeodesicLine geodesic(const Point& a, const Point& b) const override;
    GeodesicLine geodesic(const BoundaryPoint& a, const BoundaryPoint& b) const override;
    GeodesicLine ray(const BoundaryPoint& xi) const override;
    std::vector<Point> sample(const RegionSpec& region, std::size_t n, std::uint64_t seed) const override;
    BoundaryPoint random_boundary_point(Rng& g) const override;
    std::optional<double> boundary_product_closed_form(const BoundaryPoint& a,
                                                       const BoundaryPoint& b) const override;
    std::vector<double> chart(const Point& p) const override;
    std::vector<double> chart(const BoundaryPoint& xi) const override;
    double chart_distance(const std::vector<double>& a, const std::vector<double>& b) const override;
    BoundaryPoint from_chart(const std::vector<double>& c) const override;

    static BoundaryPoint ideal(const std::vector<double>& unit);

private:
    int n_;
};

class RegularTree : public Space {
public:
    explicit RegularTree(int valence) : q_(valence) {
        if (valence < 3) throw Error(ErrorCode::InvalidArgument, "tree valence must be at least 3");
    }
    int valence() const { return q_; }
    ModelTag tag() const override { return ModelTag::RegularTree; }
    std::string name() const override { return "tree" + std::to_string(q_); }
    Point basepoint() const override { return {ModelTag::RegularTree, {}}; }
    double raw_distance(const Point& a, const Point& b) const override;
    GeodesicLine geodesic(const Point& a, const Point& b) const override;
    GeodesicLine geodesic(const BoundaryPoint& a, const BoundaryPoint& b) const override;
    GeodesicLine ray(const BoundaryPoint& xi) const override;
    std::vector<Point> sample(const RegionSpec& region, std::size_t n, std::uint64_t seed) const override;
    BoundaryPoint random_boundary_point(Rng& g) const override;
    std::optional<double> boundary_product_closed_form(const BoundaryPoint& a,
                                                       const BoundaryPoint& b) const override;

    static Point vertex(const std::vector<int>& word);
    static Point vertex_d(std::vector<double> word);
    static int letter(const BoundaryPoint& xi, std::size_t i);
    bool valid_word(const std::vector<double>& w) const;

private:
    int q_;
};

// Log-model of a Heintze group: d((n,s),(n',t)) = 2 log(rho(n,n') + e^{max(s,t)}) - s - t.
class HeintzeLog : public Space {
public:
    explicit HeintzeLog(HeintzeSpec spec);
    const HeintzeSpec& spec() const { return spec_; }
    ModelTag tag() const override { return ModelTag::HeintzeLog; }
    std::string name() const override { return "heintze_log:" + spec_.label(); }
    Point basepoint() const override;
    double raw_distance(const Point& a, const Point& b) const override;
    GeodesicLine geodesic(const Point& a, const Point& b) const override;
    // Vertical ray from (xi, 0) downward; asymptotic to any ray toward xi.
    GeodesicLine ray(const BoundaryPoint& xi) const override;
    std::vector<Point> sample(const RegionSpec& region, std::size_t n, std::uint64_t seed) const override;
    BoundaryPoint random_boundary_point(Rng& g) const override;
    std::optional<double> boundary_product_closed_form(const BoundaryPoint& a,
                                                       const BoundaryPoint& b) const override;
    std::vector<double> chart(const Point& p) const override;
    std::vector<double> chart(const BoundaryPoint& xi) const override;
    double chart_distance(const std::vector<double>& a, const std::vector<double>& b) const override;
    BoundaryPoint from_chart(const std::vector<double>& c) const override;

    // Additive defect of the triangle inequality measured on random triples.
    double measure_additive_constant(std::size_t triples, std::uint64_t seed) const;

private:
    HeintzeSpec spec_;
};

// Distance perturbed multiplicatively by a deterministic symmetric noise in
// [0, amplitude]; breaks the triangle inequality. Negative control only.
class CorruptedSpace : public Space {
public:
    CorruptedSpace(SpacePtr inner, double amplitude) : inner_(std::move(inner)), amp_(amplitude) {}
    ModelTag tag() const override { return inner_->tag(); }
    std::string name() const override { return "corrupted:" + inner_->name(); }
    Point basepoint() const override { return inner_->basepoint(); }
    double raw_distance(const Point& a, const Point& b) const override;
    GeodesicLine geodesic(const Point& a, const Point& b) const override { return inner_->geodesic(a, b); }
    GeodesicLine geodesic(const BoundaryPoint& a, const BoundaryPoint& b) const override {
        return inner_->geodesic(a, b);
    }
    GeodesicLine geodesic(const Point& a, const BoundaryPoint& b) const override { return inner_->geodesic(a, b); }
    GeodesicLine ray(const BoundaryPoint& xi) const override { return inner_->ray(xi); }
    std::vector<Point> sample(const RegionSpec& r, std::size_t n, std::uint64_t seed) const override {
        return inner_->sample(r, n, seed);
    }
    BoundaryPoint random_boundary_point(Rng& g) const override { return inner_->random_boundary_point(g); }
    std::optional<double> boundary_product_closed_form(const BoundaryPoint& a,
                                                       const BoundaryPoint& b) const override {
        return inner_->boundary_product_closed_form(a, b);
    }

private:
    SpacePtr inner_;
    double amp_;
};

struct ProjectionResult {
    Point point;
    double param = 0.0;
    double dist = 0.0;
};

// Golden-section search after bracketing by doubling; parameter tolerance 1e-7.
ProjectionResult project_to_geodesic(const Space& space, const GeodesicLine& g, const Point& b,
                                     double tol = 1e-7);
double distance_to_geodesic(const Space& space, const GeodesicLine& g, const Point& b);

// d(im g1, im g2) over the parameter window [-window, window] of infinite ends:
// grid of the given step on g2, then golden-section refinement.
double distance_between_geodesics(const Space& space, const GeodesicLine& g1, const GeodesicLine& g2,
                                  double window = 40.0, double step = 0.05);

struct Configuration {
    ModelTag model = ModelTag::Matrix;
    std::string model_name;
    std::vector<Point> points;
    std::size_t n = 0;
    std::vector<double> dist;  // n x n row-major
    std::size_t basepoint = 0;

    double d(std::size_t i, std::size_t j) const { return dist[i * n + j]; }
    static Configuration from_matrix(std::size_t n, const std::vector<double>& full, std::size_t base = 0);
    static Configuration from_points(const Space& space, std::vector<Point> pts, std::size_t base = 0);
    Configuration subset(const std::vector<std::size_t>& idx) const;
    // Max triangle-inequality defect.
    double triangle_defect() const;
    nlohmann::json to_json() const;
    static Configuration from_json(const nlohmann::json& j);
};

// Point 0 is the basepoint; the other n - 1 are sampled in the region.
Configuration sample_configuration(const Space& space, const RegionSpec& region, std::size_t n,
                                   std::uint64_t seed);

// Hyperbolic plane in Fermi coordinates (a, b) about a fixed geodesic axis:
// a = signed distance to the axis, b = arclength of the foot point. Used for
// very long rays where half-plane coordinates would overflow.
namespace fermi {
double distance(double a1, double b1, double a2, double b2);
// Distance from (a, b) to the ray {(0, s) : s >= 0}.
double distance_to_axis_ray(double a, double b);
// Angle at the origin between the axis and the geodesic through (a, b).
double angle(double a, double b);
Point to_halfplane(double a, double b);
}  // namespace fermi

}  // namespace coarse
