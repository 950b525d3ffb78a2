#include "coarse/spaces.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <numeric>

namespace coarse {

namespace {

double logaddexp(double a, double b) {
    if (a == -INFINITY) return b;
    if (b == -INFINITY) return a;
    double m = std::max(a, b);
    return m + std::log1p(std::exp(-std::abs(a - b)));
}

double logcosh(double x) {
    x = std::abs(x);
    return x + std::log1p(std::exp(-2 * x)) - std::log(2.0);
}

double logsinh(double y) {
    if (y < 1.0) return std::log(std::sinh(y));
    return y + std::log1p(-std::exp(-2 * y)) - std::log(2.0);
}

void require(const Point& p, ModelTag t) {
    if (p.tag != t) throw Error(ErrorCode::ModelMismatch, "point from a different model");
}
void require(const BoundaryPoint& p, ModelTag t) {
    if (p.tag != t) throw Error(ErrorCode::ModelMismatch, "boundary point from a different model");
}

double sgn(double x) { return x < 0 ? -1.0 : 1.0; }

}  // namespace

const char* model_name(ModelTag t) {
    switch (t) {
        case ModelTag::HalfPlane: return "halfplane";
        case ModelTag::Hyperboloid: return "hyperboloid";
        case ModelTag::RegularTree: return "tree";
        case ModelTag::HeintzeLog: return "heintze_log";
        case ModelTag::Matrix: return "matrix";
    }
    return "?";
}

bool same_boundary_point(const BoundaryPoint& a, const BoundaryPoint& b) {
    if (a.tag != b.tag) return false;
    if (a.infinite || b.infinite) return a.infinite == b.infinite;
    if (a.tag == ModelTag::RegularTree) {
        std::size_t n = std::max(a.prefix.size(), b.prefix.size()) + a.period.size() * b.period.size() + 1;
        for (std::size_t i = 0; i < n; ++i)
            if (RegularTree::letter(a, i) != RegularTree::letter(b, i)) return false;
        return true;
    }
    return a.coords == b.coords;
}

// ---------------------------------------------------------------- Space defaults

double Space::distance(const Point& a, const Point& b) const {
    if (a.tag != tag() || b.tag != tag()) throw Error(ErrorCode::ModelMismatch, "point not in " + name());
    return raw_distance(a, b);
}

GeodesicLine Space::geodesic(const Point&, const Point&) const {
    throw Error(ErrorCode::InvalidArgument, "no geodesics between points in " + name());
}
GeodesicLine Space::geodesic(const BoundaryPoint&, const BoundaryPoint&) const {
    throw Error(ErrorCode::InvalidArgument, "no bi-infinite geodesics in " + name());
}
GeodesicLine Space::geodesic(const Point& a, const BoundaryPoint& b) const {
    if (raw_distance(a, basepoint()) == 0.0) return ray(b);
    throw Error(ErrorCode::InvalidArgument, "no rays from arbitrary points in " + name());
}
GeodesicLine Space::ray(const BoundaryPoint&) const {
    throw Error(ErrorCode::InvalidArgument, "no rays in " + name());
}
std::vector<Point> Space::sample(const RegionSpec&, std::size_t, std::uint64_t) const {
    throw Error(ErrorCode::InvalidArgument, "no sampler for " + name());
}
BoundaryPoint Space::random_boundary_point(Rng&) const {
    throw Error(ErrorCode::InvalidArgument, "no boundary sampler for " + name());
}
std::optional<double> Space::boundary_product_closed_form(const BoundaryPoint&, const BoundaryPoint&) const {
    return std::nullopt;
}
std::vector<double> Space::chart(const Point&) const {
    throw Error(ErrorCode::InvalidArgument, "no boundary chart for " + name());
}
std::vector<double> Space::chart(const BoundaryPoint&) const {
    throw Error(ErrorCode::InvalidArgument, "no boundary chart for " + name());
}
double Space::chart_distance(const std::vector<double>&, const std::vector<double>&) const {
    throw Error(ErrorCode::InvalidArgument, "no boundary chart for " + name());
}
BoundaryPoint Space::from_chart(const std::vector<double>&) const {
    throw Error(ErrorCode::InvalidArgument, "no boundary chart for " + name());
}

// ---------------------------------------------------------------- HalfPlane

namespace {

// Line with ideal endpoints e1 -> e2; at(s) = base(s + s0).
struct HPLine : GeodesicImpl {
    bool inf1 = false, inf2 = false;
    double e1 = 0, e2 = 0, s0 = 0;

    Point at(double s) const override {
        double u = s + s0;
        if (inf1) return HalfPlane::point(e2, std::exp(-u));
        if (inf2) return HalfPlane::point(e1, std::exp(u));
        double w = e2 - e1;
        double x;
        if (u >= 0) {
            double E = std::exp(-2 * u);
            x = e2 - w * E / (1 + E);
        } else {
            double E = std::exp(2 * u);
            x = e1 + w * E / (1 + E);
        }
        double a = std::abs(u);
        double t = std::abs(w) * std::exp(-a) / (1 + std::exp(-2 * a));
        return HalfPlane::point(x, t);
    }
    std::optional<double> exact_project(const Point& p) const override { return foot(p) - s0; }
    // Parameter (relative to s0 = 0) of the foot of p.
    double foot(const Point& p) const {
        double px = p.coords[0], pt = p.coords[1];
        if (inf1 || inf2) {
            double c = inf1 ? e2 : e1;
            double h = 0.5 * std::log((c - px) * (c - px) + pt * pt);
            return inf1 ? -h : h;
        }
        double c = 0.5 * (e1 + e2), R = 0.5 * std::abs(e2 - e1), sg = sgn(e2 - e1);
        double A = (c - px) * (c - px) + R * R + pt * pt;
        double B = 2 * R * sg * (c - px);
        return std::atanh(-B / A);
    }
};

GeodesicLine make_hp_line(const BoundaryPoint& a, const BoundaryPoint& b, double s0) {
    auto L = std::make_shared<HPLine>();
    L->inf1 = a.infinite;
    L->inf2 = b.infinite;
    if (!a.infinite) L->e1 = a.coords[0];
    if (!b.infinite) L->e2 = b.coords[0];
    if (a.infinite && b.infinite) L->e1 = L->e2 = 0;
    L->s0 = s0;
    GeodesicLine g;
    g.impl = L;
    g.end_lo = a;
    g.end_hi = b;
    return g;
}

}  // namespace

double HalfPlane::raw_distance(const Point& a, const Point& b) const {
    double dx = a.coords[0] - b.coords[0], dt = a.coords[1] - b.coords[1];
    return 2 * std::asinh(std::hypot(dx, dt) / (2 * std::sqrt(a.coords[1] * b.coords[1])));
}

GeodesicLine HalfPlane::line(const BoundaryPoint& e1, const BoundaryPoint& e2, double s0) {
    if (same_boundary_point(e1, e2)) throw Error(ErrorCode::DegenerateEndpoints, "equal ideal endpoints");
    return make_hp_line(e1, e2, s0);
}

double HalfPlane::closest_param(const GeodesicLine& g, const Point& p) {
    auto L = std::dynamic_pointer_cast<const HPLine>(g.impl);
    if (!L) throw Error(ErrorCode::ModelMismatch, "not a half-plane line");
    return L->foot(p) - L->s0;
}

GeodesicLine HalfPlane::geodesic(const Point& a, const Point& b) const {
    require(a, tag());
    require(b, tag());
    double ax = a.coords[0], at_ = a.coords[1], bx = b.coords[0], bt = b.coords[1];
    double d = raw_distance(a, b);
    GeodesicLine g;
    if (ax == bx || std::abs(bx - ax) < 1e-14 * std::min(at_, bt)) {
        if (bt >= at_)
            g = make_hp_line(ideal(ax), infinity(), std::log(at_));
        else
            g = make_hp_line(infinity(), ideal(ax), -std::log(at_));
    } else {
        double c = 0.5 * (ax + bx) + (bt * bt - at_ * at_) / (2 * (bx - ax));
        double R = std::hypot(ax - c, at_);
        double ua = std::asinh((ax - c) / at_), ub = std::asinh((bx - c) / bt);
        if (ua < ub)
            g = make_hp_line(ideal(c - R), ideal(c + R), ua);
        else
            g = make_hp_line(ideal(c + R), ideal(c - R), -ua);
    }
    g.lo = 0;
    g.hi = d;
    g.end_lo.reset();
    g.end_hi.reset();
    return g;
}

GeodesicLine HalfPlane::geodesic(const BoundaryPoint& a, const BoundaryPoint& b) const {
    require(a, tag());
    require(b, tag());
    GeodesicLine g = line(a, b, 0.0);
    auto L = std::dynamic_pointer_cast<const HPLine>(g.impl);
    double u = L->foot(basepoint());
    return line(a, b, u);
}

GeodesicLine HalfPlane::geodesic(const Point& a, const BoundaryPoint& b) const {
    require(a, tag());
    require(b, tag());
    double ax = a.coords[0], at_ = a.coords[1];
    GeodesicLine g;
    if (b.infinite) {
        g = make_hp_line(ideal(ax), infinity(), std::log(at_));
    } else {
        double xb = b.coords[0];
        if (ax == xb) {
            g = make_hp_line(infinity(), ideal(ax), -std::log(at_));
        } else {
            double c = 0.5 * (ax + xb) + at_ * at_ / (2 * (ax - xb));
            double e1 = 2 * c - xb;
            double sg = sgn(xb - e1);
            g = make_hp_line(ideal(e1), b, std::asinh(sg * (ax - c) / at_));
        }
    }
    g.lo = 0;
    g.end_lo.reset();
    return g;
}

GeodesicLine HalfPlane::ray(const BoundaryPoint& xi) const { return geodesic(basepoint(), xi); }

Point HalfPlane::offset(const Point& p, double rho, double angle) {
    std::complex<double> w = std::tanh(rho / 2) * std::polar(1.0, angle);
    std::complex<double> I(0, 1);
    std::complex<double> z = I * (1.0 + w) / (1.0 - w);
    double x = p.coords[0] + p.coords[1] * z.real();
    double t = p.coords[1] * z.imag();
    if (rho > 30) {
        // tanh saturates; use 1 - |w| = 2/(e^rho + 1) to keep the height accurate.
        double eps = 2.0 / (std::exp(rho) + 1.0);
        double den = std::norm(1.0 - w);
        t = p.coords[1] * (2 * eps - eps * eps) / den;
    }
    return point(x, t);
}

std::vector<Point> HalfPlane::sample(const RegionSpec& region, std::size_t n, std::uint64_t seed) const {
    std::vector<Point> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Rng g = make_rng(seed, i);
        double U = uniform(g, 0, 1);
        // cosh r - 1 uniform in [0, cosh R - 1], computed without cancellation.
        double r = 2 * std::asinh(std::sqrt(U) * std::sinh(region.radius / 2));
        double th = uniform(g, -kPi, kPi);
        out.push_back(offset(basepoint(), r, th));
    }
    return out;
}

BoundaryPoint HalfPlane::random_boundary_point(Rng& g) const {
    return from_chart({uniform(g, -kPi, kPi)});
}

std::optional<double> HalfPlane::boundary_product_closed_form(const BoundaryPoint& a,
                                                              const BoundaryPoint& b) const {
    require(a, tag());
    require(b, tag());
    if (same_boundary_point(a, b)) throw Error(ErrorCode::DegenerateEndpoints, "equal boundary points");
    if (a.infinite) return 0.5 * std::log1p(b.coords[0] * b.coords[0]);
    if (b.infinite) return 0.5 * std::log1p(a.coords[0] * a.coords[0]);
    double x = a.coords[0], y = b.coords[0];
    return -std::log(std::abs(x - y)) + 0.5 * std::log1p(x * x) + 0.5 * std::log1p(y * y);
}

std::vector<double> HalfPlane::chart(const Point& p) const {
    std::complex<double> z(p.coords[0], p.coords[1]), I(0, 1);
    return {std::arg((z - I) / (z + I))};
}
std::vector<double> HalfPlane::chart(const BoundaryPoint& xi) const {
    if (xi.infinite) return {0.0};
    std::complex<double> z(xi.coords[0], 0.0), I(0, 1);
    return {std::arg((z - I) / (z + I))};
}
double HalfPlane::chart_distance(const std::vector<double>& a, const std::vector<double>& b) const {
    double d = std::fmod(std::abs(a[0] - b[0]), 2 * kPi);
    return std::min(d, 2 * kPi - d);
}
BoundaryPoint HalfPlane::from_chart(const std::vector<double>& c) const {
    double th = std::remainder(c[0], 2 * kPi);
    if (th == 0.0) return infinity();
    return ideal(-1.0 / std::tan(th / 2));
}

double HalfPlane::direction(const Point& p, const Point& q) {
    std::complex<double> z((q.coords[0] - p.coords[0]) / p.coords[1], q.coords[1] / p.coords[1]), I(0, 1);
    return std::arg((z - I) / (z + I));
}

double HalfPlane::line_distance(const BoundaryPoint& a1, const BoundaryPoint& a2, const BoundaryPoint& b1,
                                const BoundaryPoint& b2) {
    // Cross-ratio of the four endpoints, with infinite entries dropped.
    auto diff = [](const BoundaryPoint& p, const BoundaryPoint& q) -> std::optional<double> {
        if (p.infinite || q.infinite) return std::nullopt;
        return p.coords[0] - q.coords[0];
    };
    auto num1 = diff(a1, b1), num2 = diff(a2, b2), den1 = diff(a1, b2), den2 = diff(a2, b1);
    double Q = 1.0;
    for (auto& v : {num1, num2})
        if (v) Q *= *v;
    for (auto& v : {den1, den2})
        if (v) Q /= *v;
    if (!(Q > 0)) return 0.0;  // linked or touching
    if (Q > 1) Q = 1 / Q;
    return 2 * std::atanh(std::sqrt(Q));
}

// ---------------------------------------------------------------- Hyperboloid

namespace {

double mink(const std::vector<double>& a, const std::vector<double>& b) {
    double s = -a[0] * b[0];
    for (std::size_t i = 1; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

struct HypLine : GeodesicImpl {
    // at(s) = cosh(s) p + sinh(s) u, or e^s P + e^{-s} Q when null.
    bool null_form = false;
    std::vector<double> p, u;
    Point at(double s) const override {
        std::vector<double> x(p.size());
        if (null_form) {
            double a = std::exp(s), b = std::exp(-s);
            for (std::size_t i = 0; i < x.size(); ++i) x[i] = a * p[i] + b * u[i];
        } else {
            double c = std::cosh(s), sh = std::sinh(s);
            for (std::size_t i = 0; i < x.size(); ++i) x[i] = c * p[i] + sh * u[i];
        }
        return {ModelTag::Hyperboloid, x};
    }
    std::optional<double> exact_project(const Point& q) const override {
        double A = -mink(q.coords, p), B = -mink(q.coords, u);
        if (null_form) return 0.5 * std::log(B / A);
        return std::atanh(std::clamp(-B / A, -1.0, 1.0));
    }
};

std::vector<double> null_vec(const BoundaryPoint& xi) {
    std::vector<double> v{1.0};
    v.insert(v.end(), xi.coords.begin(), xi.coords.end());
    return v;
}

}  // namespace

BoundaryPoint Hyperboloid::ideal(const std::vector<double>& unit) {
    double n = 0;
    for (double v : unit) n += v * v;
    n = std::sqrt(n);
    if (n == 0) throw Error(ErrorCode::InvalidArgument, "zero direction");
    BoundaryPoint b{ModelTag::Hyperboloid, unit, false, {}, {}};
    for (double& v : b.coords) v /= n;
    return b;
}

Point Hyperboloid::basepoint() const {
    std::vector<double> x(n_ + 1, 0.0);
    x[0] = 1.0;
    return {ModelTag::Hyperboloid, x};
}

double Hyperboloid::raw_distance(const Point& a, const Point& b) const {
    double B = -mink(a.coords, b.coords);
    if (B > 2) return std::acosh(B);
    std::vector<double> d(a.coords.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = a.coords[i] - b.coords[i];
    double q = std::max(0.0, mink(d, d));
    return 2 * std::asinh(std::sqrt(q) / 2);
}

GeodesicLine Hyperboloid::geodesic(const Point& a, const Point& b) const {
    require(a, tag());
    require(b, tag());
    double d = raw_distance(a, b);
    auto L = std::make_shared<HypLine>();
    L->p = a.coords;
    L->u.assign(a.coords.size(), 0.0);
    if (d > 0) {
        double c = std::cosh(d), s = std::sinh(d);
        for (std::size_t i = 0; i < L->u.size(); ++i) L->u[i] = (b.coords[i] - c * a.coords[i]) / s;
    }
    GeodesicLine g;
    g.impl = L;
    g.lo = 0;
    g.hi = d;
    return g;
}

GeodesicLine Hyperboloid::geodesic(const BoundaryPoint& a, const BoundaryPoint& b) const {
    require(a, tag());
    require(b, tag());
    double dot = 0;
    for (int i = 0; i < n_; ++i) dot += a.coords[i] * b.coords[i];
    if (1 - dot < 1e-15) throw Error(ErrorCode::DegenerateEndpoints, "equal ideal endpoints");
    double al = 1 / std::sqrt(2 * (1 - dot));
    auto L = std::make_shared<HypLine>();
    L->null_form = true;
    L->p = null_vec(b);
    L->u = null_vec(a);
    for (auto& v : L->p) v *= al;
    for (auto& v : L->u) v *= al;
    GeodesicLine g;
    g.impl = L;
    g.end_lo = a;
    g.end_hi = b;
    return g;
}

GeodesicLine Hyperboloid::ray(const BoundaryPoint& xi) const {
    require(xi, tag());
    auto L = std::make_shared<HypLine>();
    L->p = basepoint().coords;
    L->u = null_vec(xi);
    L->u[0] = 0;
    GeodesicLine g;
    g.impl = L;
    g.lo = 0;
    g.end_hi = xi;
    return g;
}

std::vector<Point> Hyperboloid::sample(const RegionSpec& region, std::size_t n, std::uint64_t seed) const {
    // Radial density proportional to sinh^{n-1}(r), by a tabulated inverse CDF.
    const int G = 4000;
    std::vector<double> cdf(G + 1, 0.0);
    double R = region.radius;
    double top = (n_ - 1) * logsinh(R);
    for (int i = 1; i <= G; ++i) {
        double r = R * (i - 0.5) / G;
        cdf[i] = cdf[i - 1] + std::exp((n_ - 1) * logsinh(r) - top);
    }
    for (auto& c : cdf) c /= cdf[G];
    std::vector<Point> out;
    out.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        Rng g = make_rng(seed, k);
        double U = uniform(g, 0, 1);
        auto it = std::lower_bound(cdf.begin(), cdf.end(), U);
        int i = std::clamp<int>(int(it - cdf.begin()), 1, G);
        double f = (U - cdf[i - 1]) / std::max(1e-300, cdf[i] - cdf[i - 1]);
        double r = R * (i - 1 + f) / G;
        std::vector<double> dir(n_);
        double nn = 0;
        do {
            nn = 0;
            for (auto& v : dir) {
                v = normal(g);
                nn += v * v;
            }
        } while (nn == 0);
        nn = std::sqrt(nn);
        std::vector<double> x(n_ + 1);
        x[0] = std::cosh(r);
        for (int j = 0; j < n_; ++j) x[j + 1] = std::sinh(r) * dir[j] / nn;
        out.push_back({ModelTag::Hyperboloid, x});
    }
    return out;
}

BoundaryPoint Hyperboloid::random_boundary_point(Rng& g) const {
    std::vector<double> v(n_);
    for (auto& x : v) x = normal(g);
    return ideal(v);
}

std::optional<double> Hyperboloid::boundary_product_closed_form(const BoundaryPoint& a,
                                                                const BoundaryPoint& b) const {
    double s = 0;
    for (int i = 0; i < n_; ++i) s += (a.coords[i] - b.coords[i]) * (a.coords[i] - b.coords[i]);
    if (s == 0) throw Error(ErrorCode::DegenerateEndpoints, "equal boundary points");
    return -std::log(std::sqrt(s) / 2);
}

std::vector<double> Hyperboloid::chart(const Point& p) const {
    std::vector<double> v(p.coords.begin() + 1, p.coords.end());
    double n = 0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    if (n > 0)
        for (auto& x : v) x /= n;
    return v;
}
std::vector<double> Hyperboloid::chart(const BoundaryPoint& xi) const { return xi.coords; }
double Hyperboloid::chart_distance(const std::vector<double>& a, const std::vector<double>& b) const {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return 2 * std::asin(std::min(1.0, std::sqrt(s) / 2));
}
BoundaryPoint Hyperboloid::from_chart(const std::vector<double>& c) const { return ideal(c); }

// ---------------------------------------------------------------- RegularTree

namespace {

std::size_t lcp_words(const std::vector<double>& a, const std::vector<double>& b) {
    std::size_t m = 0, n = std::min(a.size(), b.size());
    while (m < n && a[m] == b[m]) ++m;
    return m;
}

std::size_t lcp_ray(const std::vector<double>& w, const BoundaryPoint& xi) {
    std::size_t m = 0;
    while (m < w.size() && int(w[m]) == RegularTree::letter(xi, m)) ++m;
    return m;
}

std::vector<double> ray_prefix(const BoundaryPoint& xi, std::size_t n) {
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = RegularTree::letter(xi, i);
    return w;
}

std::size_t step_of(double s) { return s <= 0 ? 0 : std::size_t(std::llround(s)); }

struct TreeSegment : GeodesicImpl {
    std::vector<double> a, b;
    std::size_t m = 0;
    Point at(double s) const override {
        std::size_t L = a.size() + b.size() - 2 * m;
        std::size_t k = std::min(step_of(s), L);
        std::size_t up = a.size() - m;
        if (k <= up) return RegularTree::vertex_d({a.begin(), a.end() - k});
        return RegularTree::vertex_d({b.begin(), b.begin() + m + (k - up)});
    }
    std::optional<double> exact_project(const Point& p) const override {
        std::size_t la = lcp_words(p.coords, a), lb = lcp_words(p.coords, b);
        if (la > m) return double(a.size() - la);
        if (lb > m) return double(a.size() - m + lb - m);
        return double(a.size() - m);
    }
};

struct TreeLine : GeodesicImpl {
    BoundaryPoint x, y;
    std::size_t m = 0;
    Point at(double s) const override {
        if (s < 0) return RegularTree::vertex_d(ray_prefix(x, m + step_of(-s)));
        return RegularTree::vertex_d(ray_prefix(y, m + step_of(s)));
    }
    std::optional<double> exact_project(const Point& p) const override {
        std::size_t lx = lcp_ray(p.coords, x), ly = lcp_ray(p.coords, y);
        if (lx > m) return -double(lx - m);
        if (ly > m) return double(ly - m);
        return 0.0;
    }
};

struct TreeRay : GeodesicImpl {
    BoundaryPoint x;
    Point at(double s) const override { return RegularTree::vertex_d(ray_prefix(x, step_of(s))); }
    std::optional<double> exact_project(const Point& p) const override { return double(lcp_ray(p.coords, x)); }
};

std::size_t lcp_boundary(const BoundaryPoint& a, const BoundaryPoint& b) {
    std::size_t n = std::max(a.prefix.size(), b.prefix.size()) + a.period.size() * b.period.size() + 1;
    for (std::size_t i = 0; i < n; ++i)
        if (RegularTree::letter(a, i) != RegularTree::letter(b, i)) return i;
    throw Error(ErrorCode::DegenerateEndpoints, "equal boundary points");
}

}  // namespace

Point RegularTree::vertex(const std::vector<int>& word) {
    return {ModelTag::RegularTree, std::vector<double>(word.begin(), word.end())};
}

Point RegularTree::vertex_d(std::vector<double> word) { return {ModelTag::RegularTree, std::move(word)}; }

int RegularTree::letter(const BoundaryPoint& xi, std::size_t i) {
    if (i < xi.prefix.size()) return xi.prefix[i];
    if (xi.period.empty()) throw Error(ErrorCode::InvalidArgument, "boundary word needs a period");
    return xi.period[(i - xi.prefix.size()) % xi.period.size()];
}

bool RegularTree::valid_word(const std::vector<double>& w) const {
    for (std::size_t i = 0; i < w.size(); ++i) {
        int lim = i == 0 ? q_ : q_ - 1;
        if (w[i] != std::floor(w[i]) || w[i] < 0 || w[i] >= lim) return false;
    }
    return true;
}

double RegularTree::raw_distance(const Point& a, const Point& b) const {
    std::size_t m = lcp_words(a.coords, b.coords);
    return double(a.coords.size() + b.coords.size() - 2 * m);
}

GeodesicLine RegularTree::geodesic(const Point& a, const Point& b) const {
    require(a, tag());
    require(b, tag());
    auto L = std::make_shared<TreeSegment>();
    L->a = a.coords;
    L->b = b.coords;
    L->m = lcp_words(a.coords, b.coords);
    GeodesicLine g;
    g.impl = L;
    g.lo = 0;
    g.hi = raw_distance(a, b);
    return g;
}

GeodesicLine RegularTree::geodesic(const BoundaryPoint& a, const BoundaryPoint& b) const {
    require(a, tag());
    require(b, tag());
    auto L = std::make_shared<TreeLine>();
    L->x = a;
    L->y = b;
    L->m = lcp_boundary(a, b);
    GeodesicLine g;
    g.impl = L;
    g.end_lo = a;
    g.end_hi = b;
    return g;
}

GeodesicLine RegularTree::ray(const BoundaryPoint& xi) const {
    require(xi, tag());
    auto L = std::make_shared<TreeRay>();
    L->x = xi;
    GeodesicLine g;
    g.impl = L;
    g.lo = 0;
    g.end_hi = xi;
    return g;
}

std::vector<Point> RegularTree::sample(const RegionSpec& region, std::size_t n, std::uint64_t seed) const {
    int R = int(std::floor(region.radius));
    std::vector<Point> out;
    out.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        Rng g = make_rng(seed, k);
        int depth = int(std::floor(uniform(g, 0, R + 1)));
        std::vector<double> w(depth);
        for (int i = 0; i < depth; ++i) {
            int lim = i == 0 ? q_ : q_ - 1;
            w[i] = std::min(lim - 1, int(std::floor(uniform(g, 0, lim))));
        }
        out.push_back({ModelTag::RegularTree, w});
    }
    return out;
}

BoundaryPoint RegularTree::random_boundary_point(Rng& g) const {
    BoundaryPoint b{ModelTag::RegularTree, {}, false, {}, {}};
    int plen = int(std::floor(uniform(g, 0, 9)));
    int per = 1 + int(std::floor(uniform(g, 0, 4)));
    for (int i = 0; i < plen; ++i) {
        int lim = i == 0 ? q_ : q_ - 1;
        b.prefix.push_back(std::min(lim - 1, int(std::floor(uniform(g, 0, lim)))));
    }
    for (int i = 0; i < per; ++i) b.period.push_back(std::min(q_ - 2, int(std::floor(uniform(g, 0, q_ - 1)))));
    return b;
}

std::optional<double> RegularTree::boundary_product_closed_form(const BoundaryPoint& a,
                                                                const BoundaryPoint& b) const {
    return double(lcp_boundary(a, b));
}

// ---------------------------------------------------------------- HeintzeLog

namespace {

struct VerticalLine : GeodesicImpl {
    std::vector<double> n;
    double s0 = 0, dir = 1;
    Point at(double s) const override {
        std::vector<double> c = n;
        c.push_back(s0 + dir * s);
        return {ModelTag::HeintzeLog, c};
    }
};

}  // namespace

HeintzeLog::HeintzeLog(HeintzeSpec spec) : spec_(spec.normalized ? spec : normalize(spec)) { spec_.validate(); }

Point HeintzeLog::basepoint() const { return {ModelTag::HeintzeLog, std::vector<double>(spec_.dim() + 1, 0.0)}; }

double HeintzeLog::raw_distance(const Point& a, const Point& b) const {
    int D = spec_.dim();
    std::vector<double> na(a.coords.begin(), a.coords.begin() + D), nb(b.coords.begin(), b.coords.begin() + D);
    double s = a.coords[D], t = b.coords[D];
    double rho = homogeneous_quasimetric(spec_, na, nb);
    double M = std::max(s, t);
    if (rho == 0) return std::abs(s - t);
    return 2 * logaddexp(std::log(rho), M) - s - t;
}

GeodesicLine HeintzeLog::geodesic(const Point& a, const Point& b) const {
    require(a, tag());
    require(b, tag());
    int D = spec_.dim();
    for (int i = 0; i < D; ++i)
        if (a.coords[i] != b.coords[i])
            throw Error(ErrorCode::InvalidArgument, "log model: exact geodesics only along vertical lines");
    auto L = std::make_shared<VerticalLine>();
    L->n.assign(a.coords.begin(), a.coords.begin() + D);
    L->s0 = a.coords[D];
    L->dir = b.coords[D] >= a.coords[D] ? 1 : -1;
    GeodesicLine g;
    g.impl = L;
    g.lo = 0;
    g.hi = std::abs(b.coords[D] - a.coords[D]);
    return g;
}

GeodesicLine HeintzeLog::ray(const BoundaryPoint& xi) const {
    require(xi, tag());
    auto L = std::make_shared<VerticalLine>();
    if (xi.infinite) {
        L->n.assign(spec_.dim(), 0.0);
        L->dir = 1;
    } else {
        L->n = xi.coords;
        L->dir = -1;
    }
    GeodesicLine g;
    g.impl = L;
    g.lo = 0;
    g.end_hi = xi;
    return g;
}

std::vector<Point> HeintzeLog::sample(const RegionSpec& region, std::size_t n, std::uint64_t seed) const {
    int D = spec_.dim();
    double R = region.radius;
    std::vector<Point> out;
    out.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        Rng g = make_rng(seed, k);
        double s = uniform(g, -R, R);
        // |(n, s)| <= R  iff  |n| <= e^{(R+s)/2} - e^{max(s,0)}.
        double cap = std::exp((R + s) / 2) - std::exp(std::max(s, 0.0));
        std::vector<double> c(D, 0.0);
        if (cap > std::exp(s - 2)) {
            double rho = std::exp(uniform(g, s - 2, std::log(cap)));
            std::vector<double> u(D);
            double q = 0;
            do {
                for (auto& x : u) x = uniform(g, -1, 1);
                q = quasinorm(spec_, u);
            } while (q < 1e-6);
            c = dilate(spec_, std::log(rho / q), u);
        }
        c.push_back(s);
        out.push_back({ModelTag::HeintzeLog, c});
    }
    return out;
}

BoundaryPoint HeintzeLog::random_boundary_point(Rng& g) const {
    std::vector<double> u(spec_.dim());
    for (auto& x : u) x = uniform(g, -1, 1);
    return {ModelTag::HeintzeLog, u, false, {}, {}};
}

std::optional<double> HeintzeLog::boundary_product_closed_form(const BoundaryPoint& a,
                                                               const BoundaryPoint& b) const {
    require(a, tag());
    require(b, tag());
    if (same_boundary_point(a, b)) throw Error(ErrorCode::DegenerateEndpoints, "equal boundary points");
    if (a.infinite) return std::log1p(quasinorm(spec_, b.coords));
    if (b.infinite) return std::log1p(quasinorm(spec_, a.coords));
    return std::log1p(quasinorm(spec_, a.coords)) + std::log1p(quasinorm(spec_, b.coords)) -
           std::log(homogeneous_quasimetric(spec_, a.coords, b.coords));
}

std::vector<double> HeintzeLog::chart(const Point& p) const {
    return {p.coords.begin(), p.coords.begin() + spec_.dim()};
}
std::vector<double> HeintzeLog::chart(const BoundaryPoint& xi) const {
    if (xi.infinite) return {};
    return xi.coords;
}
double HeintzeLog::chart_distance(const std::vector<double>& a, const std::vector<double>& b) const {
    if (a.empty() || b.empty()) return a.empty() && b.empty() ? 0.0 : INFINITY;
    return homogeneous_quasimetric(spec_, a, b);
}
BoundaryPoint HeintzeLog::from_chart(const std::vector<double>& c) const {
    if (c.empty()) return {ModelTag::HeintzeLog, {}, true, {}, {}};
    return {ModelTag::HeintzeLog, c, false, {}, {}};
}

double HeintzeLog::measure_additive_constant(std::size_t triples, std::uint64_t seed) const {
    auto pts = sample({8.0}, 3 * triples, seed);
    double worst = 0;
    for (std::size_t i = 0; i < triples; ++i) {
        const auto &x = pts[3 * i], &y = pts[3 * i + 1], &z = pts[3 * i + 2];
        double dxy = raw_distance(x, y), dyz = raw_distance(y, z), dxz = raw_distance(x, z);
        worst = std::max({worst, dxz - dxy - dyz, dxy - dxz - dyz, dyz - dxy - dxz});
    }
    return worst;
}

// ---------------------------------------------------------------- CorruptedSpace

double CorruptedSpace::raw_distance(const Point& a, const Point& b) const {
    double d = inner_->raw_distance(a, b);
    auto h = [](const Point& p) {
        std::string bytes(p.coords.size() * sizeof(double), '\0');
        if (!p.coords.empty()) std::memcpy(bytes.data(), p.coords.data(), bytes.size());
        return fnv1a(bytes);
    };
    std::uint64_t ha = h(a), hb = h(b);
    std::uint64_t k = (ha ^ hb) + 0x2545f4914f6cdd1dULL * (ha + hb);
    k ^= k >> 31;
    k *= 0xbf58476d1ce4e5b9ULL;
    k ^= k >> 29;
    double noise = double(k >> 11) * 0x1.0p-53;
    return d * (1.0 + amp_ * noise);
}

// ---------------------------------------------------------------- projection

ProjectionResult project_to_geodesic(const Space& space, const GeodesicLine& g, const Point& b, double tol) {
    ProjectionResult r;
    if (auto s = g.impl->exact_project(b)) {
        r.param = g.clamp(*s);
        r.point = g.at(r.param);
        r.dist = space.distance(r.point, b);
        return r;
    }
    auto f = [&](double s) { return space.distance(g.at(s), b); };
    double lo, hi;
    if (std::isfinite(g.lo) && std::isfinite(g.hi)) {
        lo = g.lo;
        hi = g.hi;
    } else {
        double c = g.clamp(0.0);
        double fc = f(c);
        double dir = 0;
        if (g.clamp(c + 1) != c && f(g.clamp(c + 1)) < fc)
            dir = 1;
        else if (g.clamp(c - 1) != c && f(g.clamp(c - 1)) < fc)
            dir = -1;
        if (dir == 0) {
            lo = g.clamp(c - 1);
            hi = g.clamp(c + 1);
        } else {
            double prev = c, cur = g.clamp(c + dir), fcur = f(cur), step = 1;
            int it = 0;
            while (true) {
                step *= 2;
                double nxt = g.clamp(cur + dir * step);
                if (nxt == cur) break;
                double fn = f(nxt);
                if (!(fn < fcur)) {
                    cur = nxt;
                    break;
                }
                prev = cur;
                cur = nxt;
                fcur = fn;
                if (++it > 200) throw Error(ErrorCode::NonConvergence, "projection bracket diverged");
            }
            lo = std::min(prev, cur);
            hi = std::max(prev, cur);
        }
    }
    const double phi = 0.5 * (std::sqrt(5.0) - 1);
    double a = lo, bb = hi;
    double x1 = bb - phi * (bb - a), x2 = a + phi * (bb - a);
    double f1 = f(x1), f2 = f(x2);
    int it = 0;
    while (bb - a > tol * std::max(1.0, std::abs(a))) {
        if (f1 <= f2) {
            bb = x2;
            x2 = x1;
            f2 = f1;
            x1 = bb - phi * (bb - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (bb - a);
            f2 = f(x2);
        }
        if (++it > 400) throw Error(ErrorCode::NonConvergence, "golden-section search did not converge");
    }
    double s = 0.5 * (a + bb);
    double best = s, fb = f(s);
    for (double e : {lo, hi})
        if (std::isfinite(e)) {
            double fe = f(e);
            if (fe < fb) {
                fb = fe;
                best = e;
            }
        }
    r.param = best;
    r.point = g.at(best);
    r.dist = fb;
    return r;
}

double distance_to_geodesic(const Space& space, const GeodesicLine& g, const Point& b) {
    return project_to_geodesic(space, g, b).dist;
}

double distance_between_geodesics(const Space& space, const GeodesicLine& g1, const GeodesicLine& g2,
                                  double window, double step) {
    auto f = [&](double s) { return project_to_geodesic(space, g1, g2.at(s)).dist; };
    double lo = std::isfinite(g2.lo) ? g2.lo : -window, hi = std::isfinite(g2.hi) ? g2.hi : window;
    std::size_t n = std::max<std::size_t>(2, std::size_t(std::ceil((hi - lo) / step)) + 1);
    std::vector<double> G(n);
    for (std::size_t i = 0; i < n; ++i) G[i] = lo + (hi - lo) * double(i) / double(n - 1);
    std::size_t bi = 0;
    double best = INFINITY;
    for (std::size_t i = 0; i < n; ++i) {
        double v = f(G[i]);
        if (v < best) {
            best = v;
            bi = i;
        }
    }
    if (space.tag() == ModelTag::RegularTree) return best;
    double a = G[bi > 0 ? bi - 1 : 0], b = G[std::min(bi + 1, n - 1)];
    const double phi = 0.5 * (std::sqrt(5.0) - 1);
    double x1 = b - phi * (b - a), x2 = a + phi * (b - a), f1 = f(x1), f2 = f(x2);
    for (int it = 0; it < 100 && b - a > 1e-10; ++it) {
        if (f1 <= f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = f(x2);
        }
    }
    return std::min({best, f1, f2});
}

// ---------------------------------------------------------------- Configuration

Configuration Configuration::from_matrix(std::size_t n, const std::vector<double>& full, std::size_t base) {
    if (full.size() != n * n) throw Error(ErrorCode::InvalidArgument, "distance matrix size mismatch");
    Configuration c;
    c.model = ModelTag::Matrix;
    c.model_name = "matrix";
    c.n = n;
    c.dist = full;
    c.basepoint = base;
    for (std::size_t i = 0; i < n; ++i) {
        if (c.dist[i * n + i] != 0) throw Error(ErrorCode::InvalidArgument, "nonzero diagonal");
        for (std::size_t j = 0; j < i; ++j) {
            double a = c.dist[i * n + j], b = c.dist[j * n + i];
            if (!(a >= 0) || std::abs(a - b) > 1e-12 * std::max(1.0, a))
                throw Error(ErrorCode::InvalidArgument, "distance matrix not symmetric nonnegative");
        }
    }
    return c;
}

Configuration Configuration::from_points(const Space& space, std::vector<Point> pts, std::size_t base) {
    Configuration c;
    c.model = space.tag();
    c.model_name = space.name();
    c.n = pts.size();
    c.points = std::move(pts);
    c.basepoint = base;
    c.dist.assign(c.n * c.n, 0.0);
    parallel_for(c.n, [&](std::size_t i) {
        for (std::size_t j = 0; j < i; ++j) c.dist[i * c.n + j] = space.distance(c.points[i], c.points[j]);
    });
    for (std::size_t i = 0; i < c.n; ++i)
        for (std::size_t j = 0; j < i; ++j) c.dist[j * c.n + i] = c.dist[i * c.n + j];
    return c;
}

Configuration Configuration::subset(const std::vector<std::size_t>& idx) const {
    Configuration c;
    c.model = model;
    c.model_name = model_name;
    c.n = idx.size();
    c.dist.resize(c.n * c.n);
    for (std::size_t i = 0; i < c.n; ++i) {
        if (!points.empty()) c.points.push_back(points[idx[i]]);
        for (std::size_t j = 0; j < c.n; ++j) c.dist[i * c.n + j] = d(idx[i], idx[j]);
    }
    c.basepoint = 0;
    for (std::size_t i = 0; i < c.n; ++i)
        if (idx[i] == basepoint) c.basepoint = i;
    return c;
}

double Configuration::triangle_defect() const {
    double worst = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t k = 0; k < n; ++k) worst = std::max(worst, d(i, k) - d(i, j) - d(j, k));
    return worst;
}

nlohmann::json Configuration::to_json() const {
    nlohmann::json j;
    j["model"] = model_name;
    j["n"] = n;
    j["basepoint"] = basepoint;
    nlohmann::json lower = nlohmann::json::array();
    for (std::size_t i = 1; i < n; ++i)
        for (std::size_t k = 0; k < i; ++k) lower.push_back(d(i, k));
    j["dist_lower"] = lower;
    if (!points.empty()) {
        nlohmann::json P = nlohmann::json::array();
        for (auto& p : points) P.push_back(p.coords);
        j["points"] = P;
    }
    return j;
}

Configuration Configuration::from_json(const nlohmann::json& j) {
    std::size_t n = j.at("n").get<std::size_t>();
    std::vector<double> full(n * n, 0.0);
    if (j.contains("dist")) {
        auto rows = j.at("dist");
        if (rows.size() != n) throw Error(ErrorCode::InvalidArgument, "dist has wrong row count");
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < n; ++k) full[i * n + k] = rows.at(i).at(k).get<double>();
    } else {
        auto lower = j.at("dist_lower");
        if (lower.size() != n * (n - 1) / 2) throw Error(ErrorCode::InvalidArgument, "dist_lower has wrong length");
        std::size_t t = 0;
        for (std::size_t i = 1; i < n; ++i)
            for (std::size_t k = 0; k < i; ++k) {
                full[i * n + k] = full[k * n + i] = lower.at(t++).get<double>();
            }
    }
    Configuration c = from_matrix(n, full, j.value("basepoint", std::size_t(0)));
    c.model_name = j.value("model", std::string("matrix"));
    return c;
}

Configuration sample_configuration(const Space& space, const RegionSpec& region, std::size_t n,
                                   std::uint64_t seed) {
    if (n == 0) throw Error(ErrorCode::InvalidArgument, "empty configuration");
    if (!(region.radius > 0) || !std::isfinite(region.radius))
        throw Error(ErrorCode::InvalidRegion, "sampling region must be a ball of finite positive radius");
    std::vector<Point> pts{space.basepoint()};
    auto s = space.sample(region, n - 1, seed);
    pts.insert(pts.end(), s.begin(), s.end());
    return Configuration::from_points(space, std::move(pts), 0);
}

// ---------------------------------------------------------------- Fermi

namespace fermi {

double distance(double a1, double b1, double a2, double b2) {
    double db = std::abs(b1 - b2);
    double l1 = logcosh(a1 - a2);
    if (db == 0) return std::abs(a1 - a2);
    double l2 = std::log(2.0) + logcosh(a1) + logcosh(a2) + 2 * logsinh(db / 2);
    double lx = logaddexp(l1, l2);
    if (lx > 20) return lx + std::log(2.0) + std::log(0.5 + 0.5 * std::sqrt(1 - std::exp(-2 * lx)));
    return std::acosh(std::exp(lx));
}

double distance_to_axis_ray(double a, double b) {
    if (b >= 0) return std::abs(a);
    return distance(a, b, 0.0, 0.0);
}

double angle(double a, double b) { return std::atan2(std::tanh(a), std::sinh(b)); }

Point to_halfplane(double a, double b) {
    double r = std::exp(b);
    return HalfPlane::point(r * std::tanh(a), r / std::cosh(a));
}

}  // namespace fermi

}  // namespace coarse
