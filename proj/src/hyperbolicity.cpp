#include "coarse/hyperbolicity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace coarse {

double gromov_product(const Configuration& c, std::size_t x, std::size_t y, std::size_t o) {
    if (x >= c.n || y >= c.n || o >= c.n) throw Error(ErrorCode::InvalidId, "index out of range");
    return 0.5 * (c.d(x, o) + c.d(y, o) - c.d(x, y));
}

double gromov_product(const Space& s, const Point& x, const Point& y, const Point& o) {
    return 0.5 * (s.distance(x, o) + s.distance(y, o) - s.distance(x, y));
}

nlohmann::json DeltaEstimate::to_json() const {
    return {{"delta", delta},
            {"witness", witness},
            {"n_points", n_points},
            {"exhaustive", exhaustive},
            {"samples", samples}};
}

double quadruple_defect(const Configuration& c, std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
    double s1 = c.d(i, j) + c.d(k, l), s2 = c.d(i, k) + c.d(j, l), s3 = c.d(i, l) + c.d(j, k);
    double mx = std::max({s1, s2, s3}), mn = std::min({s1, s2, s3});
    double mid = s1 + s2 + s3 - mx - mn;
    return std::max(0.0, 0.5 * (mx - mid));
}

namespace {

struct Best {
    double defect = 0.0;
    std::array<std::size_t, 4> q{0, 0, 0, 0};
    void offer(double d, std::array<std::size_t, 4> w) {
        if (d > defect || (d == defect && w < q)) {
            defect = d;
            q = w;
        }
    }
};

}  // namespace

DeltaEstimate delta_four_point(const Configuration& c, const DeltaOptions& opt) {
    DeltaEstimate est;
    est.n_points = c.n;
    const std::size_t n = c.n;
    if (n < 4) return est;
    if (n <= opt.scan_limit) {
        // One task per leading index i; witnesses are compared lexicographically.
        std::vector<Best> per(n);
        parallel_for(n - 3, [&](std::size_t i) {
            Best b;
            b.q = {i, i + 1, i + 2, i + 3};
            const double* Di = &c.dist[i * n];
            for (std::size_t j = i + 1; j < n; ++j) {
                const double* Dj = &c.dist[j * n];
                for (std::size_t k = j + 1; k < n; ++k) {
                    const double* Dk = &c.dist[k * n];
                    double dij = Di[j], dik = Di[k], djk = Dj[k];
                    double local = -1;
                    std::size_t arg = 0;
                    for (std::size_t l = k + 1; l < n; ++l) {
                        double s1 = dij + Dk[l], s2 = dik + Dj[l], s3 = Di[l] + djk;
                        double mx = std::max(s1, std::max(s2, s3)), mn = std::min(s1, std::min(s2, s3));
                        double def = 2 * mx + mn - s1 - s2 - s3;  // twice the defect
                        if (def > local) {
                            local = def;
                            arg = l;
                        }
                    }
                    if (local >= 0) b.offer(std::max(0.0, 0.5 * local), {i, j, k, arg});
                }
            }
            per[i] = b;
        });
        Best all;
        all.q = {0, 1, 2, 3};
        for (std::size_t i = 0; i + 3 < n; ++i) all.offer(per[i].defect, per[i].q);
        est.delta = all.defect;
        est.witness = all.q;
        est.exhaustive = true;
        return est;
    }
    // Subsampling: max over k random 4-subsets, split into fixed blocks.
    const std::size_t blocks = 64;
    std::vector<Best> per(blocks);
    std::size_t k = opt.subsample_k;
    parallel_for(blocks, [&](std::size_t b) {
        Rng g = make_rng(opt.seed, 0x5eedULL + b);
        Best best;
        best.q = {0, 1, 2, 3};
        std::size_t lo = k * b / blocks, hi = k * (b + 1) / blocks;
        for (std::size_t t = lo; t < hi; ++t) {
            std::array<std::size_t, 4> q;
            do {
                for (auto& v : q) v = std::size_t(uniform(g, 0, double(n))) % n;
                std::sort(q.begin(), q.end());
            } while (q[0] == q[1] || q[1] == q[2] || q[2] == q[3]);
            best.offer(quadruple_defect(c, q[0], q[1], q[2], q[3]), q);
        }
        per[b] = best;
    });
    Best all;
    all.q = {0, 1, 2, 3};
    for (auto& b : per) all.offer(b.defect, b.q);
    est.delta = all.defect;
    est.witness = all.q;
    est.exhaustive = false;
    est.samples = k;
    return est;
}

// ---------------------------------------------------------------- audits

std::string lemma_name(LemmaId id) {
    switch (id) {
        case LemmaId::Contraction: return "contraction";
        case LemmaId::Connectedness: return "connectedness";
        case LemmaId::LinedUpProduct: return "lined_up_product";
        case LemmaId::RightTriangle: return "right_triangle";
        case LemmaId::Quadrilateral: return "quadrilateral";
        case LemmaId::ProjectionSup: return "projection_sup";
        case LemmaId::LinearDivergence: return "linear_divergence";
    }
    return "?";
}

LemmaId lemma_from_name(const std::string& s) {
    for (int i = 0; i <= int(LemmaId::LinearDivergence); ++i)
        if (lemma_name(LemmaId(i)) == s) return LemmaId(i);
    throw Error(ErrorCode::InvalidId, "unknown lemma id: " + s);
}

double lemma_constant(LemmaId id) {
    switch (id) {
        case LemmaId::Contraction: return 16;
        case LemmaId::Connectedness: return 16;
        case LemmaId::LinedUpProduct: return 5;
        case LemmaId::RightTriangle: return 28;
        case LemmaId::Quadrilateral: return 56;
        case LemmaId::ProjectionSup: return 284;
        case LemmaId::LinearDivergence: return 56;
    }
    return 0;
}

Report AuditReport::to_report() const {
    Report r;
    r.check = "audit:" + lemma_name(lemma);
    r.n_trials = trials;
    r.bound = paper_bound;
    r.max_observed = max_observed;
    r.violations = violations;
    r.seed = seed;
    r.extra["lemma_id"] = lemma_name(lemma);
    r.extra["pilot_delta"] = pilot_delta;
    r.extra["acceptance_rate"] = acceptance_rate;
    r.extra["violation_count"] = violation_count;
    return r;
}

namespace {

struct TrialOut {
    double obs = 0.0;
    nlohmann::json witness;
    std::size_t attempts = 1;
};

nlohmann::json pj(const Point& p) { return p.coords; }

nlohmann::json bj(const BoundaryPoint& b) {
    nlohmann::json j;
    if (b.infinite) return "inf";
    if (b.tag == ModelTag::RegularTree) return {{"prefix", b.prefix}, {"period", b.period}};
    return b.coords;
}

struct Ctx {
    const Space& sp;
    const AuditOptions& opt;
    bool tree;
    double step;  // discretization step along geodesics

    Point random_point(Rng& g) const { return sp.sample({opt.radius}, 1, g())[0]; }

    GeodesicLine random_segment(Rng& g, Point& a, Point& b) const {
        for (std::size_t k = 0; k < opt.retry_cap; ++k) {
            a = random_point(g);
            b = random_point(g);
            if (sp.distance(a, b) > 0) return sp.geodesic(a, b);
        }
        throw Error(ErrorCode::HypothesisUnsatisfiable, "could not sample a nondegenerate segment");
    }

    GeodesicLine random_line(Rng& g, BoundaryPoint& x, BoundaryPoint& y) const {
        for (std::size_t k = 0; k < opt.retry_cap; ++k) {
            x = sp.random_boundary_point(g);
            y = sp.random_boundary_point(g);
            if (!same_boundary_point(x, y)) return sp.geodesic(x, y);
        }
        throw Error(ErrorCode::HypothesisUnsatisfiable, "could not sample distinct ideal points");
    }

    // A point within distance rho of p.
    Point near(const Point& p, double rho, Rng& g) const {
        if (rho <= 0) return p;
        Point y = sp.sample({opt.radius + rho + 1}, 1, g())[0];
        double d = sp.distance(p, y);
        if (d == 0) return p;
        auto seg = sp.geodesic(p, y);
        double s = std::min(rho, d);
        if (tree) s = std::floor(s);
        return seg.at(s);
    }

    std::vector<double> grid(double lo, double hi) const {
        std::vector<double> v;
        if (tree) {
            for (double s = std::ceil(lo); s <= hi + 1e-12; s += 1) v.push_back(s);
        } else {
            std::size_t n = std::max<std::size_t>(2, std::size_t(std::ceil((hi - lo) / step)) + 1);
            for (std::size_t i = 0; i < n; ++i) v.push_back(lo + (hi - lo) * double(i) / double(n - 1));
        }
        return v;
    }

    double window_lo(const GeodesicLine& g) const { return std::isfinite(g.lo) ? g.lo : -opt.line_window; }
    double window_hi(const GeodesicLine& g) const { return std::isfinite(g.hi) ? g.hi : opt.line_window; }

    double gap(const GeodesicLine& g1, const GeodesicLine& g2) const {
        return distance_between_geodesics(sp, g1, g2, opt.line_window, tree ? 1.0 : step);
    }
};

TrialOut trial_contraction(const Ctx& C, double, Rng& g) {
    Point a, b0;
    auto gam = C.random_segment(g, a, b0);
    Point b = C.random_point(g), b2 = C.random_point(g);
    auto P = project_to_geodesic(C.sp, gam, b), P2 = project_to_geodesic(C.sp, gam, b2);
    double e1 = C.sp.distance(P.point, P2.point) - C.sp.distance(b, b2);
    double s = uniform(g, gam.lo, gam.hi);
    if (C.tree) s = std::round(s);
    Point c = gam.at(s);
    double e2 = C.sp.distance(c, P.point) - (C.sp.distance(b, c) - P.dist);
    TrialOut o;
    o.obs = std::max(e1, e2);
    o.witness = {{"gamma", {pj(a), pj(b0)}}, {"b", pj(b)}, {"b_prime", pj(b2)}, {"c", pj(c)}};
    return o;
}

TrialOut trial_connectedness(const Ctx& C, double, Rng& g) {
    Point a, b, x, y;
    auto gam = C.random_segment(g, a, b);
    auto S = C.random_segment(g, x, y);
    double alpha = C.tree ? 1.0 : C.opt.alpha;
    std::size_t n = std::size_t(std::ceil(S.hi / alpha));
    std::vector<double> params;
    std::vector<Point> proj;
    for (std::size_t k = 0; k <= n; ++k) {
        double s = C.tree ? double(k) : S.hi * double(k) / double(std::max<std::size_t>(n, 1));
        auto P = project_to_geodesic(C.sp, gam, S.at(std::min(s, S.hi)));
        params.push_back(P.param);
    }
    std::sort(params.begin(), params.end());
    double gapmax = 0;
    for (std::size_t k = 1; k < params.size(); ++k)
        gapmax = std::max(gapmax, C.sp.distance(gam.at(params[k - 1]), gam.at(params[k])));
    TrialOut o;
    o.obs = gapmax - alpha;
    o.witness = {{"gamma", {pj(a), pj(b)}}, {"S", {pj(x), pj(y)}}, {"alpha", alpha}};
    return o;
}

TrialOut trial_lined_up(const Ctx& C, double, Rng& g) {
    const double eta = C.opt.eta;
    TrialOut o;
    o.attempts = 0;
    for (std::size_t att = 0; att < C.opt.retry_cap; ++att) {
        ++o.attempts;
        Point a, b;
        auto sig = C.random_segment(g, a, b);
        std::array<double, 3> s{uniform(g, 0, sig.hi), uniform(g, 0, sig.hi), uniform(g, 0, sig.hi)};
        std::sort(s.begin(), s.end());
        if (C.tree)
            for (auto& v : s) v = std::round(v);
        std::array<Point, 3> x;
        bool ok = true;
        double prev = -INFINITY;
        for (int i = 0; i < 3; ++i) {
            x[i] = C.near(sig.at(s[i]), uniform(g, 0, eta), g);
            auto P = project_to_geodesic(C.sp, sig, x[i]);
            if (P.dist > eta + 1e-12 || P.param < prev - 1e-9) {
                ok = false;
                break;
            }
            prev = P.param;
        }
        if (!ok) continue;
        double gp = gromov_product(C.sp, x[1], x[2], x[0]);
        o.obs = std::abs(gp - C.sp.distance(x[0], x[1]));
        o.witness = {{"sigma", {pj(a), pj(b)}}, {"x", {pj(x[0]), pj(x[1]), pj(x[2])}}, {"eta", eta}};
        return o;
    }
    throw Error(ErrorCode::HypothesisUnsatisfiable, "lined_up_product: rejection cap reached");
}

TrialOut trial_right_triangle(const Ctx& C, double delta, Rng& g) {
    Point p, q;
    auto sig = C.random_segment(g, p, q);
    Point b = C.random_point(g);
    auto A = project_to_geodesic(C.sp, sig, b);
    double sc = uniform(g, sig.lo, sig.hi);
    if (C.tree) sc = std::round(sc);
    Point c = sig.at(sc);
    TrialOut o;
    o.witness = {{"sigma", {pj(p), pj(q)}}, {"b", pj(b)}, {"c", pj(c)}};
    double dbc = C.sp.distance(b, c);
    if (dbc == 0) {
        o.obs = C.sp.distance(A.point, b);
        return o;
    }
    auto bc = C.sp.geodesic(b, c);
    double dba = A.dist;
    std::optional<GeodesicLine> ba;
    if (dba > 0) ba = C.sp.geodesic(b, A.point);
    auto G = C.grid(0, dbc);
    std::vector<double> dsig(G.size()), suff(G.size());
    for (std::size_t k = 0; k < G.size(); ++k) dsig[k] = project_to_geodesic(C.sp, sig, bc.at(G[k])).dist;
    double run = 0;
    for (std::size_t k = G.size(); k-- > 0;) {
        run = std::max(run, dsig[k]);
        suff[k] = run;
    }
    const double lim = 4 * delta + kAuditTol;
    double best = INFINITY;
    for (std::size_t k = 0; k < G.size(); ++k) {
        if (suff[k] > lim) continue;
        Point t = bc.at(G[k]);
        double dtba = ba ? project_to_geodesic(C.sp, *ba, t).dist : C.sp.distance(t, b);
        if (dtba > lim) continue;
        best = std::min(best, C.sp.distance(A.point, t));
    }
    o.obs = std::isfinite(best) ? best : 1e300;
    return o;
}

// Non-backtracking walk in the tree leaving 'start' away from the given vertices.
Point tree_branch(const RegularTree& T, const Point& start, const std::vector<Point>& avoid, int steps, Rng& g) {
    Point cur = start, prev = start;
    bool first = true;
    for (int s = 0; s < steps; ++s) {
        std::vector<Point> nb;
        if (!cur.coords.empty()) nb.push_back({ModelTag::RegularTree, {cur.coords.begin(), cur.coords.end() - 1}});
        int lim = cur.coords.empty() ? T.valence() : T.valence() - 1;
        for (int c = 0; c < lim; ++c) {
            auto w = cur.coords;
            w.push_back(c);
            nb.push_back({ModelTag::RegularTree, w});
        }
        std::vector<Point> ok;
        for (auto& v : nb) {
            bool bad = (!first && v.coords == prev.coords);
            if (first)
                for (auto& a : avoid) bad = bad || v.coords == a.coords;
            if (!bad) ok.push_back(v);
        }
        prev = cur;
        cur = ok[std::min(ok.size() - 1, std::size_t(uniform(g, 0, double(ok.size()))))];
        first = false;
    }
    return cur;
}

TrialOut trial_quadrilateral(const Ctx& C, double delta, Rng& g) {
    TrialOut o;
    const double Lmin = 138 * delta;
    Point a0, a1, b0, b1;
    if (auto* T = dynamic_cast<const RegularTree*>(&C.sp)) {
        GeodesicLine sig;
        std::size_t att = 0;
        do {
            if (++att > C.opt.retry_cap)
                throw Error(ErrorCode::HypothesisUnsatisfiable, "quadrilateral: separation unattainable");
            sig = C.random_segment(g, a0, a1);
        } while (sig.hi < std::max(1.0, Lmin));
        o.attempts = att;
        int r0 = int(uniform(g, 0, C.opt.radius + 1)), r1 = int(uniform(g, 0, C.opt.radius + 1));
        b0 = tree_branch(*T, a0, {sig.at(1)}, r0, g);
        b1 = tree_branch(*T, a1, {sig.at(sig.hi - 1)}, r1, g);
    } else if (dynamic_cast<const HalfPlane*>(&C.sp)) {
        // Long side on the imaginary axis; perpendiculars are circles about 0.
        double L = Lmin + uniform(g, 0, 10);
        if (L <= 0) L = uniform(g, 0.5, 10);
        double h0 = uniform(g, -1, 1) - L / 2, h1 = h0 + L;
        a0 = HalfPlane::point(0, std::exp(h0));
        a1 = HalfPlane::point(0, std::exp(h1));
        auto perp = [&](double h) {
            double r = uniform(g, 0, C.opt.radius), sg = uniform(g, 0, 1) < 0.5 ? 1 : -1;
            return HalfPlane::point(sg * std::exp(h) * std::tanh(r), std::exp(h) / std::cosh(r));
        };
        b0 = perp(h0);
        b1 = perp(h1);
    } else {
        throw Error(ErrorCode::InvalidArgument, "quadrilateral audit supports halfplane and tree models");
    }
    if (C.sp.distance(a0, a1) + 1e-9 < Lmin)
        throw Error(ErrorCode::HypothesisUnsatisfiable, "quadrilateral: separation not reached");
    double obs;
    if (C.sp.distance(b0, b1) == 0) {
        obs = std::max(C.sp.distance(a0, b0), C.sp.distance(a1, b0));
    } else {
        auto bb = C.sp.geodesic(b0, b1);
        obs = std::max(distance_to_geodesic(C.sp, bb, a0), distance_to_geodesic(C.sp, bb, a1));
    }
    o.obs = obs;
    o.witness = {{"a0", pj(a0)}, {"a1", pj(a1)}, {"b0", pj(b0)}, {"b1", pj(b1)}};
    return o;
}

double boundary_product(const Space& sp, const BoundaryPoint& a, const BoundaryPoint& b) {
    auto v = sp.boundary_product_closed_form(a, b);
    if (!v) throw Error(ErrorCode::InvalidArgument, "model has no closed-form boundary product");
    return *v;
}

TrialOut trial_projection_sup(const Ctx& C, double, Rng& g) {
    TrialOut o;
    o.attempts = 0;
    for (std::size_t att = 0; att < C.opt.retry_cap; ++att) {
        ++o.attempts;
        std::array<BoundaryPoint, 4> xi;
        for (auto& x : xi) x = C.sp.random_boundary_point(g);
        bool distinct = true;
        for (int i = 0; i < 4; ++i)
            for (int j = i + 1; j < 4; ++j) distinct = distinct && !same_boundary_point(xi[i], xi[j]);
        if (!distinct) continue;
        auto gam = C.sp.geodesic(xi[0], xi[1]), gam2 = C.sp.geodesic(xi[2], xi[3]);
        double box = -INFINITY;
        for (int i = 0; i < 4; ++i)
            for (int j = i + 1; j < 4; ++j) box = std::max(box, boundary_product(C.sp, xi[i], xi[j]));
        double sup = 0;
        Point o0 = C.sp.basepoint();
        for (double s : C.grid(-C.opt.line_window, C.opt.line_window))
            sup = std::max(sup, C.sp.distance(o0, project_to_geodesic(C.sp, gam, gam2.at(s)).point));
        o.obs = sup - box;
        o.witness = {{"xi", {bj(xi[0]), bj(xi[1]), bj(xi[2]), bj(xi[3])}}, {"sup", sup}, {"boxtimes_sup", box}};
        return o;
    }
    throw Error(ErrorCode::HypothesisUnsatisfiable, "projection_sup: could not sample distinct endpoints");
}

TrialOut trial_linear_divergence(const Ctx& C, double, Rng& g) {
    TrialOut o;
    o.attempts = 0;
    for (std::size_t att = 0; att < C.opt.retry_cap; ++att) {
        ++o.attempts;
        std::array<BoundaryPoint, 4> xi;
        for (auto& x : xi) x = C.sp.random_boundary_point(g);
        bool distinct = true;
        for (int i = 0; i < 4; ++i)
            for (int j = i + 1; j < 4; ++j) distinct = distinct && !same_boundary_point(xi[i], xi[j]);
        if (!distinct) continue;
        auto g1 = C.sp.geodesic(xi[0], xi[1]), g2 = C.sp.geodesic(xi[2], xi[3]);
        double Delta = C.gap(g1, g2);
        auto interval = [&](const GeodesicLine& onto, const GeodesicLine& from) {
            double lo = INFINITY, hi = -INFINITY;
            for (double s : C.grid(-C.opt.line_window, C.opt.line_window)) {
                double p = project_to_geodesic(C.sp, onto, from.at(s)).param;
                lo = std::min(lo, p);
                hi = std::max(hi, p);
            }
            return std::pair{lo, hi};
        };
        auto [l1, h1] = interval(g1, g2);
        auto [l2, h2] = interval(g2, g1);
        double w = C.opt.line_window / 4;
        double s1 = uniform(g, -w, w), s2 = uniform(g, -w, w);
        if (C.tree) {
            s1 = std::round(s1);
            s2 = std::round(s2);
        }
        Point p1 = g1.at(s1), p2 = g2.at(s2);
        double d1 = C.sp.distance(p1, g1.at(std::clamp(s1, l1, h1)));
        double d2 = C.sp.distance(p2, g2.at(std::clamp(s2, l2, h2)));
        o.obs = Delta + std::max(d1, d2) - C.sp.distance(p1, p2);
        o.witness = {{"xi", {bj(xi[0]), bj(xi[1]), bj(xi[2]), bj(xi[3])}}, {"s1", s1}, {"s2", s2}, {"Delta", Delta}};
        return o;
    }
    throw Error(ErrorCode::HypothesisUnsatisfiable, "linear_divergence: could not sample distinct endpoints");
}

}  // namespace

AuditReport audit_lemma(const Space& space, double delta, LemmaId id, std::size_t trials, std::uint64_t seed,
                        const AuditOptions& opt) {
    if (trials == 0) throw Error(ErrorCode::InvalidArgument, "trials must be at least 1");
    if (!(delta >= 0)) throw Error(ErrorCode::InvalidArgument, "delta must be nonnegative");
    AuditReport rep;
    rep.lemma = id;
    rep.trials = trials;
    rep.seed = seed;
    {
        auto pilot = sample_configuration(space, {opt.radius}, 40, seed ^ 0x9107ULL);
        rep.pilot_delta = delta_four_point(pilot).delta;
        if (opt.check_pilot_delta && delta + 1e-9 < rep.pilot_delta)
            throw Error(ErrorCode::InvalidArgument, "delta below the pilot four-point estimate " +
                                                        std::to_string(rep.pilot_delta));
    }
    const bool tree = space.tag() == ModelTag::RegularTree;
    Ctx C{space, opt, tree, 0.05};
    double scale = id == LemmaId::LinedUpProduct ? opt.eta : delta;
    rep.paper_bound = lemma_constant(id) * scale;

    std::vector<TrialOut> out(trials);
    parallel_for(trials, [&](std::size_t t) {
        Rng g = make_rng(seed, t);
        switch (id) {
            case LemmaId::Contraction: out[t] = trial_contraction(C, delta, g); break;
            case LemmaId::Connectedness: out[t] = trial_connectedness(C, delta, g); break;
            case LemmaId::LinedUpProduct: out[t] = trial_lined_up(C, delta, g); break;
            case LemmaId::RightTriangle: out[t] = trial_right_triangle(C, delta, g); break;
            case LemmaId::Quadrilateral: out[t] = trial_quadrilateral(C, delta, g); break;
            case LemmaId::ProjectionSup: out[t] = trial_projection_sup(C, delta, g); break;
            case LemmaId::LinearDivergence: out[t] = trial_linear_divergence(C, delta, g); break;
        }
    });
    rep.max_observed = -INFINITY;
    std::size_t attempts = 0;
    for (std::size_t t = 0; t < trials; ++t) {
        attempts += out[t].attempts;
        rep.max_observed = std::max(rep.max_observed, out[t].obs);
        if (out[t].obs > rep.paper_bound + kAuditTol) {
            ++rep.violation_count;
            if (rep.violations.size() < kMaxWitnesses) {
                auto w = out[t].witness;
                w["trial"] = t;
                w["observed"] = out[t].obs;
                rep.violations.push_back(w);
            }
        }
    }
    rep.acceptance_rate = double(trials) / double(attempts);
    return rep;
}

}  // namespace coarse
