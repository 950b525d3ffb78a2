#include "coarse/sqm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace coarse {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<double> random_unit(Rng& g, std::size_t dim) {
    std::vector<double> u(dim);
    double n2 = 0;
    do {
        n2 = 0;
        for (auto& x : u) {
            x = normal(g);
            n2 += x * x;
        }
    } while (n2 < 1e-24);
    for (auto& x : u) x /= std::sqrt(n2);
    return u;
}

std::vector<double> axpy(const std::vector<double>& c, double t, const std::vector<double>& u) {
    std::vector<double> out(c);
    for (std::size_t i = 0; i < c.size(); ++i) out[i] += t * u[i];
    return out;
}

BoundaryPoint at_coords(ModelTag tag, std::vector<double> c) { return {tag, std::move(c), false, {}, {}}; }

nlohmann::json shells_json(const std::vector<ShellRow>& rows) {
    nlohmann::json out = nlohmann::json::array();
    for (auto& r : rows)
        out.push_back({{"lo", r.lo}, {"hi", r.hi}, {"scale", r.scale}, {"count", r.count}, {"upper", r.upper},
                       {"lower", r.lower}});
    return out;
}

struct QuadRecord {
    double x = 0, y = 0, s_thm = 0, s_def = 0, sup_rho = 0;
    bool ok = false;
};

double log_nu(double v, double nu) { return std::log(v) / std::log(nu); }

}  // namespace

QuadrupleSampler clustered_quadruples(ModelTag tag, std::vector<double> center, double jitter_center) {
    return [tag, center, jitter_center](Rng& g, double S) {
        std::size_t d = center.size();
        std::vector<double> c = center;
        for (auto& x : c) x += uniform(g, -jitter_center, jitter_center);
        double T1 = uniform(g, 0, S), T2 = uniform(g, 0, S);
        std::vector<double> a = c;
        std::vector<double> b = axpy(c, std::exp(-S), random_unit(g, d));
        std::array<std::vector<double>, 4> q{a, axpy(a, std::exp(-S - T1), random_unit(g, d)), b,
                                             axpy(b, std::exp(-S - T2), random_unit(g, d))};
        // Tight pairs in positions (1,4) and (2,3) make the ratio large; shuffle.
        std::array<int, 4> perm{0, 2, 3, 1};
        std::shuffle(perm.begin(), perm.end(), g);
        Quadruple out;
        for (int i = 0; i < 4; ++i) out[i] = at_coords(tag, q[perm[i]]);
        return out;
    };
}

nlohmann::json SqmEstimate::to_json() const {
    return {{"alpha_lower", alpha_lower},
            {"alpha_upper", alpha_upper},
            {"fitted_v", fitted_v.to_json()},
            {"family", family_name(family)},
            {"theta", theta},
            {"k", k},
            {"epsilon_scale", epsilon_scale},
            {"nu", nu},
            {"n_quadruples", n_quadruples},
            {"source", source},
            {"target", target},
            {"residual_table", shells_json(residual_table)},
            {"closest_pair_fit", closest_pair_fit}};
}

SqmEstimate sqm_check(const BoundaryFn& phi, const BoundaryMetric& rho, const BoundaryMetric& theta,
                      const QuadrupleSampler& sampler, std::size_t n, std::uint64_t seed, const SqmOptions& opt) {
    if (n < 100) throw Error(ErrorCode::InvalidArgument, "need at least 100 quadruples");
    if (!(opt.nu > 1)) throw Error(ErrorCode::InvalidArgument, "log base must exceed 1");
    std::vector<QuadRecord> rec(n);
    std::vector<int> degenerate(n, 0);
    parallel_for(n, [&](std::size_t i) {
        Rng g = make_rng(seed, i);
        double S = std::exp(uniform(g, std::log(opt.S_min), std::log(opt.S_max)));
        Quadruple q = sampler(g, S);
        Quadruple fq;
        for (int k = 0; k < 4; ++k) fq[k] = phi(q[k]);
        std::array<std::array<double, 4>, 4> r{}, t{};
        QuadRecord out;
        out.s_thm = -kInf;
        for (int a = 0; a < 4; ++a)
            for (int b = a + 1; b < 4; ++b) {
                r[a][b] = r[b][a] = rho(q[a], q[b]);
                t[a][b] = t[b][a] = theta(fq[a], fq[b]);
                if (!(r[a][b] > 0) || !(t[a][b] > 0)) {
                    degenerate[i] = 1;
                    return;
                }
                out.sup_rho = std::max(out.sup_rho, r[a][b]);
                out.s_def = std::max(out.s_def, -log_nu(r[a][b], opt.nu));
                double gp = opt.gromov ? opt.gromov(q[a], q[b]) : -log_nu(r[a][b], opt.nu);
                out.s_thm = std::max(out.s_thm, gp);
            }
        out.x = std::max(0.0, log_nu(r[0][2] * r[1][3] / (r[0][3] * r[1][2]), opt.nu));
        out.y = std::max(0.0, log_nu(t[0][2] * t[1][3] / (t[0][3] * t[1][2]), opt.nu));
        out.ok = true;
        rec[i] = out;
    });
    for (std::size_t i = 0; i < n; ++i)
        if (degenerate[i]) throw Error(ErrorCode::DegenerateQuadruple, "quadruple with coincident points");

    auto samples_for = [&](double eps, bool thm) {
        std::vector<ResidualSample> s;
        for (auto& q : rec)
            if (q.ok && q.sup_rho < eps) s.push_back({thm ? q.s_thm : q.s_def, q.x, q.y});
        return s;
    };
    EnvelopeOptions eo = opt.envelope;
    eo.family = opt.family;

    std::vector<double> cands = opt.epsilon ? std::vector<double>{*opt.epsilon} : opt.epsilon_candidates;
    std::sort(cands.begin(), cands.end(), std::greater<>());
    std::optional<EnvelopeFit> fit;
    double eps_used = 0;
    std::string last_error = "no candidate threshold";
    for (double eps : cands) {
        try {
            fit = fit_envelopes(samples_for(eps, true), eo);
            eps_used = eps;
            break;
        } catch (const Error& e) {
            if (e.code() != ErrorCode::FitFailure) throw;
            last_error = e.what();
        }
    }
    if (!fit) throw Error(ErrorCode::FitFailure, last_error);

    SqmEstimate est;
    est.alpha_lower = fit->lower_slope;
    est.alpha_upper = fit->upper_slope;
    est.fitted_v = fit->v;
    est.family = fit->family;
    est.theta = fit->theta;
    est.k = fit->k;
    est.epsilon_scale = eps_used;
    est.nu = opt.nu;
    est.residual_table = fit->shells;
    est.n_quadruples = samples_for(eps_used, true).size();
    est.source = opt.source;
    est.target = opt.target;
    try {
        auto f2 = fit_envelopes(samples_for(eps_used, false), eo);
        est.closest_pair_fit = f2.to_json();
    } catch (const Error& e) {
        est.closest_pair_fit = {{"error", e.what()}};
    }
    return est;
}

// ---------------------------------------------------------------- annuli

double AnnulusSpec::modulus() const { return std::log(s / r); }

void AnnulusSpec::validate() const {
    if (!(r > 0) || !(s > r)) throw Error(ErrorCode::InvalidArgument, "annulus needs 0 < r < s");
}

nlohmann::json AnnulusResult::to_json() const {
    return {{"modulus", modulus}, {"measured", measured}, {"bound", bound}, {"D1", D1}, {"n", n}};
}

std::vector<BoundaryPoint> annulus_points(const BoundaryMetric& rho, const AnnulusSpec& A, int dim, std::size_t n,
                                          std::uint64_t seed) {
    A.validate();
    std::vector<BoundaryPoint> out(n);
    parallel_for(n, [&](std::size_t i) {
        Rng g = make_rng(seed, i);
        auto u = random_unit(g, std::size_t(dim));
        double target = std::exp(uniform(g, std::log(A.r), std::log(A.s)));
        auto f = [&](double t) { return rho(A.center, at_coords(A.center.tag, axpy(A.center.coords, t, u))); };
        double lo = 0, hi = target;
        while (f(hi) < target && hi < 1e12) hi *= 2;
        for (int k = 0; k < 200 && hi - lo > 1e-15 * hi; ++k) {
            double mid = 0.5 * (lo + hi);
            (f(mid) < target ? lo : hi) = mid;
        }
        out[i] = at_coords(A.center.tag, axpy(A.center.coords, hi, u));
    });
    return out;
}

double annulus_threshold(double tau, double epsilon, double diam) {
    return std::pow(tau, 4) / 4 * std::min(epsilon, diam / 3);
}

AnnulusResult annulus_image_modulus(const BoundaryFn& phi, const AnnulusSpec& A, const std::vector<BoundaryPoint>& pts,
                                    const BoundaryMetric& theta, double lambda, const AdmissibleFunction& w,
                                    double D1) {
    A.validate();
    if (A.s > D1) throw Error(ErrorCode::ThresholdExceeded, "outer radius above the annulus threshold");
    if (pts.empty()) throw Error(ErrorCode::InvalidArgument, "no annulus points");
    BoundaryPoint c = phi(A.center);
    std::vector<double> d(pts.size());
    parallel_for(pts.size(), [&](std::size_t i) { d[i] = theta(c, phi(pts[i])); });
    auto [mn, mx] = std::minmax_element(d.begin(), d.end());
    AnnulusResult res;
    res.modulus = A.modulus();
    res.measured = std::log(*mx / *mn);
    res.bound = 2 * lambda * res.modulus + w(-std::log(A.r));
    res.D1 = D1;
    res.n = pts.size();
    return res;
}

double uniform_perfectness(const BoundaryMetric& rho, const std::vector<BoundaryPoint>& pts, double r_lo,
                           double r_hi) {
    std::size_t n = pts.size();
    std::vector<double> worst(n, 1.0);
    parallel_for(n, [&](std::size_t i) {
        std::vector<double> d;
        d.reserve(n);
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) d.push_back(rho(pts[i], pts[j]));
        std::sort(d.begin(), d.end());
        double w = 1.0;
        for (std::size_t k = 1; k < d.size(); ++k)
            if (d[k] >= r_lo && d[k] <= r_hi && d[k] > 0) w = std::min(w, d[k - 1] / d[k]);
        worst[i] = w;
    });
    return n ? *std::min_element(worst.begin(), worst.end()) : 0.0;
}

// ---------------------------------------------------------------- moduli of continuity

nlohmann::json HolderFit::to_json() const {
    return {{"lambda_lower", lambda_lower}, {"lambda_upper", lambda_upper}, {"fitted_v", v.to_json()},
            {"family", family_name(family)}, {"worst_excess", worst_excess}, {"shells", shells_json(shells)}};
}

HolderFit modulus_of_continuity(const BoundaryFn& phi, const BoundaryMetric& rho, const BoundaryMetric& theta,
                                const PairSampler& sampler, std::size_t n, std::uint64_t seed, double S_max,
                                Family family) {
    std::vector<ResidualSample> s(n);
    parallel_for(n, [&](std::size_t i) {
        Rng g = make_rng(seed, i);
        auto [x, y] = sampler(g, uniform(g, 1.0, S_max));
        double a = rho(x, y), b = theta(phi(x), phi(y));
        if (!(a > 0) || !(b > 0)) throw Error(ErrorCode::DegenerateQuadruple, "coincident pair");
        s[i] = {-std::log(a), -std::log(a), -std::log(b)};
    });
    EnvelopeOptions eo;
    eo.family = family;
    EnvelopeFit fit = fit_envelopes(s, eo);
    HolderFit out;
    out.lambda_lower = fit.lower_slope;
    out.lambda_upper = fit.upper_slope;
    out.v = fit.v;
    out.family = fit.family;
    out.shells = fit.shells;
    // Two-sided bounds: theta <= exp(l_lo log rho + v), theta >= exp(l_hi log rho - v).
    double worst = -kInf;
    for (auto& r : s) {
        double v = fit.v(r.scale);
        worst = std::max({worst, out.lambda_lower * r.x - r.y - v, r.y - out.lambda_upper * r.x - v});
    }
    out.worst_excess = worst;
    return out;
}

SqmEstimate compose_sqm(const SqmEstimate& psi, const SqmEstimate& phi) {
    if (psi.target != phi.source) throw Error(ErrorCode::SpaceMismatch, psi.target + " vs " + phi.source);
    SqmEstimate out;
    out.alpha_lower = psi.alpha_lower * phi.alpha_lower;
    out.alpha_upper = psi.alpha_upper * phi.alpha_upper;
    out.fitted_v = psi.alpha_upper * phi.fitted_v + (uparrow(phi.fitted_v, 2.0) / phi.alpha_lower) * psi.fitted_v;
    auto g = out.fitted_v.growth();
    out.family = !out.fitted_v.has_growth() ? Family::Constant : (g.first > 0 ? Family::Power : Family::Log);
    out.theta = g.first;
    out.k = g.second;
    out.epsilon_scale = std::min(psi.epsilon_scale, phi.epsilon_scale);
    out.nu = psi.nu;
    out.source = psi.source;
    out.target = phi.target;
    return out;
}

}  // namespace coarse
