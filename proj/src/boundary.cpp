#include "coarse/boundary.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <functional>

#include "coarse/hyperbolicity.hpp"

namespace coarse {

double mu_from_delta(double delta) {
    if (!(delta >= 0)) throw Error(ErrorCode::InvalidArgument, "delta must be nonnegative");
    return delta > 0 ? std::exp2(1.0 / delta) : std::exp(1.0);
}

VisualKernel VisualKernel::from_delta(double delta) { return {delta, mu_from_delta(delta)}; }

double quasi_ultrametric_constant(std::size_t n, const std::vector<double>& v) {
    std::vector<double> per(n, 1.0);
    parallel_for(n, [&](std::size_t i) {
        double K = 1.0;
        for (std::size_t k = 0; k < n; ++k) {
            if (k == i) continue;
            double vik = v[i * n + k];
            for (std::size_t j = 0; j < n; ++j) {
                double m = std::max(v[i * n + j], v[j * n + k]);
                if (m > 0) K = std::max(K, vik / m);
                else if (vik > 0) K = INFINITY;
            }
        }
        per[i] = K;
    });
    return *std::max_element(per.begin(), per.end());
}

KernelMatrix KernelMatrix::from_values(std::size_t n, std::vector<double> values) {
    if (values.size() != n * n) throw Error(ErrorCode::InvalidArgument, "kernel size mismatch");
    KernelMatrix km;
    km.n = n;
    km.values = std::move(values);
    km.K = n ? quasi_ultrametric_constant(n, km.values) : 1.0;
    return km;
}

nlohmann::json KernelMatrix::to_json() const {
    nlohmann::json lower = nlohmann::json::array();
    for (std::size_t i = 1; i < n; ++i)
        for (std::size_t k = 0; k < i; ++k) lower.push_back(v(i, k));
    return {{"model", "kernel"}, {"n", n}, {"basepoint", 0}, {"dist_lower", lower}, {"K", K}};
}

KernelMatrix KernelMatrix::from_json(const nlohmann::json& j) {
    auto c = Configuration::from_json(j);
    return from_values(c.n, c.dist);
}

KernelMatrix visual_kernel_matrix(const VisualKernel& k, const Configuration& c) {
    std::vector<double> v(c.n * c.n, 0.0);
    const std::size_t o = c.basepoint;
    for (std::size_t i = 0; i < c.n; ++i)
        for (std::size_t j = 0; j < c.n; ++j)
            if (i != j) v[i * c.n + j] = std::pow(k.mu, -gromov_product(c, i, j, o));
    return KernelMatrix::from_values(c.n, std::move(v));
}

KernelMatrix random_k2_kernel(std::size_t n, Rng& g) {
    std::vector<std::uint64_t> words(n);
    for (auto& w : words) w = g();
    std::vector<double> v(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            int lcp = std::countl_zero(words[i] ^ words[j]);
            v[i * n + j] = v[j * n + i] = std::ldexp(1.0, -lcp) * uniform(g, 1.0, 2.0);
        }
    return KernelMatrix::from_values(n, std::move(v));
}

std::vector<double> chain_metric_floyd(std::size_t n, const std::vector<double>& w) {
    std::vector<double> d = w;
    for (std::size_t k = 0; k < n; ++k) {
        const double* Dk = &d[k * n];
        for (std::size_t i = 0; i < n; ++i) {
            double dik = d[i * n + k];
            double* Di = &d[i * n];
            for (std::size_t j = 0; j < n; ++j) {
                double c = dik + Dk[j];
                if (c < Di[j]) Di[j] = c;
            }
        }
    }
    return d;
}

std::vector<double> chain_metric_dijkstra(std::size_t n, const std::vector<double>& w) {
    std::vector<double> d(n * n);
    parallel_for(n, [&](std::size_t s) {
        std::vector<double> dist(n, INFINITY);
        std::vector<char> done(n, 0);
        dist[s] = 0;
        for (std::size_t it = 0; it < n; ++it) {
            std::size_t u = n;
            for (std::size_t v = 0; v < n; ++v)
                if (!done[v] && (u == n || dist[v] < dist[u])) u = v;
            done[u] = 1;
            for (std::size_t v = 0; v < n; ++v) {
                double c = dist[u] + w[u * n + v];
                if (c < dist[v]) dist[v] = c;
            }
        }
        for (std::size_t v = 0; v < n; ++v) d[s * n + v] = dist[v];
    });
    return d;
}

std::vector<double> chain_metric_bruteforce(std::size_t n, const std::vector<double>& w) {
    if (n > 8) throw Error(ErrorCode::InvalidArgument, "brute-force chains limited to n <= 8");
    std::vector<double> d(n * n, INFINITY);
    std::vector<char> used(n, 0);
    for (std::size_t s = 0; s < n; ++s) {
        std::function<void(std::size_t, double)> go = [&](std::size_t u, double acc) {
            d[s * n + u] = std::min(d[s * n + u], acc);
            for (std::size_t v = 0; v < n; ++v)
                if (!used[v]) {
                    used[v] = 1;
                    go(v, acc + w[u * n + v]);
                    used[v] = 0;
                }
        };
        used[s] = 1;
        go(s, 0.0);
        used[s] = 0;
    }
    return d;
}

std::vector<double> chain_metric(const KernelMatrix& km) {
    if (km.n <= 2048) return chain_metric_floyd(km.n, km.values);
    return chain_metric_dijkstra(km.n, km.values);
}

FrinkCheck frink_sandwich(const KernelMatrix& km, const std::vector<double>& check) {
    FrinkCheck f;
    f.max_lower_excess = -INFINITY;
    for (std::size_t i = 0; i < km.n; ++i)
        for (std::size_t j = 0; j < km.n; ++j) {
            if (i == j) continue;
            double r = km.v(i, j), c = check[i * km.n + j];
            f.max_lower_excess = std::max(f.max_lower_excess, c - r);
            if (c > 0) f.max_ratio = std::max(f.max_ratio, r / c);
            const double tol = 1e-12 * std::max(1.0, r);
            if (c > r + tol || r > 4 * c + tol) f.holds = false;
        }
    if (km.n < 2) f.max_lower_excess = 0;
    return f;
}

BoundaryProduct boundary_gromov_product(const Space& space, const BoundaryPoint& xi, const BoundaryPoint& eta,
                                        double tol, int max_doublings) {
    if (same_boundary_point(xi, eta)) throw Error(ErrorCode::DegenerateEndpoints, "equal boundary points");
    BoundaryProduct bp;
    bp.closed_form = space.boundary_product_closed_form(xi, eta);
    auto rx = space.ray(xi), ry = space.ray(eta);
    Point o = space.basepoint();
    double t = 1.0, prev = gromov_product(space, rx.at(t), ry.at(t), o);
    bool ok = false;
    for (int k = 1; k <= max_doublings; ++k) {
        t *= 2;
        double cur = gromov_product(space, rx.at(t), ry.at(t), o);
        bp.doublings = k;
        if (std::isfinite(cur) && std::abs(cur - prev) < tol) {
            prev = cur;
            ok = true;
            break;
        }
        prev = cur;
    }
    bp.numeric = prev;
    if (bp.closed_form) {
        bp.value = *bp.closed_form;
    } else {
        if (!ok) throw Error(ErrorCode::NonConvergence, "boundary Gromov product failed the Cauchy criterion");
        bp.value = prev;
    }
    return bp;
}

nlohmann::json CrossRatioResult::to_json() const {
    return {{"ratio", ratio}, {"log_plus", log_plus}, {"boxtimes_sup", boxtimes_sup}, {"boxtimes_inf", boxtimes_inf}};
}

namespace {

// From log_mu of the pairwise values.
CrossRatioResult from_logs(const std::array<std::array<double, 4>, 4>& L, double mu) {
    CrossRatioResult r;
    double lr = L[0][2] + L[1][3] - L[0][3] - L[1][2];
    r.ratio = std::pow(mu, lr);
    r.log_plus = std::max(0.0, lr);
    r.boxtimes_sup = -INFINITY;
    r.boxtimes_inf = INFINITY;
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j) {
            r.boxtimes_sup = std::max(r.boxtimes_sup, -L[i][j]);
            r.boxtimes_inf = std::min(r.boxtimes_inf, -L[i][j]);
        }
    return r;
}

}  // namespace

CrossRatioResult cross_ratio(const std::array<std::array<double, 4>, 4>& rho, double mu) {
    if (!(mu > 1)) throw Error(ErrorCode::InvalidArgument, "log base must exceed 1");
    std::array<std::array<double, 4>, 4> L{};
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            if (i == j) continue;
            if (!(rho[i][j] > 0)) throw Error(ErrorCode::DegenerateQuadruple, "coincident points in quadruple");
            L[i][j] = std::log(rho[i][j]) / std::log(mu);
        }
    return from_logs(L, mu);
}

CrossRatioResult cross_ratio(const std::vector<double>& mat, std::size_t n, std::array<std::size_t, 4> idx,
                             double mu) {
    std::array<std::array<double, 4>, 4> rho{};
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            if (i != j && idx[i] == idx[j]) throw Error(ErrorCode::DegenerateQuadruple, "repeated index");
            rho[i][j] = mat[idx[i] * n + idx[j]];
        }
    return cross_ratio(rho, mu);
}

CrossRatioResult cross_ratio(const Space& space, const std::array<BoundaryPoint, 4>& xi, double mu) {
    if (!(mu > 1)) throw Error(ErrorCode::InvalidArgument, "log base must exceed 1");
    std::array<std::array<double, 4>, 4> L{};
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j) {
            if (same_boundary_point(xi[i], xi[j]))
                throw Error(ErrorCode::DegenerateQuadruple, "coincident points in quadruple");
            L[i][j] = L[j][i] = -boundary_gromov_product(space, xi[i], xi[j]).value;
        }
    return from_logs(L, mu);
}

XRatioGap xratio_vs_geodesic_distance(const Space& space, const std::array<BoundaryPoint, 4>& xi, double mu) {
    XRatioGap g;
    auto cr = cross_ratio(space, xi, mu);
    g.logplus = cr.log_plus;
    if (space.tag() == ModelTag::HalfPlane && dynamic_cast<const HalfPlane*>(&space)) {
        g.d = HalfPlane::line_distance(xi[0], xi[3], xi[1], xi[2]);
    } else {
        auto c14 = space.geodesic(xi[0], xi[3]), c23 = space.geodesic(xi[1], xi[2]);
        g.d = distance_between_geodesics(space, c14, c23);
    }
    g.gap = std::abs(g.logplus - g.d);
    return g;
}

GapSweep xratio_gap_sweep(const std::vector<double>& Rs, std::size_t per_R, std::uint64_t seed) {
    HalfPlane H;
    GapSweep out;
    out.R = Rs;
    out.max_gap.assign(Rs.size(), 0.0);
    const double mu = std::exp(1.0);
    for (std::size_t r = 0; r < Rs.size(); ++r) {
        std::vector<double> gaps(per_R);
        parallel_for(per_R, [&](std::size_t t) {
            Rng g = make_rng(seed + r, t);
            double R = Rs[r];
            std::array<double, 4> x{-R * uniform(g, 0.5, 2), -uniform(g, 0.5, 2), uniform(g, 0.5, 2),
                                    R * uniform(g, 0.5, 2)};
            // Random labelling, so linked and unlinked pairs both occur.
            for (int i = 3; i > 0; --i) std::swap(x[i], x[std::size_t(uniform(g, 0, i + 1)) % (i + 1)]);
            std::array<BoundaryPoint, 4> xi;
            for (int i = 0; i < 4; ++i) xi[i] = HalfPlane::ideal(x[i]);
            gaps[t] = xratio_vs_geodesic_distance(H, xi, mu).gap;
        });
        out.max_gap[r] = *std::max_element(gaps.begin(), gaps.end());
    }
    // OLS slope of max gap against log R.
    double n = double(Rs.size()), sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t r = 0; r < Rs.size(); ++r) {
        double lx = std::log(Rs[r]), y = out.max_gap[r];
        sx += lx;
        sy += y;
        sxx += lx * lx;
        sxy += lx * y;
    }
    double den = n * sxx - sx * sx;
    out.slope = den > 0 ? (n * sxy - sx * sy) / den : 0.0;
    out.overall_max = *std::max_element(out.max_gap.begin(), out.max_gap.end());
    out.report.check = "xratio_gap_sweep";
    out.report.params = {{"R", Rs}, {"per_R", per_R}};
    out.report.n_trials = per_R * Rs.size();
    out.report.bound = 0.02;
    out.report.max_observed = out.slope;
    out.report.seed = seed;
    out.report.extra["max_gap"] = out.max_gap;
    out.report.extra["measured_C"] = out.overall_max;
    if (out.slope >= 0.02) out.report.violations.push_back({{"slope", out.slope}});
    return out;
}

}  // namespace coarse
