#include "coarse/coarse_maps.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Dense>

#include "coarse/boundary.hpp"

namespace coarse {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double quantile(std::vector<double> v, double q) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    double pos = q * double(v.size() - 1);
    std::size_t i = std::size_t(std::floor(pos));
    std::size_t j = std::min(i + 1, v.size() - 1);
    double f = pos - double(i);
    return v[i] * (1 - f) + v[j] * f;
}

// Smallest r >= 0 with F(r) >= target for nondecreasing-ish F; bisection.
double invert_radius(const std::function<double(double)>& F, double target) {
    if (target <= F(0.0)) return 0.0;
    double hi = 1.0;
    while (F(hi) < target && hi < 1e12) hi *= 2;
    double lo = 0.0;
    for (int i = 0; i < 200 && hi - lo > 1e-12 * std::max(1.0, hi); ++i) {
        double mid = 0.5 * (lo + hi);
        (F(mid) < target ? lo : hi) = mid;
    }
    return hi;
}

std::vector<double> truncate_or_extend(std::vector<double> w, std::size_t len) {
    if (w.size() >= len) {
        w.resize(len);
    } else {
        while (w.size() < len) w.push_back(0.0);
    }
    return w;
}

// Point at radius r' on the ray [o, x) for the supported models.
std::function<Point(const Point&, double)> radial_mover(const SpacePtr& space) {
    switch (space->tag()) {
        case ModelTag::HalfPlane:
            return [space](const Point& x, double r2) {
                Point o = space->basepoint();
                if (space->distance(o, x) == 0.0) return o;
                return HalfPlane::offset(o, r2, HalfPlane::direction(o, x));
            };
        case ModelTag::Hyperboloid:
            return [space](const Point& x, double r2) {
                double r = space->norm(x);
                if (r < 1e-12) return x;
                std::vector<double> y(x.coords.size());
                double sh = std::sinh(r), sh2 = std::sinh(r2);
                y[0] = std::cosh(r2);
                for (std::size_t i = 1; i < y.size(); ++i) y[i] = sh2 * x.coords[i] / sh;
                return Point{ModelTag::Hyperboloid, y};
            };
        case ModelTag::RegularTree:
            return [](const Point& x, double r2) {
                return Point{ModelTag::RegularTree, truncate_or_extend(x.coords, std::size_t(std::llround(r2)))};
            };
        default: throw Error(ErrorCode::InvalidArgument, "radial maps need rays from the basepoint: " + space->name());
    }
}

}  // namespace

CoarseMap identity_map(SpacePtr space) {
    CoarseMap m;
    m.source = space;
    m.target = space;
    m.eval = [](const Point& p) { return p; };
    m.quasi_inverse = m.eval;
    m.label = "identity";
    return m;
}

CoarseMap make_radial_sbe(SpacePtr space, const AdmissibleFunction& u, int sign) {
    if (sign != 1 && sign != -1) throw Error(ErrorCode::InvalidArgument, "sign must be +1 or -1");
    auto move = radial_mover(space);
    bool tree = space->tag() == ModelTag::RegularTree;
    auto F = [u, sign](double r) { return std::max(0.0, r + sign * u(r)); };
    CoarseMap m;
    m.source = space;
    m.target = space;
    m.eval = [space, move, F, tree](const Point& x) {
        double r = space->norm(x);
        if (r == 0.0) return x;
        double r2 = F(r);
        return move(x, tree ? std::round(r2) : r2);
    };
    m.quasi_inverse = [space, move, F, tree](const Point& y) {
        double r2 = space->norm(y);
        if (r2 == 0.0) return y;
        double r = invert_radius(F, r2);
        return move(y, tree ? std::round(r) : r);
    };
    m.label = std::string("radial(") + (sign > 0 ? "+" : "-") + u.describe() + ")";
    return m;
}

CoarseMap make_tree_stretch(std::shared_ptr<const RegularTree> tree, int factor) {
    if (factor < 1) throw Error(ErrorCode::InvalidArgument, "stretch factor must be positive");
    int q = tree->valence();
    CoarseMap m;
    m.source = tree;
    m.target = tree;
    m.eval = [factor, q](const Point& x) {
        std::vector<double> w;
        w.reserve(x.coords.size() * factor);
        for (double l : x.coords)
            for (int k = 0; k < factor; ++k) w.push_back(w.empty() ? l : std::min(l, double(q - 2)));
        return Point{ModelTag::RegularTree, w};
    };
    m.quasi_inverse = [factor](const Point& y) {
        std::vector<double> w;
        for (std::size_t i = 0; i < y.coords.size(); i += factor) w.push_back(y.coords[i]);
        return Point{ModelTag::RegularTree, w};
    };
    m.label = "tree_stretch(" + std::to_string(factor) + ")";
    return m;
}

LogModelPair make_heintze_logmodel_pair(const HeintzeSpec& a, const HeintzeSpec& b) {
    HeintzeSpec na = normalize(a), nb = normalize(b);
    if (na.type != nb.type || na.dim() != nb.dim())
        throw Error(ErrorCode::IncompatibleSpecs, "different nilpotent groups");
    auto ea = na.eigenvalues(), eb = nb.eigenvalues();
    std::sort(ea.begin(), ea.end());
    std::sort(eb.begin(), eb.end());
    for (std::size_t i = 0; i < ea.size(); ++i)
        if (std::abs(ea[i] - eb[i]) > 1e-12) throw Error(ErrorCode::IncompatibleSpecs, "eigenvalues differ");
    LogModelPair out;
    out.first = std::make_shared<HeintzeLog>(na);
    out.second = std::make_shared<HeintzeLog>(nb);
    out.map.source = out.first;
    out.map.target = out.second;
    out.map.eval = [](const Point& p) { return p; };
    out.map.quasi_inverse = out.map.eval;
    out.map.label = "logmodel_identity(" + na.label() + " -> " + nb.label() + ")";
    return out;
}

// ---------------------------------------------------------------- envelopes

Family family_from_name(const std::string& s) {
    if (s == "constant") return Family::Constant;
    if (s == "log") return Family::Log;
    if (s == "power") return Family::Power;
    if (s == "auto") return Family::Auto;
    throw Error(ErrorCode::InvalidArgument, "unknown family " + s);
}

const char* family_name(Family f) {
    switch (f) {
        case Family::Constant: return "constant";
        case Family::Log: return "log";
        case Family::Power: return "power";
        case Family::Auto: return "auto";
    }
    return "?";
}

namespace {

// min ||A c - y|| with the columns in `free` unconstrained and the rest >= 0,
// by enumerating active sets. Columns are few (<= 6), so this is cheap and exact.
std::vector<double> nnls_active_sets(const Eigen::MatrixXd& A, const Eigen::VectorXd& y, unsigned free, double* sse) {
    int k = int(A.cols());
    Eigen::VectorXd scale = A.colwise().norm().transpose();
    for (int j = 0; j < k; ++j)
        if (scale[j] == 0) scale[j] = 1;
    Eigen::MatrixXd As = A * scale.cwiseInverse().asDiagonal();
    std::vector<int> cons;
    for (int j = 0; j < k; ++j)
        if (!(free >> j & 1u)) cons.push_back(j);
    double best = kInf;
    std::vector<double> out(k, 0.0);
    for (unsigned mask = 0; mask < (1u << cons.size()); ++mask) {
        std::vector<int> cols;
        for (int j = 0; j < k; ++j)
            if (free >> j & 1u) cols.push_back(j);
        for (std::size_t i = 0; i < cons.size(); ++i)
            if (mask >> i & 1u) cols.push_back(cons[i]);
        Eigen::MatrixXd S(As.rows(), cols.size());
        for (std::size_t j = 0; j < cols.size(); ++j) S.col(j) = As.col(cols[j]);
        Eigen::VectorXd c = S.colPivHouseholderQr().solve(y);
        bool ok = true;
        for (std::size_t j = 0; j < cols.size(); ++j)
            if (!(free >> cols[j] & 1u) && c[j] < 0) ok = false;
        if (!ok) continue;
        double e = (S * c - y).squaredNorm();
        if (!std::isfinite(best) || e < best - 1e-15 * (1 + best)) {
            best = e;
            std::fill(out.begin(), out.end(), 0.0);
            for (std::size_t j = 0; j < cols.size(); ++j) out[cols[j]] = c[j] / scale[cols[j]];
        }
    }
    if (sse) *sse = best;
    return out;
}

std::vector<double> nnls_free_intercept(const Eigen::MatrixXd& A, const Eigen::VectorXd& y, double* sse) {
    return nnls_active_sets(A, y, 1u, sse);
}

double g_log(double m) { return std::log(std::exp(1.0) + m); }

// Linear coefficient of the envelope over shells, against a sublinear basis.
double linear_part(const std::vector<double>& m, const std::vector<double>& E) {
    int n = int(m.size());
    Eigen::MatrixXd A(n, 6);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        A(i, 0) = 1;
        A(i, 1) = g_log(m[i]);
        A(i, 2) = std::pow(1 + m[i], 0.25);
        A(i, 3) = std::pow(1 + m[i], 0.5);
        A(i, 4) = std::pow(1 + m[i], 0.75);
        A(i, 5) = m[i];
        y[i] = E[i];
    }
    // Sublinear coefficients share one sign, linear coefficient signed. When
    // the negated columns fit clearly better (a decaying trend), that trend
    // must not leak into the linear term, so the smaller coefficient counts.
    const unsigned free = 1u | 1u << 5;
    double sp = 0, sn = 0;
    auto pos = nnls_active_sets(A, y, free, &sp);
    Eigen::MatrixXd B = A;
    B.middleCols(1, 4) *= -1;
    auto neg = nnls_active_sets(B, y, free, &sn);
    return std::max(0.0, sn < 0.5 * sp ? std::min(neg[5], pos[5]) : pos[5]);
}

struct Shells {
    std::vector<ShellRow> rows;
    std::vector<std::vector<std::size_t>> members;
    double kappa = 1;  // typical upper-quantile of x / scale
};

Shells make_shells(const std::vector<ResidualSample>& s, const EnvelopeOptions& opt) {
    Shells sh;
    double mmax = 0;
    for (auto& r : s) mmax = std::max(mmax, r.scale);
    std::vector<double> ratios;
    for (double lo = opt.min_scale; lo <= mmax; lo *= opt.shell_ratio) {
        double hi = lo * opt.shell_ratio;
        std::vector<std::size_t> idx;
        double sum = 0;
        for (std::size_t i = 0; i < s.size(); ++i)
            if (s[i].scale >= lo && s[i].scale < hi) {
                idx.push_back(i);
                sum += s[i].scale;
            }
        if (idx.size() < opt.min_per_shell) continue;
        ShellRow row;
        row.lo = lo;
        row.hi = hi;
        row.count = idx.size();
        row.scale = sum / double(idx.size());
        std::vector<double> xs;
        for (auto i : idx) xs.push_back(s[i].x);
        ratios.push_back(quantile(xs, opt.quantile) / row.scale);
        sh.rows.push_back(row);
        sh.members.push_back(std::move(idx));
    }
    if (sh.rows.size() < 3) throw Error(ErrorCode::FitFailure, "fewer than 3 populated shells");
    sh.kappa = std::max(1e-9, quantile(ratios, 0.5));
    return sh;
}

std::vector<double> envelopes(const std::vector<ResidualSample>& s, const Shells& sh, double slope, bool upper,
                              double q) {
    std::vector<double> E;
    for (auto& idx : sh.members) {
        std::vector<double> r;
        r.reserve(idx.size());
        for (auto i : idx) r.push_back(upper ? s[i].y - slope * s[i].x : slope * s[i].x - s[i].y);
        E.push_back(quantile(r, q));
    }
    return E;
}

}  // namespace

namespace {

struct FamilyFit {
    AdmissibleFunction v;
    Family family = Family::Constant;
    double score = 0;  // BIC of the chosen candidate
};

FamilyFit fit_family_impl(const std::vector<double>& m, const std::vector<double>& values, Family family) {
    int n = int(m.size());
    std::vector<double> F(values.size());
    for (std::size_t i = 0; i < F.size(); ++i) F[i] = std::max(0.0, values[i]);
    double Fmax = F.empty() ? 0.0 : *std::max_element(F.begin(), F.end());

    struct Cand {
        Family fam;
        double a, b, theta, k, sse;
        int params;
    };
    auto fit2 = [&](Family fam, double theta, double k) {
        Eigen::MatrixXd A(n, 2);
        Eigen::VectorXd y(n);
        PowerLogTerm g{0, 1, theta, k};
        for (int i = 0; i < n; ++i) {
            A(i, 0) = 1;
            A(i, 1) = g(m[i]);
            y[i] = F[i];
        }
        double sse = 0;
        auto c = nnls_free_intercept(A, y, &sse);
        return Cand{fam, c[0], c[1], theta, k, sse, fam == Family::Power ? 3 : 2};
    };

    std::vector<Cand> cands;
    {
        double mean = n ? std::accumulate(F.begin(), F.end(), 0.0) / n : 0.0;
        double sse = 0;
        for (double f : F) sse += (f - mean) * (f - mean);
        cands.push_back({Family::Constant, mean, 0, 0, 0, sse, 1});
    }
    if (family == Family::Log || family == Family::Auto) cands.push_back(fit2(Family::Log, 0.0, 1.0));
    if (family == Family::Power || family == Family::Auto) {
        Cand best{Family::Power, 0, 0, 0, 0, kInf, 3};
        for (int i = 2; i <= 18; ++i) {
            Cand c = fit2(Family::Power, 0.05 * i, 0.0);
            if (c.sse < best.sse) best = c;
        }
        cands.push_back(best);
    }

    // BIC with a noise floor so that exact fits do not dominate.
    double floor2 = std::pow(1e-2 * (1 + Fmax), 2);
    auto bic = [&](const Cand& c) { return n * std::log(c.sse / n + floor2) + c.params * std::log(double(n)); };
    Cand pick = cands[0];
    if (family != Family::Auto && family != Family::Constant) {
        pick = cands.back();
    } else if (family == Family::Auto) {
        double best = kInf;
        for (auto& c : cands) {
            double score = bic(c);
            if (score < best - 1e-9) {
                best = score;
                pick = c;
            }
        }
    }
    double score = bic(pick);
    if (pick.fam == Family::Constant) pick.a = Fmax;
    if (pick.b == 0) pick.fam = Family::Constant, pick.theta = 0, pick.k = 0, pick.a = Fmax;

    // Raise the intercept until v dominates every envelope value, and keep v >= 1.
    PowerLogTerm t{pick.a, pick.b, pick.theta, pick.k};
    double lift = 0;
    for (int i = 0; i < n; ++i) lift = std::max(lift, F[i] - t(m[i]));
    t.a += lift;
    t.a = std::max(t.a, 1.0 - t.b * PowerLogTerm{0, 1, t.theta, t.k}(0.0));
    return {AdmissibleFunction::term(t), pick.fam, score};
}

}  // namespace

AdmissibleFunction fit_family(const std::vector<double>& m, const std::vector<double>& values, Family family,
                              Family* chosen) {
    FamilyFit f = fit_family_impl(m, values, family);
    if (chosen) *chosen = f.family;
    return f.v;
}

EnvelopeFit fit_envelopes(const std::vector<ResidualSample>& s, const EnvelopeOptions& opt) {
    Shells sh = make_shells(s, opt);
    std::vector<double> m;
    for (auto& r : sh.rows) m.push_back(r.scale);
    auto excess = [&](double slope, bool upper) {
        return linear_part(m, envelopes(s, sh, slope, upper, opt.quantile)) / sh.kappa;
    };
    const double lo0 = 1e-3, hi0 = 1e3;
    if (excess(hi0, true) > opt.linear_tol)
        throw Error(ErrorCode::FitFailure, "no upper slope below 1e3 gives sublinear envelopes");
    if (excess(lo0, false) > opt.linear_tol)
        throw Error(ErrorCode::FitFailure, "no lower slope above 1e-3 gives sublinear envelopes");

    // Least upper and greatest lower slope whose excess stays within thr.
    auto upper_at = [&](double thr) {
        double lo = std::log(lo0), hi = std::log(hi0);
        if (excess(lo0, true) <= thr) return lo0;
        for (int i = 0; i < 60 && hi - lo > 1e-6; ++i) {
            double mid = 0.5 * (lo + hi);
            (excess(std::exp(mid), true) > thr ? lo : hi) = mid;
        }
        return std::exp(hi);
    };
    auto lower_at = [&](double thr) {
        double lo = std::log(lo0), hi = std::log(hi0);
        if (excess(hi0, false) <= thr) return hi0;
        for (int i = 0; i < 60 && hi - lo > 1e-6; ++i) {
            double mid = 0.5 * (lo + hi);
            (excess(std::exp(mid), false) > thr ? hi : lo) = mid;
        }
        return std::exp(lo);
    };
    EnvelopeFit fit;
    fit.upper_slope = upper_at(opt.linear_tol);
    fit.lower_slope = lower_at(opt.linear_tol);
    if (fit.lower_slope > fit.upper_slope) {
        // The tolerance band overlaps: a single slope fits both sides. Take the
        // middle of the exact-zero band when it exists, else of the tolerance band.
        double u0 = upper_at(1e-12), l0 = lower_at(1e-12);
        double a = l0 >= u0 ? u0 : fit.upper_slope, b = l0 >= u0 ? l0 : fit.lower_slope;
        double pick = std::sqrt(a * b);
        fit.lower_slope = fit.upper_slope = pick;
    }
    auto Eu = envelopes(s, sh, fit.upper_slope, true, opt.quantile);
    auto El = envelopes(s, sh, fit.lower_slope, false, opt.quantile);
    std::vector<double> F(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) {
        sh.rows[i].upper = Eu[i];
        sh.rows[i].lower = El[i];
        F[i] = std::max({0.0, Eu[i], El[i]});
    }
    fit.v = fit_family(m, F, opt.family, &fit.family);
    auto g = fit.v.growth();
    fit.theta = g.first;
    fit.k = g.second;
    double a = m.front(), b = m.back();
    fit.fitted_exponent = b > a ? std::log(fit.v(b) / fit.v(a)) / std::log(b / a) : 0.0;
    fit.shells = sh.rows;
    return fit;
}

nlohmann::json EnvelopeFit::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (auto& r : shells)
        rows.push_back({{"lo", r.lo}, {"hi", r.hi}, {"scale", r.scale}, {"count", r.count}, {"upper", r.upper},
                        {"lower", r.lower}});
    return {{"lower_slope", lower_slope}, {"upper_slope", upper_slope}, {"fitted_v", v.to_json()},
            {"family", family_name(family)}, {"theta", theta}, {"k", k}, {"fitted_exponent", fitted_exponent},
            {"shells", rows}};
}

// ---------------------------------------------------------------- SBE estimation

std::vector<Point> sample_shell(const Space& space, double lo, double hi, std::size_t n, std::uint64_t seed) {
    std::vector<Point> out;
    out.reserve(n);
    for (std::uint64_t round = 0; out.size() < n; ++round) {
        if (round > 200) throw Error(ErrorCode::InvalidRegion, "shell sampling does not reach the shell");
        auto pts = space.sample({hi}, 4 * n, seed * 1000003ULL + round);
        for (auto& p : pts) {
            double r = space.norm(p);
            if (r >= lo && r < hi) out.push_back(p);
            if (out.size() == n) break;
        }
    }
    return out;
}

SbeEstimate estimate_sbe_constants(const CoarseMap& map, std::size_t n_pairs, double R_max, std::uint64_t seed,
                                   Family family_hint) {
    if (n_pairs < 100) throw Error(ErrorCode::InvalidArgument, "n_pairs must be at least 100");
    const Space& X = *map.source;
    const Space& Y = *map.target;
    std::vector<std::pair<double, double>> shells;
    for (double lo = 1; lo < R_max; lo *= 2) shells.push_back({lo, std::min(2 * lo, R_max)});
    std::size_t per = std::max<std::size_t>(1, n_pairs / shells.size());

    std::vector<std::vector<ResidualSample>> parts(shells.size());
    std::vector<double> gaps(shells.size(), 0.0);
    parallel_for(shells.size(), [&](std::size_t k) {
        auto [lo, hi] = shells[k];
        auto xs = sample_shell(X, lo, hi, per, seed + 7919 * k);
        auto ys = X.sample({hi}, 4 * per, seed + 7919 * k + 1);
        std::vector<Point> inner;
        for (auto& p : ys)
            if (X.norm(p) < hi) inner.push_back(p);
        Rng g = make_rng(seed, 100 + k);
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const Point& a = xs[i];
            const Point& b = inner[std::size_t(uniform(g, 0, double(inner.size()))) % inner.size()];
            double d = X.distance(a, b);
            double d2 = Y.distance(map(a), map(b));
            parts[k].push_back({std::max(X.norm(a), X.norm(b)), d, d2});
        }
        if (map.quasi_inverse) {
            auto targets = sample_shell(Y, lo, hi, std::min<std::size_t>(per, 200), seed + 7919 * k + 2);
            double worst = 0;
            for (auto& y : targets) worst = std::max(worst, Y.distance(y, map(map.quasi_inverse(y))));
            gaps[k] = worst;
        }
    });
    std::vector<ResidualSample> all;
    for (auto& p : parts) all.insert(all.end(), p.begin(), p.end());

    EnvelopeOptions opt;
    opt.family = family_hint;
    EnvelopeFit fit = fit_envelopes(all, opt);
    SbeEstimate est;
    est.lambda_lower = fit.lower_slope;
    est.lambda_upper = fit.upper_slope;
    est.fitted_v = fit.v;
    est.family = fit.family;
    est.shell_residuals = fit.shells;
    est.n_pairs = all.size();
    if (map.quasi_inverse)
        for (std::size_t k = 0; k < shells.size(); ++k) est.surjectivity_defect.push_back({shells[k].second, gaps[k]});
    return est;
}

nlohmann::json SbeEstimate::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (auto& r : shell_residuals)
        rows.push_back({{"scale", r.scale}, {"count", r.count}, {"upper", r.upper}, {"lower", r.lower}});
    nlohmann::json surj = nlohmann::json::array();
    for (auto& [r, g] : surjectivity_defect) surj.push_back({{"radius", r}, {"gap", g}});
    auto gr = fitted_v.growth();
    return {{"lambda_lower", lambda_lower}, {"lambda_upper", lambda_upper}, {"fitted_v", fitted_v.to_json()},
            {"family", family_name(family)}, {"theta", gr.first}, {"k", gr.second},
            {"shell_residuals", rows}, {"surjectivity_defect", surj}, {"n_pairs", n_pairs}};
}

// ---------------------------------------------------------------- thresholds

double up(const AdmissibleFunction& v, double tau) { return tau > 1 ? uparrow(v, tau) : 1.0; }

EmbeddingThresholds embedding_thresholds(double lambda, double f_o_norm, const AdmissibleFunction& v) {
    if (lambda < 1 || f_o_norm < 0) throw Error(ErrorCode::InvalidArgument, "need lambda >= 1 and |f(o)| >= 0");
    EmbeddingThresholds t;
    t.t_circle = std::max(r_epsilon(v, 1.0 / (3 * lambda)), 3 * lambda * f_o_norm);
    t.R_circle = std::max(4 * f_o_norm, 2 * (2 * lambda + 1) * t.t_circle);
    t.v_hat_factor = up(v, 3 * lambda);
    return t;
}

MorseBounds morse_bounds(double lambda, double delta, double c) {
    if (lambda < 1 || delta < 0) throw Error(ErrorCode::InvalidArgument, "need lambda >= 1 and delta >= 0");
    if (c < 6 * lambda * lambda * delta)
        throw Error(ErrorCode::HypothesisViolated, "additive constant below 6 lambda^2 delta");
    MorseBounds m;
    m.h = 12 * (1 + 8 * lambda * lambda);
    m.h_tilde = 16 * (5 + 6 * lambda * lambda);
    m.bound = m.h * (delta + c);
    m.anti_bound = m.h_tilde * (delta + c);
    return m;
}

TrackingConstants tracking_radii(double lambda, double delta, const AdmissibleFunction& v, double L,
                                 bool ray_branch) {
    if (lambda < 1 || delta < 0 || L < 1) throw Error(ErrorCode::InvalidArgument, "need lambda >= 1, delta >= 0, L >= 1");
    if (ray_branch && v.is_bounded())
        throw Error(ErrorCode::UnboundedRequired, "ray tracking radii need an unbounded v");
    TrackingConstants tc;
    tc.lambda = lambda;
    tc.delta = delta;
    tc.L = L;
    tc.v = v;
    auto& P = tc.provenance;
    const double l = lambda, d = delta, lam_lo = 1.0 / lambda;
    auto lv = [&](double c) { return level_sup(v, c); };
    auto r = [&](double eps) { return r_epsilon(v, eps); };

    auto emb = embedding_thresholds(l, 0.0, v);
    tc.t_circle = emb.t_circle;
    tc.R_circle = emb.R_circle;
    tc.v_hat_ref = emb.v_hat_factor;

    double mu = mu_from_delta(d);
    double Mp = std::log(2.0 / (1.0 - std::pow(mu, -0.75 * lam_lo))) / std::log(mu);
    double t0 = std::max(r(l), 4 * l * Mp + 1);
    double h = 12 * (1 + 8 * l * l), ht = 16 * (5 + 6 * l * l);
    double A = up(v, 1 + 8 * l * l);
    double t1 = std::max({tc.t_circle, lv(d), 3 * l * r(1.0 / (2 * h * A)), 12 * l * d, t0});
    double T2 = lv(6 * l * l * d);
    double t2 = std::max(t1, T2);
    double t3 = std::max(lv(h * d), t2);
    double H0 = 2 * h * A + 1;
    tc.H = 1 + H0;
    double t4 = std::max(t3, r(lam_lo / (2 + 2 * H0)));
    double t5 = std::max(t4, lv(8 * d));
    tc.t_track = std::max(t5, 16 * d);
    double t6 = lv(16 * d);
    double t7 = std::max(t6, tc.t_circle);
    double t8 = std::max(t7, r(lam_lo / (6 * tc.H)));
    double R8 = t8 / (6 * l);
    double Ht0 = 2 * up(v, 6 * l) * (H0 + 1);
    tc.H_tilde = 2 * Ht0;
    tc.R_track = std::max({R8, lv(8 * l / Ht0), 16 * d});

    double up2 = up(v, 2);
    double H3 = (4 * l * l * tc.H + 2 * l * up(v, l)) * up2;
    tc.R_sqcap = std::max({3 * tc.R_track, (3 * l / (2 * tc.H_tilde)) * r(1.0 / (8 * l * tc.H_tilde)) + 96 * l * l * d,
                           r(1.0 / (6 * up2 * H3))});
    tc.K = 5;

    double k = std::max({2.0 * tc.K + 1, 8.0, 12 * l * (2 * l + 1)});
    double up3l = up(v, 3 * l);
    tc.H2 = std::max(2 * up(v, 3 * L * k) * (ht + up3l * tc.H_tilde), 2 * up3l * tc.H);
    double Rt0 = tc.R_sqcap;
    double Rt1 = std::max({Rt0, 2 * (2 * l + 1) * r(1.0 / (3 * l)), r(1.0 / (2 * tc.H_tilde))});
    double Rt2 = Rt1;
    double Rt3 = std::max(Rt2, lv((12 + ht) * d) / L);
    tc.R_tilde = std::max(Rt3, r(1.0 / (2 * L * tc.H2)));
    tc.H2_tilde = (2 * tc.H_tilde + ht) * (d + up3l) * up(v, 3 * k);

    double Jp = 2 * tc.H2_tilde * up2, Jm = 2 * tc.H2 * up(v, 4);
    tc.J = std::max(Jp, Jm);
    double R0 = lv(284 * d), R1 = lv(584 * d / Jp);
    tc.R_final = std::max({R0, R1, r(1.0 / (2 * Jp))});

    P = {{"M_prime", Mp}, {"t0", t0}, {"h", h}, {"h_tilde", ht}, {"v_up_1+8l2", A}, {"t1", t1}, {"T2", T2},
         {"t2", t2}, {"t3", t3}, {"H0", H0}, {"t4", t4}, {"t5", t5}, {"t6", t6}, {"t7", t7}, {"t8", t8},
         {"R8", R8}, {"H_tilde0", Ht0}, {"H3", H3}, {"k", k}, {"R_tilde1", Rt1}, {"R_tilde3", Rt3},
         {"J_plus", Jp}, {"J_minus", Jm}, {"R0", R0}, {"R1", R1}};
    return tc;
}

nlohmann::json TrackingConstants::to_json() const {
    nlohmann::json prov = nlohmann::json::object();
    for (auto& [k, x] : provenance) prov[k] = x;
    return {{"input", {{"lambda", lambda}, {"delta", delta}, {"L", L}, {"v", v.to_json()}}},
            {"t_circle", t_circle}, {"R_circle", R_circle}, {"v_hat_ref", v_hat_ref}, {"H", H},
            {"H_tilde", H_tilde}, {"t_track", t_track}, {"R_track", R_track}, {"R_sqcap", R_sqcap}, {"K", K},
            {"H2", H2}, {"H2_tilde", H2_tilde}, {"R_tilde", R_tilde}, {"J", J}, {"R_final", R_final},
            {"provenance", prov}};
}

RadiiGrowth tracking_radii_growth(const AdmissibleFunction& w, double lambda, double delta, double L,
                                  const std::vector<double>& ps) {
    RadiiGrowth g;
    for (double p : ps) {
        auto tc = tracking_radii(lambda, delta, advance(w, p), L, !w.is_bounded());
        RadiiGrowthRow row{p, w(p), tc.R_tilde, tc.R_final};
        g.K_tilde = std::max(g.K_tilde, row.R_tilde / row.w_p);
        g.K = std::max(g.K, row.R / row.w_p);
        g.rows.push_back(row);
    }
    return g;
}

nlohmann::json RadiiGrowth::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (auto& r : this->rows) rows.push_back({{"p", r.p}, {"w_p", r.w_p}, {"R_tilde", r.R_tilde}, {"R", r.R}});
    return {{"rows", rows}, {"K_tilde", K_tilde}, {"K", K}};
}

// ---------------------------------------------------------------- O(u)-paths

namespace {

// Base reparametrization m t + w (sin(om t + ph) - sin ph) with slopes in [1/lambda, lambda].
struct Wiggle {
    double m = 1, w = 0, om = 1, ph = 0;
    double operator()(double t) const { return m * t + w * (std::sin(om * t + ph) - std::sin(ph)); }
};

Wiggle make_wiggle(double lambda, Rng& g, bool perturb) {
    if (!perturb || lambda == 1.0) return {};
    double lo = 1 / lambda, hi = lambda;
    Wiggle b;
    b.m = 0.5 * (lo + hi);
    b.om = uniform(g, 0.05, 1.0);
    b.w = uniform(g, 0, 1) * 0.5 * (hi - lo) / b.om;
    b.ph = uniform(g, -kPi, kPi);
    return b;
}

struct Wave {
    double om = 0, ph = 0;
    double operator()(double t) const { return std::sin(om * t + ph); }
};

Wave make_wave(Rng& g) { return {uniform(g, 0.05, 1.5), uniform(g, -kPi, kPi)}; }

// Lateral and jitter amplitudes for a budget b at parameter t.
struct Perturbation {
    double beta = 1;
    Wave lat, jit;
    bool on = true;
    double lateral(double b, double t) const { return on ? beta * 0.5 * b * lat(t) : 0.0; }
    double jitter(double b, double t, double lambda) const {
        return on ? (1 - beta) * 0.5 * b / lambda * jit(t) : 0.0;
    }
};

Perturbation make_perturbation(Rng& g, bool on) {
    Perturbation p;
    p.on = on;
    p.beta = uniform(g, 0.5, 1.0);
    p.lat = make_wave(g);
    p.jit = make_wave(g);
    return p;
}

// Point at distance |a| from p, perpendicular to g at parameter s.
Point hp_lateral(const GeodesicLine& g, double s, const Point& p, double a) {
    if (a == 0) return p;
    double eps = 1e-4;
    bool fwd = s + eps <= g.hi;
    Point q = g.at(fwd ? s + eps : s - eps);
    double ang = HalfPlane::direction(p, q) + (fwd ? 0.0 : kPi);
    return HalfPlane::offset(p, std::abs(a), ang + (a > 0 ? 0.5 * kPi : -0.5 * kPi));
}

// Vertex k steps off the geodesic at `foot`, avoiding the geodesic's own neighbors.
Point tree_branch_point(const Point& foot, const std::vector<Point>& avoid, int k, int q) {
    if (k <= 0) return foot;
    auto w = foot.coords;
    int lim = w.empty() ? q : q - 1;
    bool found = false;
    for (int l = 0; l < lim && !found; ++l) {
        auto c = w;
        c.push_back(l);
        bool bad = false;
        for (auto& a : avoid)
            if (a.coords == c) bad = true;
        if (!bad) {
            w = c;
            found = true;
        }
    }
    if (!found) return foot;
    for (int i = 1; i < k; ++i) w.push_back(0);
    return {ModelTag::RegularTree, w};
}

int tree_valence(const Space& space) {
    auto t = dynamic_cast<const RegularTree*>(&space);
    if (!t) throw Error(ErrorCode::InvalidArgument, "not a tree");
    return t->valence();
}

void require_supported(const Space& space) {
    if (space.tag() != ModelTag::HalfPlane && space.tag() != ModelTag::RegularTree)
        throw Error(ErrorCode::InvalidArgument, "quasigeodesics are generated in halfplane and tree models only");
}

// Shared builder for segments (clamped to [0, D]) and lines.
OuPath build_explicit(const Space& space, GeodesicLine g, const PathSpec& spec, double t_lo, double t_hi,
                      bool clamp, std::uint64_t seed) {
    Rng rng = make_rng(seed, 0);
    Wiggle base = make_wiggle(spec.lambda, rng, spec.perturb);
    Perturbation pert = make_perturbation(rng, spec.perturb);
    bool tree = space.tag() == ModelTag::RegularTree;
    int q = tree ? tree_valence(space) : 0;
    auto v = spec.v;
    double c = spec.c, lambda = spec.lambda;
    auto budget = [v, c](double t) { return v ? (*v)(std::abs(t)) : c; };

    OuPath P;
    P.model = space.tag();
    P.lambda = spec.lambda;
    P.c = spec.c;
    P.v = spec.v;
    P.reference = g;
    const Space* sp = &space;
    P.eval = [=](double t) {
        double b = budget(t);
        if (tree) {
            // Rounding costs at most 1 per pair; the lateral part gets the rest.
            double s = std::round(base(t));
            if (clamp) s = std::clamp(s, g.lo, g.hi);
            Point foot = g.at(s);
            int k = pert.on ? int(std::floor(std::max(0.0, (b - 1) / 2) * std::abs(pert.lat(t)))) : 0;
            std::vector<Point> avoid;
            if (!clamp || s - 1 >= g.lo) avoid.push_back(g.at(s - 1));
            if (!clamp || s + 1 <= g.hi) avoid.push_back(g.at(s + 1));
            return tree_branch_point(foot, avoid, k, q);
        }
        double s = base(t) + pert.jitter(b, t, lambda);
        if (clamp) s = std::clamp(s, g.lo, g.hi);
        return hp_lateral(g, s, g.at(s), pert.lateral(b, t));
    };
    (void)sp;
    double step = tree ? std::max(1.0, std::round(spec.step)) : spec.step;
    for (double t = t_lo; t < t_hi - 1e-12; t += step) P.t.push_back(t);
    P.t.push_back(t_hi);
    P.points.resize(P.t.size());
    for (std::size_t i = 0; i < P.t.size(); ++i) P.points[i] = P.eval(P.t[i]);
    return P;
}

void post_verify(const OuPath& P, const Space* space) {
    double worst = path_self_audit(P, space);
    if (worst > 1e-7) throw Error(ErrorCode::BudgetViolated, "generated path breaks its budget by " + std::to_string(worst));
}

}  // namespace

double OuPath::budget(double a, double b) const {
    double m = std::max(std::abs(a), std::abs(b));
    return v ? (*v)(m) : c;
}

OuPath generate_quasigeodesic(const Space& space, const Point& a, const Point& b, const PathSpec& spec,
                              std::uint64_t seed) {
    require_supported(space);
    if (spec.lambda < 1) throw Error(ErrorCode::InvalidArgument, "lambda must be at least 1");
    double D = space.distance(a, b);
    if (D == 0) throw Error(ErrorCode::DegenerateEndpoints, "endpoints coincide");
    GeodesicLine g = space.geodesic(a, b);
    PathSpec s = spec;
    bool tree = space.tag() == ModelTag::RegularTree;
    if (!s.v && s.c < (tree ? 1.0 : 1e-12)) s.perturb = false;
    Rng rng = make_rng(seed, 0);
    Wiggle base = make_wiggle(s.lambda, rng, s.perturb);
    double lo = 0, hi = s.lambda * D + 1;
    for (int i = 0; i < 200; ++i) {
        double mid = 0.5 * (lo + hi);
        (base(mid) < D ? lo : hi) = mid;
    }
    double T = tree ? std::ceil(hi - 1e-9) : hi;
    OuPath P = build_explicit(space, g, s, 0.0, T, true, seed);
    post_verify(P, &space);
    return P;
}

OuPath generate_quasigeodesic(const Space& space, const BoundaryPoint& a, const BoundaryPoint& b,
                              const PathSpec& spec, double half_length, std::uint64_t seed) {
    require_supported(space);
    if (same_boundary_point(a, b)) throw Error(ErrorCode::DegenerateEndpoints, "endpoints coincide");
    GeodesicLine g = space.geodesic(a, b);
    PathSpec s = spec;
    if (!s.v && s.c < (space.tag() == ModelTag::RegularTree ? 1.0 : 1e-12)) s.perturb = false;
    OuPath P = build_explicit(space, g, s, -half_length, half_length, false, seed);
    post_verify(P, &space);
    return P;
}

OuPath generate_quasiray(ModelTag model, const PathSpec& spec, const std::vector<double>& windows, double width,
                         std::uint64_t seed, int tree_valence_) {
    if (model != ModelTag::HalfPlane && model != ModelTag::RegularTree)
        throw Error(ErrorCode::InvalidArgument, "framed rays exist in halfplane and tree models only");
    if (tree_valence_ < 3) throw Error(ErrorCode::InvalidArgument, "tree valence must be at least 3");
    Rng rng = make_rng(seed, 0);
    bool tree = model == ModelTag::RegularTree;
    PathSpec s = spec;
    if (!s.v && s.c < (tree ? 1.0 : 1e-12)) s.perturb = false;
    Wiggle base = make_wiggle(s.lambda, rng, s.perturb);
    Perturbation pert = make_perturbation(rng, s.perturb);
    OuPath P;
    P.model = model;
    P.lambda = s.lambda;
    P.c = s.c;
    P.v = s.v;
    P.framed = true;
    double step = tree ? std::max(1.0, std::round(s.step)) : s.step;
    std::vector<double> ts{0.0};
    for (double w : windows) {
        w = tree ? std::round(w) : w;
        if (!std::isfinite(w) || w + step == w)
            throw Error(ErrorCode::InvalidArgument, "window start beyond double resolution of the step");
        for (double t = std::max(w, step); t <= w + width + 1e-9; t += step) ts.push_back(t);
    }
    std::sort(ts.begin(), ts.end());
    ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
    for (double t : ts) {
        double b = P.budget(t, t);
        double foot, lat;
        if (tree) {
            foot = std::round(base(t));
            lat = pert.on ? std::floor(std::max(0.0, (b - 1) / 2) * std::abs(pert.lat(t))) : 0.0;
        } else {
            foot = base(t) + pert.jitter(b, t, s.lambda);
            lat = pert.lateral(b, t);
        }
        P.t.push_back(t);
        P.foot.push_back(foot);
        P.lateral.push_back(lat);
    }
    post_verify(P, nullptr);
    return P;
}

double path_distance(const OuPath& p, std::size_t i, std::size_t j, const Space* space) {
    if (!p.framed) {
        if (!space) throw Error(ErrorCode::InvalidArgument, "explicit path needs its space");
        return space->distance(p.points[i], p.points[j]);
    }
    if (p.model == ModelTag::RegularTree) {
        if (p.foot[i] != p.foot[j]) return std::abs(p.foot[i] - p.foot[j]) + p.lateral[i] + p.lateral[j];
        return std::abs(p.lateral[i] - p.lateral[j]);
    }
    return fermi::distance(p.lateral[i], p.foot[i], p.lateral[j], p.foot[j]);
}

double path_self_audit(const OuPath& p, const Space* space) {
    std::size_t n = p.size();
    std::vector<double> worst(n, -kInf);
    parallel_for(n, [&](std::size_t i) {
        double w = -kInf;
        for (std::size_t j = i + 1; j < n; ++j) {
            double dt = std::abs(p.t[i] - p.t[j]);
            double d = path_distance(p, i, j, space);
            double b = p.budget(p.t[i], p.t[j]);
            double tol = 1e-9 * (1 + d);
            w = std::max({w, dt / p.lambda - b - d - tol, d - p.lambda * dt - b - tol});
        }
        worst[i] = w;
    });
    return n ? *std::max_element(worst.begin(), worst.end()) : -kInf;
}

Report verify_morse(const Space& space, const OuPath& path, double delta) {
    if (path.framed) throw Error(ErrorCode::InvalidArgument, "Morse check needs a finite path");
    if (path.v) throw Error(ErrorCode::InvalidArgument, "Morse check needs a constant budget");
    MorseBounds mb = morse_bounds(path.lambda, delta, path.c);
    Report rep;
    rep.check = "morse";
    rep.params = {{"lambda", path.lambda}, {"c", path.c}, {"delta", delta}, {"space", space.name()},
                  {"samples", path.size()}};
    rep.n_trials = 1;
    rep.bound = mb.bound;

    const Point& a = path.points.front();
    const Point& b = path.points.back();
    double D = space.distance(a, b);
    double dev = 0, anti = 0;
    if (D > 0) {
        GeodesicLine g = space.geodesic(a, b);
        for (auto& p : path.points) dev = std::max(dev, distance_to_geodesic(space, g, p));
        bool tree = space.tag() == ModelTag::RegularTree;
        double ds = tree ? 1.0 : std::min(0.1, D / 20);
        for (double s = 0; s <= D + 1e-12; s += ds) {
            Point q = g.at(std::min(s, D));
            double best = kInf;
            for (auto& p : path.points) best = std::min(best, space.distance(q, p));
            anti = std::max(anti, best);
        }
    }
    // Hypothesis audit in the metric being checked: a faulty metric shows up here.
    double audit = path_self_audit(path, &space);
    rep.max_observed = dev;
    rep.extra = {{"h", mb.h}, {"h_tilde", mb.h_tilde}, {"anti_bound", mb.anti_bound}, {"anti_observed", anti},
                 {"embedding_excess", audit}};
    double tol = 1e-6;
    if (dev > mb.bound + tol) rep.violations.push_back({{"kind", "morse"}, {"observed", dev}, {"bound", mb.bound}});
    if (anti > mb.anti_bound + tol)
        rep.violations.push_back({{"kind", "anti_morse"}, {"observed", anti}, {"bound", mb.anti_bound}});
    if (audit > tol) rep.violations.push_back({{"kind", "embedding"}, {"excess", audit}});
    return rep;
}

Report verify_ray_tracking(const OuPath& ray, const TrackingConstants& tc) {
    if (!ray.framed || !ray.v) throw Error(ErrorCode::InvalidArgument, "ray tracking needs a framed O(u)-ray");
    const AdmissibleFunction& v = *ray.v;
    bool tree = ray.model == ModelTag::RegularTree;
    std::size_t n = ray.size();
    auto norm_at = [&](std::size_t i) {
        return tree ? std::abs(ray.foot[i]) + ray.lateral[i] : fermi::distance(ray.lateral[i], ray.foot[i], 0, 0);
    };
    double g0 = norm_at(0);
    double t_sim = tc.t_track + 2 * tc.lambda * g0;
    double R_sim = tc.R_track + g0;

    // Limit point: direction angles of the far samples must settle on the axis.
    if (!tree) {
        std::size_t from = n > 20 ? n - 20 : 0;
        double spread = 0;
        for (std::size_t i = from; i < n; ++i) spread = std::max(spread, std::abs(fermi::angle(ray.lateral[i], ray.foot[i])));
        if (!(spread < 1e-9)) throw Error(ErrorCode::NonConvergence, "ray samples do not settle on a boundary point");
    } else if (ray.foot.back() - ray.lateral.back() <= ray.foot.front()) {
        throw Error(ErrorCode::NonConvergence, "tree ray samples do not escape");
    }

    Report rep;
    rep.check = "ray_tracking";
    rep.params = {{"lambda", tc.lambda}, {"delta", tc.delta}, {"v", v.to_json()}, {"model", model_name(ray.model)},
                  {"samples", n}};
    rep.bound = tc.H;
    double max1 = 0, max2 = 0;
    std::size_t checked1 = 0, checked2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double t = ray.t[i];
        if (t < t_sim) continue;
        double d = tree ? (ray.foot[i] >= 0 ? ray.lateral[i] : norm_at(i))
                        : fermi::distance_to_axis_ray(ray.lateral[i], ray.foot[i]);
        double ratio = d / v(t);
        ++checked1;
        max1 = std::max(max1, ratio);
        if (ratio > tc.H && rep.violations.size() < kMaxWitnesses)
            rep.violations.push_back({{"kind", "track"}, {"t", t}, {"ratio", ratio}, {"bound", tc.H}});
    }
    // Reverse direction on the stretch of axis covered by each dense run of samples.
    std::size_t i = 1;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && ray.t[j + 1] - ray.t[j] < 1.5 * (ray.t[i + (i + 1 < n)] - ray.t[i]) + 1e-9) ++j;
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (std::size_t k = i; k <= j; ++k) {
            lo = std::min(lo, ray.foot[k]);
            hi = std::max(hi, ray.foot[k]);
        }
        double margin = 0.1 * (hi - lo);
        double ds = tree ? 1.0 : 0.25;
        for (double s = std::ceil(lo + margin); s <= hi - margin; s += ds) {
            if (s < R_sim) continue;
            double best = kInf;
            for (std::size_t k = i; k <= j; ++k) {
                double d = tree ? (ray.foot[k] == s ? ray.lateral[k] : std::abs(ray.foot[k] - s) + ray.lateral[k])
                                : fermi::distance(0.0, s, ray.lateral[k], ray.foot[k]);
                best = std::min(best, d);
            }
            double ratio = best / v(s);
            ++checked2;
            max2 = std::max(max2, ratio);
            if (ratio > tc.H_tilde && rep.violations.size() < kMaxWitnesses)
                rep.violations.push_back({{"kind", "anti_track"}, {"s", s}, {"ratio", ratio}, {"bound", tc.H_tilde}});
        }
        i = j + 1;
    }
    if (checked1 == 0) throw Error(ErrorCode::InvalidArgument, "no samples beyond the tracking threshold");
    rep.n_trials = checked1 + checked2;
    rep.max_observed = max1;
    rep.extra = {{"H_tilde", tc.H_tilde}, {"anti_observed", max2}, {"t_track", t_sim}, {"R_track", R_sim},
                 {"checked_track", checked1}, {"checked_anti", checked2}};
    return rep;
}

double distance_between_paths(const Space& space, const OuPath& p1, const OuPath& p2) {
    if (p1.framed || p2.framed || !p1.eval || !p2.eval)
        throw Error(ErrorCode::InvalidArgument, "path distance needs explicit paths");
    std::size_t n1 = p1.size(), n2 = p2.size();
    std::vector<double> rowmin(n1, kInf);
    std::vector<std::size_t> rowarg(n1, 0);
    parallel_for(n1, [&](std::size_t i) {
        for (std::size_t j = 0; j < n2; ++j) {
            double d = space.distance(p1.points[i], p2.points[j]);
            if (d < rowmin[i]) rowmin[i] = d, rowarg[i] = j;
        }
    });
    std::size_t bi = std::min_element(rowmin.begin(), rowmin.end()) - rowmin.begin();
    double best = rowmin[bi];
    double s1 = p1.t[bi], s2 = p2.t[rowarg[bi]];
    double h = 0;
    for (std::size_t k = 1; k < n1; ++k) h = std::max(h, p1.t[k] - p1.t[k - 1]);
    for (std::size_t k = 1; k < n2; ++k) h = std::max(h, p2.t[k] - p2.t[k - 1]);
    auto inside = [](const OuPath& p, double t) { return t >= p.t.front() && t <= p.t.back(); };
    for (int it = 0; it < 30; ++it) {
        double prev = best;
        double c1 = s1, c2 = s2;
        for (int a = -4; a <= 4; ++a)
            for (int b = -4; b <= 4; ++b) {
                double u1 = c1 + a * h / 4, u2 = c2 + b * h / 4;
                if (!inside(p1, u1) || !inside(p2, u2)) continue;
                double d = space.distance(p1.eval(u1), p2.eval(u2));
                if (d < best) best = d, s1 = u1, s2 = u2;
            }
        h /= 4;
        if (prev - best < 1e-3 && h < 1e-3) break;
    }
    return best;
}

Report verify_distance_transfer(const Space& space, const OuPath& p1, const OuPath& p2, double delta,
                                const AdmissibleFunction& v, double L, const TransferOptions& opt) {
    const GeodesicLine& g1 = p1.reference;
    const GeodesicLine& g2 = p2.reference;
    if (!g1.end_lo || !g1.end_hi || !g2.end_lo || !g2.end_hi)
        throw Error(ErrorCode::InvalidArgument, "distance transfer needs bi-infinite paths");
    std::array<BoundaryPoint, 4> e{*g1.end_lo, *g1.end_hi, *g2.end_lo, *g2.end_hi};
    double lambda = std::max(p1.lambda, p2.lambda);
    TrackingConstants tc = tracking_radii(lambda, delta, v, L, true);

    nlohmann::json hyp = nlohmann::json::object();
    std::vector<std::string> failing;
    bool distinct = true;
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j)
            if (same_boundary_point(e[i], e[j])) distinct = false;
    hyp["i_distinct_endpoints"] = distinct;
    if (!distinct) throw Error(ErrorCode::HypothesisUnsatisfiable, "clause (i): endpoints are not distinct");
    double lo = kInf, hi = -kInf;
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j) {
            auto gp = space.boundary_product_closed_form(e[i], e[j]);
            double x = gp ? *gp : boundary_gromov_product(space, e[i], e[j]).value;
            lo = std::min(lo, x);
            hi = std::max(hi, x);
        }
    bool floor_ok = delta > 0 ? lo >= 60 * delta : lo > 0;
    hyp["iv_min_product"] = lo;
    hyp["iv_floor_ok"] = floor_ok;
    if (!floor_ok) failing.push_back("(iv) min Gromov product below 60 delta");
    hyp["iv_max_product"] = hi;
    hyp["iv_required_max"] = tc.R_final;
    if (!(hi >= tc.R_final)) failing.push_back("(iv) max Gromov product below R");
    for (int k = 0; k < 2; ++k) {
        const OuPath& p = k == 0 ? p1 : p2;
        double n0 = space.norm(p.eval(0.0));
        double inf = kInf;
        for (auto& q : p.points) inf = std::min(inf, space.norm(q));
        std::string key = "v_path" + std::to_string(k + 1);
        hyp[key] = {{"norm0", n0}, {"inf_norm", inf}, {"R_tilde", tc.R_tilde}};
        if (!(n0 >= tc.R_tilde)) failing.push_back("(v) |path(0)| below R_tilde");
        if (!(n0 <= L * inf)) failing.push_back("(v) |path(0)| above L inf |path|");
    }
    if (!failing.empty() && !opt.waive_scale_hypotheses)
        throw Error(ErrorCode::HypothesisUnsatisfiable, "clause " + failing.front());

    double d_geo = space.tag() == ModelTag::HalfPlane ? HalfPlane::line_distance(e[0], e[1], e[2], e[3])
                                                      : distance_between_geodesics(space, g1, g2);
    double d_path = distance_between_paths(space, p1, p2);
    Report rep;
    rep.check = "distance_transfer";
    rep.params = {{"lambda", lambda}, {"delta", delta}, {"L", L}, {"v", v.to_json()}};
    rep.n_trials = 1;
    rep.bound = tc.J * v(hi);
    rep.max_observed = std::abs(d_geo - d_path);
    rep.extra = {{"d_geodesics", d_geo}, {"d_paths", d_path}, {"J", tc.J}, {"hypotheses", hyp},
                 {"waived", failing}};
    if (rep.max_observed > rep.bound + 1e-6)
        rep.violations.push_back({{"observed", rep.max_observed}, {"bound", rep.bound}});
    return rep;
}

BoundaryPoint boundary_map(const CoarseMap& map, const BoundaryPoint& xi) {
    GeodesicLine g = map.source->ray(xi);
    std::vector<double> prev;
    for (int k = 0; k <= 40; ++k) {
        double t = std::ldexp(1.0, k);
        std::vector<double> c = map.target->chart(map(g.at(t)));
        if (k > 0 && map.target->chart_distance(c, prev) < 1e-5) return map.target->from_chart(c);
        prev = std::move(c);
    }
    throw Error(ErrorCode::NonConvergence, "boundary chart did not settle after 40 doublings");
}

}  // namespace coarse
