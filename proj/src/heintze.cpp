#include "coarse/heintze.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "coarse/util.hpp"

namespace coarse {

HeintzeSpec HeintzeSpec::abelian_diag(const std::vector<double>& eigenvalues) {
    std::vector<JordanBlock> b;
    for (double e : eigenvalues) b.push_back({e, 1});
    return abelian(b);
}

HeintzeSpec HeintzeSpec::abelian(const std::vector<JordanBlock>& blocks) {
    HeintzeSpec s;
    s.type = NType::Abelian;
    s.blocks = blocks;
    s.m = 0;
    for (auto& b : blocks) s.m += b.size;
    s.validate();
    double mn = std::numeric_limits<double>::infinity();
    for (auto& b : blocks) mn = std::min(mn, b.eigenvalue);
    s.normalized = mn == 1.0;
    return s;
}

HeintzeSpec HeintzeSpec::heisenberg(int m, double horizontal) {
    HeintzeSpec s;
    s.type = NType::Heisenberg;
    s.m = m;
    for (int i = 0; i < 2 * m; ++i) s.blocks.push_back({horizontal, 1});
    s.blocks.push_back({2.0 * horizontal, 1});
    s.validate();
    s.normalized = horizontal == 1.0;
    return s;
}

int HeintzeSpec::dim() const { return type == NType::Abelian ? m : 2 * m + 1; }

std::vector<double> HeintzeSpec::eigenvalues() const {
    std::vector<double> e;
    for (auto& b : blocks)
        for (int i = 0; i < b.size; ++i) e.push_back(b.eigenvalue);
    return e;
}

void HeintzeSpec::validate() const {
    if (blocks.empty()) throw Error(ErrorCode::InvalidSpec, "no eigenvalues");
    for (auto& b : blocks) {
        if (!(b.eigenvalue > 0.0)) throw Error(ErrorCode::NonPositiveEigenvalue, "eigenvalue <= 0");
        if (b.size < 1 || b.size > 2) throw Error(ErrorCode::InvalidSpec, "Jordan blocks of size 1 or 2 only");
    }
    if (type == NType::Heisenberg) {
        if (m < 1 || static_cast<int>(blocks.size()) != 2 * m + 1)
            throw Error(ErrorCode::InvalidSpec, "Heisenberg(m) needs 2m+1 eigenvalues");
        double a = blocks[0].eigenvalue;
        for (int i = 0; i < 2 * m; ++i)
            if (blocks[i].eigenvalue != a || blocks[i].size != 1)
                throw Error(ErrorCode::InvalidSpec, "Heisenberg horizontal layer must be scalar");
        if (std::abs(blocks.back().eigenvalue - 2.0 * a) > 1e-12 * a)
            throw Error(ErrorCode::InvalidSpec, "Heisenberg center eigenvalue must be twice the horizontal one");
    }
}

std::string HeintzeSpec::label() const {
    std::ostringstream o;
    o << (type == NType::Abelian ? "Abelian(" : "Heisenberg(") << m << ")[";
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        if (i) o << ",";
        o << blocks[i].eigenvalue;
        if (blocks[i].size > 1) o << "^J" << blocks[i].size;
    }
    o << "]";
    return o.str();
}

nlohmann::json HeintzeSpec::to_json() const {
    nlohmann::json j;
    j["n_type"] = type == NType::Abelian ? "abelian" : "heisenberg";
    j["m"] = m;
    j["blocks"] = nlohmann::json::array();
    for (auto& b : blocks) j["blocks"].push_back({{"eigenvalue", b.eigenvalue}, {"size", b.size}});
    j["normalized"] = normalized;
    return j;
}

HeintzeSpec normalize(const HeintzeSpec& s) {
    s.validate();
    double mn = std::numeric_limits<double>::infinity();
    for (auto& b : s.blocks) mn = std::min(mn, b.eigenvalue);
    HeintzeSpec out = s;
    for (auto& b : out.blocks) b.eigenvalue /= mn;
    out.normalized = true;
    return out;
}

double homogeneous_dimension(const HeintzeSpec& s) {
    if (!s.normalized) throw Error(ErrorCode::NotNormalized, "p = tr alpha needs a normalized spec");
    double p = 0.0;
    for (auto& b : s.blocks) p += b.eigenvalue * b.size;
    return p;
}

bool is_carnot_type(const HeintzeSpec& s) {
    if (!s.normalized) throw Error(ErrorCode::NotNormalized, "Carnot type is defined for normalized specs");
    // abelianization: all of R^k, or the horizontal layer of Heisenberg
    std::size_t nab = s.type == HeintzeSpec::NType::Abelian ? s.blocks.size() : s.blocks.size() - 1;
    for (std::size_t i = 0; i < nab; ++i)
        if (s.blocks[i].eigenvalue != 1.0 || s.blocks[i].size != 1) return false;
    return true;
}

std::vector<double> dilate(const HeintzeSpec& s, double t, const std::vector<double>& n) {
    std::vector<double> out(n.size());
    std::size_t i = 0;
    for (auto& b : s.blocks) {
        double e = std::exp(b.eigenvalue * t);
        if (b.size == 1) {
            out[i] = e * n[i];
        } else {
            out[i] = e * (n[i] + t * n[i + 1]);
            out[i + 1] = e * n[i + 1];
        }
        i += b.size;
    }
    return out;
}

namespace {

// Largest tau with exp(-lambda tau) max(|x1 - tau x2|, |x2|) = 1. The left side
// is nonincreasing in tau when lambda >= 1.
double jordan2_log_norm(double lambda, double x1, double x2) {
    if (x2 == 0.0) {
        if (x1 == 0.0) return -std::numeric_limits<double>::infinity();
        return std::log(std::abs(x1)) / lambda;
    }
    auto G = [&](double tau) {
        return -lambda * tau + std::log(std::max(std::abs(x1 - tau * x2), std::abs(x2)));
    };
    double lo = std::log(std::abs(x2)) / lambda;  // G(lo) >= 0
    double step = 1.0;
    double hi = lo + step;
    while (G(hi) > 0.0) {
        lo = hi;
        step *= 2.0;
        hi = lo + step;
    }
    for (int i = 0; i < 200; ++i) {
        double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) break;
        if (G(mid) > 0.0) lo = mid;
        else hi = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

double quasinorm(const HeintzeSpec& s, const std::vector<double>& n) {
    if (!s.normalized) throw Error(ErrorCode::NotNormalized, "quasimetric needs a normalized spec");
    if (static_cast<int>(n.size()) != s.dim()) throw Error(ErrorCode::InvalidArgument, "coordinate size");
    if (s.type == HeintzeSpec::NType::Heisenberg) {
        double v2 = 0.0;
        for (int i = 0; i < 2 * s.m; ++i) v2 += n[i] * n[i];
        double z = n[2 * s.m];
        return std::pow(v2 * v2 + z * z, 0.25);
    }
    double best = 0.0;
    std::size_t i = 0;
    for (auto& b : s.blocks) {
        if (b.size == 1) {
            if (n[i] != 0.0) best = std::max(best, std::pow(std::abs(n[i]), 1.0 / b.eigenvalue));
        } else {
            double lt = jordan2_log_norm(b.eigenvalue, n[i], n[i + 1]);
            best = std::max(best, std::exp(lt));
        }
        i += b.size;
    }
    return best;
}

std::vector<double> group_mul(const HeintzeSpec& s, const std::vector<double>& a,
                              const std::vector<double>& b) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    if (s.type == HeintzeSpec::NType::Heisenberg) {
        int m = s.m;
        double w = 0.0;
        for (int i = 0; i < m; ++i) w += a[i] * b[m + i] - a[m + i] * b[i];
        out[2 * m] += 0.5 * w;
    }
    return out;
}

std::vector<double> group_inv(const HeintzeSpec&, const std::vector<double>& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = -a[i];
    return out;
}

double homogeneous_quasimetric(const HeintzeSpec& s, const std::vector<double>& n1,
                               const std::vector<double>& n2) {
    return quasinorm(s, group_mul(s, group_inv(s, n1), n2));
}

double halton(std::uint64_t index, int base) {
    double f = 1.0, r = 0.0;
    while (index > 0) {
        f /= base;
        r += f * static_cast<double>(index % base);
        index /= base;
    }
    return r;
}

namespace {

const int kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};

std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Low-discrepancy points in [0,1)^d with a seeded rotation.
struct Halton {
    int d;
    std::vector<double> shift;
    Halton(int dim, std::uint64_t seed) : d(dim) {
        if (dim > 12) throw Error(ErrorCode::InvalidArgument, "Halton dimension above 12");
        Rng g = make_rng(seed, 0x4a17);
        for (int i = 0; i < d; ++i) shift.push_back(uniform(g));
    }
    void point(std::uint64_t idx, std::vector<double>& out) const {
        out.resize(d);
        for (int i = 0; i < d; ++i) {
            double v = halton(idx + 1, kPrimes[i]) + shift[i];
            out[i] = v - std::floor(v);
        }
    }
};

std::pair<double, double> ols_slope(const std::vector<double>& x, const std::vector<double>& y) {
    std::size_t n = x.size();
    double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    double b = sxy / sxx;
    double ss = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double r = y[i] - my - b * (x[i] - mx);
        ss += r * r;
    }
    double se = n > 2 ? std::sqrt(ss / (n - 2) / sxx) : 0.0;
    return {b, se};
}

}  // namespace

BoxCountResult box_counting_dimension(const HeintzeSpec& s, BoxRegion region,
                                      const std::vector<double>& scales, std::uint64_t seed,
                                      std::size_t n_points) {
    if (scales.size() < 4) throw Error(ErrorCode::InsufficientScales, "need at least 4 scales");
    if (!s.normalized) throw Error(ErrorCode::NotNormalized, "box counting needs a normalized spec");
    const int d = s.dim();
    Halton h(d, seed);

    // sample the region
    std::vector<std::vector<double>> pts;
    pts.reserve(n_points);
    std::vector<double> u;
    for (std::uint64_t idx = 0; pts.size() < n_points; ++idx) {
        h.point(idx, u);
        std::vector<double> x(d);
        if (region.kind == BoxRegion::Kind::UnitCube) {
            x = u;
        } else {
            for (int i = 0; i < d; ++i) x[i] = 2.0 * u[i] - 1.0;
            if (quasinorm(s, x) > 1.0) continue;
        }
        pts.push_back(std::move(x));
        if (idx > 100 * n_points) throw Error(ErrorCode::InvalidRegion, "rejection sampling stalled");
    }

    BoxCountResult res;
    res.scales = scales;
    res.n_points = pts.size();
    res.counts.resize(scales.size());
    parallel_for(scales.size(), [&](std::size_t si) {
        double eps = scales[si];
        std::unordered_set<std::uint64_t> boxes;
        boxes.reserve(pts.size());
        std::vector<long long> idx(d);
        for (auto& x : pts) {
            if (s.type == HeintzeSpec::NType::Heisenberg) {
                // left-invariant tiling: integer Heisenberg lattice in polarized coordinates
                int m = s.m;
                double zp = x[2 * m];
                for (int i = 0; i < m; ++i) zp += 0.5 * x[i] * x[m + i];
                std::vector<double> X(m), Y(m);
                for (int i = 0; i < m; ++i) {
                    X[i] = x[i] / eps;
                    Y[i] = x[m + i] / eps;
                }
                double Z = zp / (eps * eps);
                double ay = 0.0;
                for (int i = 0; i < m; ++i) {
                    idx[i] = static_cast<long long>(std::floor(X[i]));
                    idx[m + i] = static_cast<long long>(std::floor(Y[i]));
                    ay += static_cast<double>(idx[i]) * (Y[i] - static_cast<double>(idx[m + i]));
                }
                idx[2 * m] = static_cast<long long>(std::floor(Z - ay));
            } else {
                auto y = dilate(s, -std::log(eps), x);
                for (int i = 0; i < d; ++i) idx[i] = static_cast<long long>(std::floor(y[i]));
            }
            std::uint64_t key = 0x1234567ull;
            for (int i = 0; i < d; ++i) key = mix(key ^ static_cast<std::uint64_t>(idx[i]));
            boxes.insert(key);
        }
        res.counts[si] = static_cast<double>(boxes.size());
    });

    // Scales with more boxes than n/8 are undersampled and flatten the curve.
    std::vector<double> lx, ly;
    for (std::size_t i = 1; i + 1 < scales.size(); ++i) {
        if (res.counts[i] > static_cast<double>(pts.size()) / 8) continue;
        lx.push_back(std::log(1.0 / scales[i]));
        ly.push_back(std::log(res.counts[i]));
    }
    res.n_used = lx.size();
    if (lx.size() < 3) throw Error(ErrorCode::InsufficientScales, "fewer than 3 interior scales are well sampled");
    auto [b, se] = ols_slope(lx, ly);
    res.estimate = b;
    res.stderr_ = se;
    return res;
}

namespace {

bool direction_ok(const HeintzeSpec& s, int direction) {
    if (s.type != HeintzeSpec::NType::Abelian) return false;
    int i = 0;
    for (auto& b : s.blocks) {
        if (direction == i) return b.eigenvalue == 1.0;  // first vector of a block is an eigenvector
        if (direction > i && direction < i + b.size) return false;
        i += b.size;
    }
    return false;
}

}  // namespace

double line_transversal_measure(const HeintzeSpec& s, int direction, double r, std::uint64_t seed,
                                std::size_t n_samples) {
    if (!direction_ok(s, direction))
        throw Error(ErrorCode::DirectionNotUnitEigenvector, "direction must be an eigenvector of eigenvalue 1");
    if (r <= 0.0) return 0.0;
    const int d = s.dim();
    // bounding box of B(0, r) = exp(log r alpha) [-1, 1]^d
    std::vector<double> ext(d, 0.0);
    for (int j = 0; j < d; ++j) {
        std::vector<double> e(d, 0.0);
        e[j] = 1.0;
        auto c = dilate(s, std::log(r), e);
        for (int i = 0; i < d; ++i) ext[i] += std::abs(c[i]);
    }
    if (d == 1) return 1.0;
    Halton h(d - 1, seed);
    double vol = 1.0;
    for (int i = 0; i < d; ++i)
        if (i != direction) vol *= 2.0 * ext[i];
    double span = 4.0 * ext[direction];
    std::size_t hit = 0;
    std::vector<double> u, x(d);
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    for (std::size_t k = 0; k < n_samples; ++k) {
        h.point(k, u);
        int c = 0;
        for (int i = 0; i < d; ++i)
            if (i != direction) x[i] = (2.0 * u[c++] - 1.0) * ext[i];
        auto f = [&](double t) {
            x[direction] = t;
            return quasinorm(s, x);
        };
        // the quasinorm is quasiconvex along the line
        double a = -span, b = span;
        double p = b - g * (b - a), q = a + g * (b - a);
        double fp = f(p), fq = f(q);
        for (int it = 0; it < 100 && b - a > 1e-12 * span; ++it) {
            if (fp < fq) { b = q; q = p; fq = fp; p = b - g * (b - a); fp = f(p); }
            else { a = p; p = q; fp = fq; q = a + g * (b - a); fq = f(q); }
        }
        if (std::min(fp, fq) <= r) ++hit;
    }
    return vol * static_cast<double>(hit) / static_cast<double>(n_samples);
}

LineCountResult line_count_scaling(const HeintzeSpec& s, int direction, const std::vector<double>& radii,
                                   std::uint64_t seed, std::size_t n_samples) {
    if (!direction_ok(s, direction))
        throw Error(ErrorCode::DirectionNotUnitEigenvector, "direction must be an eigenvector of eigenvalue 1");
    const int d = s.dim();
    double p = homogeneous_dimension(s);
    // mu(B(0,1)) by Monte Carlo; mu(B(0,r)) = r^p mu(B(0,1)) since det exp(t alpha) = e^{t p}
    Halton h(d, seed ^ 0xb011ull);
    std::size_t in = 0;
    std::vector<double> u, x(d);
    for (std::size_t k = 0; k < n_samples; ++k) {
        h.point(k, u);
        for (int i = 0; i < d; ++i) x[i] = 2.0 * u[i] - 1.0;
        if (quasinorm(s, x) <= 1.0) ++in;
    }
    double mu1 = std::pow(2.0, d) * static_cast<double>(in) / static_cast<double>(n_samples);

    LineCountResult res;
    res.expected = (p - 1.0) / p;
    std::vector<double> lx, ly;
    for (double r : radii) {
        double t = line_transversal_measure(s, direction, r, seed, n_samples);
        double m = r > 0.0 ? std::pow(r, p) * mu1 : 0.0;
        res.radii.push_back(r);
        res.transversal_measure.push_back(t);
        res.ball_measure.push_back(m);
        if (r > 0.0 && t > 0.0) {
            lx.push_back(std::log(m));
            ly.push_back(std::log(t));
        }
    }
    if (lx.size() < 2) throw Error(ErrorCode::InsufficientScales, "need two positive radii");
    res.exponent = ols_slope(lx, ly).first;
    return res;
}

int dim_R(DivisionAlgebra K) {
    switch (K) {
        case DivisionAlgebra::R: return 1;
        case DivisionAlgebra::C: return 2;
        case DivisionAlgebra::H: return 4;
        case DivisionAlgebra::O: return 8;
    }
    return 0;
}

std::string SymmetricSpaceId::label() const {
    const char* k = "R";
    switch (K) {
        case DivisionAlgebra::R: k = "R"; break;
        case DivisionAlgebra::C: k = "C"; break;
        case DivisionAlgebra::H: k = "H"; break;
        case DivisionAlgebra::O: k = "O"; break;
    }
    return std::string(k) + "H^" + std::to_string(n);
}

void validate_id(const SymmetricSpaceId& id) {
    if (id.n < 2) throw Error(ErrorCode::InvalidId, id.label() + ": n must be at least 2");
    if (id.K == DivisionAlgebra::O && id.n != 2) throw Error(ErrorCode::InvalidId, "octonionic case only for n = 2");
}

InvariantRecord symmetric_space_invariants(const SymmetricSpaceId& id) {
    validate_id(id);
    int d = dim_R(id.K);
    InvariantRecord r;
    r.dim_X = id.n * d;
    r.dim_boundary = r.dim_X - 1;
    r.dim_Im_K = d - 1;
    r.p = r.dim_X - 1 + r.dim_Im_K;
    return r;
}

std::string Verdict::str() const {
    switch (kind) {
        case Kind::Homothetic: return "Homothetic";
        case Kind::DistinguishedByTopDim: return "DistinguishedBy(topdim)";
        case Kind::DistinguishedByP: return "DistinguishedBy(p)";
        case Kind::Undistinguished: return "Undistinguished";
    }
    return "?";
}

Verdict sbe_distinguishable(const SymmetricSpaceId& a, const SymmetricSpaceId& b) {
    auto ra = symmetric_space_invariants(a);
    auto rb = symmetric_space_invariants(b);
    if (a == b) return {Verdict::Kind::Homothetic};
    if (ra.dim_boundary != rb.dim_boundary) return {Verdict::Kind::DistinguishedByTopDim};
    if (ra.p != rb.p) return {Verdict::Kind::DistinguishedByP};
    return {Verdict::Kind::Undistinguished};
}

std::vector<SymmetricSpaceId> symmetric_spaces_up_to(int max_dim) {
    std::vector<SymmetricSpaceId> out;
    for (auto K : {DivisionAlgebra::R, DivisionAlgebra::C, DivisionAlgebra::H, DivisionAlgebra::O}) {
        for (int n = 2; n * dim_R(K) <= max_dim; ++n) {
            if (K == DivisionAlgebra::O && n != 2) break;
            out.push_back({K, n});
        }
    }
    return out;
}

}  // namespace coarse
