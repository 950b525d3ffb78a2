#include <doctest.h>

#include <cmath>
#include <memory>

#include "coarse/coarse_maps.hpp"

using namespace coarse;

namespace {

const double kDeltaH = std::log(1 + std::sqrt(2.0));  // thin-triangle constant of H^2, ample for four-point

AdmissibleFunction sqrt_v() { return AdmissibleFunction::power_log(1, 1, 0.5, 0); }

}  // namespace

TEST_CASE("radial maps") {
    auto H = std::make_shared<HalfPlane>();
    auto m = make_radial_sbe(H, AdmissibleFunction::constant(1), 1);
    for (const auto& p : H->sample({8.0}, 50, 3)) {
        double r = H->norm(p);
        if (r < 1e-6) continue;
        CHECK(H->norm(m(p)) == doctest::Approx(r + 1).epsilon(1e-9));
        CHECK(H->distance(p, m(p)) == doctest::Approx(1).epsilon(1e-7));
    }
    auto shrink = make_radial_sbe(H, AdmissibleFunction::constant(1), -1);
    for (const auto& p : H->sample({8.0}, 50, 4)) CHECK(H->distance(p, shrink(p)) <= 1 + 1e-9);

    auto T = std::make_shared<RegularTree>(3);
    auto tm = make_radial_sbe(T, sqrt_v(), 1);
    for (const auto& p : T->sample({8.0}, 50, 5)) {
        double r = T->norm(p);
        double want = r > 0 ? std::round(r + sqrt_v()(r)) : 0;
        CHECK(T->norm(tm(p)) == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("log-model pair of equal specs is an isometry") {
    auto pair = make_heintze_logmodel_pair(HeintzeSpec::abelian_diag({1, 1}), HeintzeSpec::abelian_diag({1, 1}));
    auto pts = pair.first->sample({5.0}, 30, 1);
    for (std::size_t i = 0; i + 1 < pts.size(); ++i)
        CHECK(pair.second->distance(pair.map(pts[i]), pair.map(pts[i + 1])) ==
              doctest::Approx(pair.first->distance(pts[i], pts[i + 1])).epsilon(1e-12));
}

TEST_CASE("thresholds") {
    auto t = embedding_thresholds(1, 0, AdmissibleFunction::constant(1));
    CHECK(t.t_circle == doctest::Approx(3));
    CHECK(t.R_circle == doctest::Approx(18));
    CHECK(t.v_hat_factor == doctest::Approx(1));
    auto big = embedding_thresholds(2, 1e4, sqrt_v());
    CHECK(big.t_circle == doctest::Approx(3 * 2 * 1e4));

    auto m1 = morse_bounds(1, 0.5, 3);
    CHECK(m1.h == 108);
    CHECK(m1.h_tilde == 176);
    CHECK(morse_bounds(2, 0.5, 12).h == 396);
    CHECK(morse_bounds(1, 0, 1).bound == 108);
    CHECK_THROWS_AS(morse_bounds(1, 1, 1), Error);
}

// Thresholds built from r_epsilon grow with v. The tracking chain also uses
// level sets of v, which shrink as v grows, so the radii themselves are not
// monotone; each kind of term is checked on its own under v -> c v.
TEST_CASE("property: thresholds grow with v, level-set terms shrink") {
    for (std::uint64_t i = 0; i < 15; ++i) {
        Rng g = make_rng(61, i);
        double lam = uniform(g, 1, 3), fo = uniform(g, 0, 5);
        auto v1 = AdmissibleFunction::power_log(uniform(g, 1, 2), uniform(g, 0, 1), uniform(g, 0.1, 0.6), 0);
        auto v2 = v1 + AdmissibleFunction::power_log(uniform(g, 0, 1), uniform(g, 0, 1), uniform(g, 0.1, 0.6), 1);
        auto a = embedding_thresholds(lam, fo, v1), b = embedding_thresholds(lam, fo, v2);
        CHECK(a.t_circle <= b.t_circle * (1 + 1e-9));
        CHECK(a.R_circle <= b.R_circle * (1 + 1e-9));
        double c = uniform(g, 1, 3);
        auto ta = tracking_radii(lam, 0.7, v1, 10), tb = tracking_radii(lam, 0.7, c * v1, 10);
        CHECK(ta.t_circle <= tb.t_circle * (1 + 1e-9));
        CHECK(ta.H == doctest::Approx(tb.H));  // up-arrow is scale invariant
        for (const char* k : {"T2", "t6", "R0"}) CHECK(ta.provenance.at(k) >= tb.provenance.at(k) * (1 - 1e-9));
    }
}

TEST_CASE("tracking constants") {
    auto tc = tracking_radii(2, 0.7, sqrt_v(), 36);
    CHECK(tc.K == 5);
    CHECK(std::isfinite(tc.J));
    CHECK(tc.H > 0);
    CHECK_THROWS_AS(tracking_radii(2, 0.7, AdmissibleFunction::constant(3), 36), Error);
    auto gr = tracking_radii_growth(AdmissibleFunction::power_log(1, 1, 0, 1), 2, 0.7, 10, {0, 10, 100, 1e3, 1e4});
    CHECK(std::isfinite(gr.K_tilde));
    CHECK(std::isfinite(gr.K));
    for (const auto& row : gr.rows) {
        CHECK(row.R_tilde <= gr.K_tilde * row.w_p * (1 + 1e-12));
        CHECK(row.R <= gr.K * row.w_p * (1 + 1e-12));
    }
}

TEST_CASE("unperturbed paths are geodesics") {
    HalfPlane H;
    PathSpec s;
    s.lambda = 1;
    s.c = 6 * kDeltaH;
    s.perturb = false;
    auto P = generate_quasigeodesic(H, HalfPlane::point(-2, 0.5), HalfPlane::point(3, 2), s, 1);
    auto r = verify_morse(H, P, kDeltaH);
    CHECK(r.max_observed == doctest::Approx(0).epsilon(1e-6));
    CHECK(r.passed());
}

TEST_CASE("property: perturbed half-plane paths satisfy the Morse bounds") {
    HalfPlane H;
    for (std::uint64_t i = 0; i < 40; ++i) {
        Rng g = make_rng(62, i);
        PathSpec s;
        s.lambda = i % 2 ? 2.0 : 1.0;
        s.c = (i % 4 < 2 ? 6 : 12) * s.lambda * s.lambda * kDeltaH;
        auto a = H.sample({8.0}, 1, 1000 + i)[0], b = H.sample({8.0}, 1, 2000 + i)[0];
        auto P = generate_quasigeodesic(H, a, b, s, i);
        CHECK(path_self_audit(P, &H) <= 1e-7);
        auto r = verify_morse(H, P, kDeltaH);
        CHECK(r.passed());
        CHECK(r.max_observed <= 12 * (1 + 8 * s.lambda * s.lambda) * (kDeltaH + s.c));
    }
}

TEST_CASE("v-budget path passes the pairwise check") {
    HalfPlane H;
    PathSpec s;
    s.lambda = 2;
    s.v = sqrt_v();
    auto P = generate_quasigeodesic(H, HalfPlane::point(0, 1), HalfPlane::point(0, std::exp(20.0)), s, 3);
    CHECK(path_self_audit(P, &H) <= 1e-7);
}

TEST_CASE("tree paths: integer deviations") {
    RegularTree T(3);
    for (std::uint64_t i = 0; i < 10; ++i) {
        PathSpec s;
        s.lambda = 2;
        s.c = 4;
        auto a = T.sample({8.0}, 1, 10 + i)[0], b = T.sample({8.0}, 1, 20 + i)[0];
        if (T.distance(a, b) < 2) continue;
        auto P = generate_quasigeodesic(T, a, b, s, i);
        auto r = verify_morse(T, P, 0.0);
        CHECK(r.passed());
        CHECK(r.max_observed == std::round(r.max_observed));
    }
}

TEST_CASE("corrupted metric fails the embedding audit") {
    auto H = std::make_shared<HalfPlane>();
    CorruptedSpace C(H, 3.0);
    PathSpec s;
    s.lambda = 2;
    s.c = 24 * kDeltaH;
    auto P = generate_quasigeodesic(*H, H->sample({8.0}, 1, 1)[0], H->sample({8.0}, 1, 2)[0], s, 3);
    auto r = verify_morse(C, P, kDeltaH);
    CHECK_FALSE(r.passed());
}

TEST_CASE("ray tracking") {
    auto tc = tracking_radii(2, kDeltaH, sqrt_v(), 36);
    std::vector<double> win{1.01 * tc.t_track, 2 * tc.t_track};
    PathSpec s;
    s.lambda = 2;
    s.v = sqrt_v();
    s.step = 0.5;
    s.perturb = false;
    auto flat = generate_quasiray(ModelTag::HalfPlane, s, win, 20, 1);
    auto r0 = verify_ray_tracking(flat, tc);
    CHECK(r0.max_observed == doctest::Approx(0).epsilon(1e-9));
    s.perturb = true;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        CHECK(verify_ray_tracking(generate_quasiray(ModelTag::HalfPlane, s, win, 20, seed), tc).passed());
        auto tr = verify_ray_tracking(generate_quasiray(ModelTag::RegularTree, s, win, 20, seed), tc);
        CHECK(tr.passed());
    }
}

TEST_CASE("distance transfer") {
    HalfPlane H;
    PathSpec s;
    s.lambda = 1;
    s.v = sqrt_v();
    s.perturb = false;
    auto p1 = generate_quasigeodesic(H, HalfPlane::ideal(-3), HalfPlane::ideal(3), s, 30, 1);
    auto p2 = generate_quasigeodesic(H, HalfPlane::ideal(-1), HalfPlane::ideal(1), s, 30, 2);
    CHECK_THROWS_AS(verify_distance_transfer(H, p1, p2, kDeltaH, sqrt_v(), 2), Error);
    TransferOptions w;
    w.waive_scale_hypotheses = true;
    auto r = verify_distance_transfer(H, p1, p2, kDeltaH, sqrt_v(), 2, w);
    CHECK(r.max_observed == doctest::Approx(0).epsilon(1e-3));
    CHECK(r.passed());
    CHECK(r.extra["d_geodesics"].get<double>() == doctest::Approx(std::log(3.0)).epsilon(1e-9));

    s.perturb = true;
    for (std::uint64_t i = 0; i < 4; ++i) {
        auto q1 = generate_quasigeodesic(H, HalfPlane::ideal(-4), HalfPlane::ideal(4), s, 25, 10 + i);
        auto q2 = generate_quasigeodesic(H, HalfPlane::ideal(-0.5), HalfPlane::ideal(0.5), s, 25, 20 + i);
        CHECK(verify_distance_transfer(H, q1, q2, kDeltaH, sqrt_v(), 2, w).passed());
    }
    // Shared endpoint: unsatisfiable even with the waiver.
    auto shared = generate_quasigeodesic(H, HalfPlane::ideal(-3), HalfPlane::ideal(1), s, 25, 3);
    CHECK_THROWS_AS(verify_distance_transfer(H, p1, shared, kDeltaH, sqrt_v(), 2, w), Error);
}

TEST_CASE("boundary maps") {
    auto H = std::make_shared<HalfPlane>();
    auto id = identity_map(H);
    auto rad = make_radial_sbe(H, sqrt_v(), 1);
    for (double x : {-3.0, -0.2, 0.0, 0.7, 5.0}) {
        CHECK(boundary_map(id, HalfPlane::ideal(x)).coords[0] == doctest::Approx(x).epsilon(1e-4));
        CHECK(boundary_map(rad, HalfPlane::ideal(x)).coords[0] == doctest::Approx(x).epsilon(1e-4));
    }
    auto pair = make_heintze_logmodel_pair(HeintzeSpec::abelian_diag({1, 1}), HeintzeSpec::abelian({{1.0, 2}}));
    BoundaryPoint xi{ModelTag::HeintzeLog, {0.25, -0.5}, false, {}, {}};
    auto img = boundary_map(pair.map, xi);
    CHECK(img.coords[0] == doctest::Approx(0.25).epsilon(1e-4));
    CHECK(img.coords[1] == doctest::Approx(-0.5).epsilon(1e-4));
}

TEST_CASE("envelope family fits") {
    std::vector<double> m, v;
    for (double x = 1; x < 1e4; x *= 1.3) {
        m.push_back(x);
        v.push_back(2 + 3 * std::log(std::exp(1.0) + x));
    }
    Family f;
    auto fit = fit_family(m, v, Family::Auto, &f);
    CHECK(f == Family::Log);
    for (std::size_t i = 0; i < m.size(); ++i) CHECK(fit(m[i]) >= v[i] - 1e-9);

    std::vector<double> p;
    for (double x : m) p.push_back(1 + 2 * std::pow(1 + x, 0.5));
    fit_family(m, p, Family::Auto, &f);
    CHECK(f == Family::Power);
    CHECK(family_from_name(family_name(Family::Power)) == Family::Power);
}

TEST_CASE("sbe estimates") {
    auto H = std::make_shared<HalfPlane>();
    auto e = estimate_sbe_constants(identity_map(H), 3000, 64, 1);
    CHECK(e.lambda_lower == doctest::Approx(1).epsilon(0.02));
    CHECK(e.lambda_upper == doctest::Approx(1).epsilon(0.02));
    CHECK(e.fitted_v.is_constant());

    auto rc = estimate_sbe_constants(make_radial_sbe(H, AdmissibleFunction::constant(1), 1), 3000, 128, 2);
    CHECK(std::abs(rc.lambda_lower - 1) <= 0.05);
    CHECK(std::abs(rc.lambda_upper - 1) <= 0.05);
    CHECK(rc.family == Family::Constant);

    // Planted sqrt: the finite window biases theta low, so the band is wider than the slope band.
    auto rs = estimate_sbe_constants(make_radial_sbe(H, sqrt_v(), 1), 6000, 256, 3);
    CHECK(std::abs(rs.lambda_lower - 1) <= 0.05);
    CHECK(std::abs(rs.lambda_upper - 1) <= 0.05);
    CHECK(rs.family == Family::Power);
    CHECK(rs.fitted_v.growth().first >= 0.2);
    CHECK(rs.fitted_v.growth().first <= 0.6);

    auto T = std::make_shared<RegularTree>(3);
    auto st = estimate_sbe_constants(make_tree_stretch(T, 2), 3000, 64, 4);
    CHECK(st.lambda_upper == doctest::Approx(2).epsilon(0.05));

    auto pair = make_heintze_logmodel_pair(HeintzeSpec::abelian_diag({1, 1}), HeintzeSpec::abelian({{1.0, 2}}));
    auto he = estimate_sbe_constants(pair.map, 4000, 256, 1);
    CHECK(he.family == Family::Log);
    CHECK(he.fitted_v.growth().first == 0.0);
    CHECK(he.fitted_v.growth().second >= 1.0);
    for (const auto& [r, gap] : he.surjectivity_defect) CHECK(gap <= he.fitted_v(r) + 1e-9);
}
