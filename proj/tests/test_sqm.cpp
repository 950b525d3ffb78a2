#include <doctest.h>

#include <cmath>
#include <memory>

#include "coarse/sqm.hpp"

using namespace coarse;

namespace {

const double kE = std::exp(1.0);

BoundaryPoint real(double x) { return HalfPlane::ideal(x); }

// Visual metric on the boundary of the half-plane seen from (0, 1).
BoundaryMetric visual(std::shared_ptr<const HalfPlane> H) {
    return [H](const BoundaryPoint& a, const BoundaryPoint& b) {
        return std::exp(-*H->boundary_product_closed_form(a, b));
    };
}

BoundaryMetric heintze_metric(const HeintzeSpec& s) {
    return [s](const BoundaryPoint& a, const BoundaryPoint& b) { return homogeneous_quasimetric(s, a.coords, b.coords); };
}

BoundaryMetric abs_metric() {
    return [](const BoundaryPoint& a, const BoundaryPoint& b) { return std::abs(a.coords[0] - b.coords[0]); };
}

struct HeintzeCase {
    HeintzeSpec s1 = normalize(HeintzeSpec::abelian_diag({1, 1}));
    HeintzeSpec s2 = normalize(HeintzeSpec::abelian({{1.0, 2}}));
    LogModelPair pair = make_heintze_logmodel_pair(s1, s2);
    BoundaryFn phi = [this](const BoundaryPoint& x) { return boundary_map(pair.map, x); };
};

}  // namespace

TEST_CASE("identity passes with unit constants") {
    auto H = std::make_shared<HalfPlane>();
    BoundaryFn id = [](const BoundaryPoint& x) { return x; };
    auto e = sqm_check(id, visual(H), visual(H), clustered_quadruples(ModelTag::HalfPlane, {0.3}, 0.5), 2000, 1);
    CHECK(e.alpha_lower == doctest::Approx(1).epsilon(0.01));
    CHECK(e.alpha_upper == doctest::Approx(1).epsilon(0.01));
    CHECK(e.family == Family::Constant);
    CHECK(e.n_quadruples == 2000);
}

TEST_CASE("boundary map of a radial map") {
    auto H = std::make_shared<HalfPlane>();
    auto m = make_radial_sbe(H, AdmissibleFunction::constant(1), 1);
    BoundaryFn phi = [&](const BoundaryPoint& x) { return boundary_map(m, x); };
    SqmOptions o;
    o.nu = kE;
    auto e = sqm_check(phi, visual(H), visual(H), clustered_quadruples(ModelTag::HalfPlane, {0.3}, 0.5), 3000, 3, o);
    CHECK(std::abs(e.alpha_lower - 1) <= 0.05);
    CHECK(std::abs(e.alpha_upper - 1) <= 0.05);
    CHECK(e.family == Family::Constant);
}

TEST_CASE("log-model boundary identity is logarithmic") {
    HeintzeCase hc;
    SqmOptions o;
    o.S_max = 30;
    auto e = sqm_check(hc.phi, heintze_metric(hc.s1), heintze_metric(hc.s2),
                       clustered_quadruples(ModelTag::HeintzeLog, {0, 0}), 8000, 1, o);
    CHECK(e.family == Family::Log);
    CHECK(e.theta < 0.05);
    CHECK(e.k >= 1);
    CHECK(e.alpha_upper >= 0.8);
    CHECK(e.alpha_upper <= 1.25);
    CHECK(e.alpha_lower <= e.alpha_upper);
}

TEST_CASE("sqm argument checks") {
    auto H = std::make_shared<HalfPlane>();
    BoundaryFn id = [](const BoundaryPoint& x) { return x; };
    auto samp = clustered_quadruples(ModelTag::HalfPlane, {0.0});
    CHECK_THROWS_AS(sqm_check(id, visual(H), visual(H), samp, 10, 1), Error);
    BoundaryMetric zero = [](const BoundaryPoint&, const BoundaryPoint&) { return 0.0; };
    CHECK_THROWS_AS(sqm_check(id, zero, zero, samp, 200, 1), Error);
}

TEST_CASE("annuli") {
    auto H = std::make_shared<HalfPlane>();
    auto rho = visual(H);
    AnnulusSpec A{real(0.2), 1e-4, 1e-2};
    CHECK(A.modulus() == doctest::Approx(std::log(100.0)));
    CHECK_THROWS_AS((AnnulusSpec{real(0), 0.5, 0.1}.validate()), Error);
    auto pts = annulus_points(rho, A, 1, 400, 1);
    for (const auto& p : pts) {
        CHECK(rho(A.center, p) >= A.r * (1 - 1e-9));
        CHECK(rho(A.center, p) <= A.s * (1 + 1e-9));
    }
    BoundaryFn id = [](const BoundaryPoint& x) { return x; };
    double D1 = annulus_threshold(0.5, 1.0, 2.0);
    CHECK(D1 == doctest::Approx(std::pow(0.5, 4) / 4 * (2.0 / 3)));
    auto r = annulus_image_modulus(id, A, pts, rho, 1.0, AdmissibleFunction::constant(1), D1);
    CHECK(r.measured <= r.modulus + 1e-9);
    CHECK(r.measured >= 0.9 * r.modulus);
    CHECK(r.measured <= r.bound);
    CHECK_THROWS_AS(annulus_image_modulus(id, AnnulusSpec{real(0), 1e-3, 0.5}, pts, rho, 1.0,
                                          AdmissibleFunction::constant(1), D1),
                    Error);
}

TEST_CASE("moebius maps: image modulus within a constant of 2 lambda M") {
    auto H = std::make_shared<HalfPlane>();
    auto rho = visual(H);
    // x -> (2x + 1) / (x + 3), an isometry of the half-plane acting on the boundary.
    BoundaryFn mob = [](const BoundaryPoint& p) { return real((2 * p.coords[0] + 1) / (p.coords[0] + 3)); };
    double D1 = annulus_threshold(0.5, 1.0, 2.0);
    double worst = -1e9;
    for (double r : {1e-3, 1e-4, 1e-5, 1e-6}) {
        AnnulusSpec A{real(0.1), r, std::min(D1, 30 * r)};
        auto pts = annulus_points(rho, A, 1, 300, 7);
        auto res = annulus_image_modulus(mob, A, pts, rho, 1.0, AdmissibleFunction::constant(1), D1);
        worst = std::max(worst, res.measured - 2 * res.modulus);
        CHECK(res.measured <= res.bound);
    }
    CHECK(worst <= 1.0);
}

TEST_CASE("uniform perfectness on a dense sample") {
    std::vector<BoundaryPoint> pts;
    for (int i = 0; i <= 200; ++i) pts.push_back(real(i / 200.0));
    double t = uniform_perfectness(abs_metric(), pts, 0.05, 0.5);
    CHECK(t > 0.5);
    CHECK(t <= 1.0);
}

TEST_CASE("moduli of continuity") {
    PairSampler near_zero = [](Rng& g, double S) {
        double h = std::exp(-S);
        double x = uniform(g) < 0.5 ? 0.0 : uniform(g, 0.5, 1.0 - h);
        return std::make_pair(real(x), real(x + h));
    };
    BoundaryFn id = [](const BoundaryPoint& x) { return x; };
    auto f = modulus_of_continuity(id, abs_metric(), abs_metric(), near_zero, 3000, 1);
    CHECK(f.lambda_lower == doctest::Approx(1).epsilon(0.02));
    CHECK(f.family == Family::Constant);

    const double alpha = 0.6;
    BoundaryFn holder = [&](const BoundaryPoint& p) { return real(std::pow(p.coords[0], alpha)); };
    // One decade of scales cannot separate 0.4 m from m^0.75; S runs to 30.
    auto h = modulus_of_continuity(holder, abs_metric(), abs_metric(), near_zero, 4000, 2, 30.0);
    CHECK(h.lambda_lower == doctest::Approx(alpha).epsilon(0.05));
    CHECK(h.worst_excess <= 1e-9);
}

TEST_CASE("composition") {
    auto H = std::make_shared<HalfPlane>();
    BoundaryFn id = [](const BoundaryPoint& x) { return x; };
    auto samp = clustered_quadruples(ModelTag::HalfPlane, {0.3}, 0.5);
    SqmOptions o;
    o.source = "A";
    o.target = "B";
    auto e1 = sqm_check(id, visual(H), visual(H), samp, 1000, 1, o);
    o.source = "B";
    o.target = "C";
    auto e2 = sqm_check(id, visual(H), visual(H), samp, 1000, 2, o);
    auto c = compose_sqm(e1, e2);
    CHECK(c.alpha_lower == doctest::Approx(e1.alpha_lower * e2.alpha_lower));
    CHECK(c.alpha_upper == doctest::Approx(e1.alpha_upper * e2.alpha_upper));
    CHECK(c.source == "A");
    CHECK(c.target == "C");
    CHECK(c.family == Family::Constant);
    for (double m : {1.0, 10.0, 100.0}) CHECK(c.fitted_v(m) >= e2.fitted_v(m));
    CHECK_THROWS_AS(compose_sqm(e2, e2), Error);
}

TEST_CASE("predicted composite envelope dominates the measured one") {
    HeintzeCase hc;
    SqmOptions o;
    o.S_max = 30;
    o.source = "diag";
    o.target = "jordan";
    auto samp = clustered_quadruples(ModelTag::HeintzeLog, {0, 0});
    auto psi = sqm_check(hc.phi, heintze_metric(hc.s1), heintze_metric(hc.s2), samp, 8000, 2, o);
    BoundaryFn id = [](const BoundaryPoint& x) { return x; };
    o.source = "jordan";
    o.target = "jordan";
    auto phi = sqm_check(id, heintze_metric(hc.s2), heintze_metric(hc.s2), samp, 2000, 3, o);
    auto pred = compose_sqm(psi, phi);
    // phi o psi = psi, measured directly on the same samples.
    o.source = "diag";
    auto direct = sqm_check(hc.phi, heintze_metric(hc.s1), heintze_metric(hc.s2), samp, 8000, 2, o);
    CHECK(pred.alpha_upper >= direct.alpha_upper * (1 - 1e-3));
    CHECK(pred.alpha_lower <= direct.alpha_lower * (1 + 1e-3));
    for (const auto& row : direct.residual_table) CHECK(pred.fitted_v(row.scale) >= direct.fitted_v(row.scale) - 1e-9);
}

TEST_CASE("estimate json") {
    auto H = std::make_shared<HalfPlane>();
    BoundaryFn id = [](const BoundaryPoint& x) { return x; };
    auto e = sqm_check(id, visual(H), visual(H), clustered_quadruples(ModelTag::HalfPlane, {0.0}), 500, 4);
    auto j = e.to_json();
    for (const char* k : {"alpha_lower", "alpha_upper", "fitted_v", "epsilon_scale", "residual_table", "nu"})
        CHECK(j.contains(k));
}
