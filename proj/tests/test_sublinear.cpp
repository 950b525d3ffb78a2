#include <doctest.h>

#include <cmath>

#include "coarse/sublinear.hpp"
#include "coarse/util.hpp"

using namespace coarse;

namespace {

AdmissibleFunction random_term(Rng& g) {
    double a = uniform(g, 1.0, 3.0), b = uniform(g, 0.0, 2.0), th = uniform(g, 0.0, 0.8);
    double k = std::floor(uniform(g, 0.0, 3.0));
    return AdmissibleFunction::power_log(a, b, th, k);
}

// Independent oracle: dense scan for the last r with u(r) > eps r.
double scan_r_eps(const AdmissibleFunction& u, double eps, double hi) {
    double last = 0;
    for (double r = 1e-6; r <= hi; r *= 1.0005)
        if (u(r) > eps * r) last = r;
    return last;
}

}  // namespace

TEST_CASE("evaluate on the family") {
    CHECK(AdmissibleFunction::constant(1)(17.0) == 1.0);
    CHECK(AdmissibleFunction::power_log(1, 1, 0.5, 0)(3.0) == doctest::Approx(3.0).epsilon(1e-14));
    CHECK(AdmissibleFunction::power_log(1, 1, 0, 1)(0.0) == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("r_epsilon") {
    CHECK(r_epsilon(AdmissibleFunction::constant(1), 0.01) == doctest::Approx(100.0));
    double golden = 0.5 * (1 + std::sqrt(5.0));
    CHECK(r_epsilon(AdmissibleFunction::power_log(0, 1, 0.5, 0), 1.0) == doctest::Approx(golden).epsilon(1e-9));
    CHECK_THROWS_AS(r_epsilon(AdmissibleFunction::constant(1), 0.0), Error);
}

TEST_CASE("r_epsilon against a dense scan, random family members") {
    for (std::uint64_t i = 0; i < 40; ++i) {
        Rng g = make_rng(101, i);
        auto u = random_term(g);
        double eps = uniform(g, 0.2, 1.0);
        double r = r_epsilon(u, eps);
        CHECK(r >= 1.0 / eps * u(0.0) - 1e-9);  // u >= 1 forces r >= 1 / eps
        CHECK(r == doctest::Approx(scan_r_eps(u, eps, 4 * r + 10)).epsilon(1e-3));
    }
}

TEST_CASE("uparrow") {
    CHECK(uparrow(AdmissibleFunction::constant(5), 3.0) == 1.0);
    auto u = AdmissibleFunction::constant(1) + AdmissibleFunction::power_log(0, 1, 0.5, 0);
    CHECK(uparrow(u, 4.0) == doctest::Approx(2.0).epsilon(1e-6));
    auto lg = AdmissibleFunction::power_log(0, 1, 0, 1);
    double v = uparrow(lg, 2.0);
    CHECK(v > 1.0);
    CHECK(std::isfinite(v));
    // Oracle: plain grid maximum never exceeds the reported sup.
    double grid = 0;
    for (double r = 0; r < 1e4; r += 0.01) grid = std::max(grid, lg(2 * r) / lg(r));
    CHECK(v >= grid - 1e-12);
    CHECK(v <= grid + 1e-4);
}

TEST_CASE("advance") {
    auto u = AdmissibleFunction::power_log(1, 2, 0.3, 1);
    auto u0 = advance(u, 0.0);
    for (double r = 0; r < 1e3; r += 7.3) CHECK(u0(r) == u(r));
    CHECK(advance(u, 5.0)(2.0) == doctest::Approx(u(7.0)));
}

TEST_CASE("property: advancing does not raise uparrow") {
    for (std::uint64_t i = 0; i < 30; ++i) {
        Rng g = make_rng(202, i);
        auto u = random_term(g);
        double p = uniform(g, 0.0, 200.0), tau = uniform(g, 1.5, 8.0);
        CHECK(uparrow(advance(u, p), tau) <= uparrow(u, tau) * (1 + 1e-9));
    }
}

TEST_CASE("property: r_eps of an advanced function is controlled by u(p)") {
    for (std::uint64_t i = 0; i < 30; ++i) {
        Rng g = make_rng(303, i);
        auto u = random_term(g);
        double eps = uniform(g, 0.1, 0.9);
        double p = r_epsilon(u, eps / 2) * uniform(g, 1.0, 3.0);
        double lhs = r_epsilon(advance(u, p), eps);
        double rhs = uparrow(u, 2.0) / eps * u(p);
        CHECK(lhs <= rhs * (1 + 1e-9));
    }
}

TEST_CASE("property: closure operations stay admissible") {
    for (std::uint64_t i = 0; i < 30; ++i) {
        Rng g = make_rng(404, i);
        auto x = random_term(g), y = random_term(g);
        double c = uniform(g, 1.0, 4.0);
        for (const auto& f : {max(x, y), x + y, c * x, advance(x, uniform(g, 0, 50))}) {
            std::string why;
            CHECK_MESSAGE(f.check_admissible(&why), why);
            for (double r = 0; r < 500; r += 13.1) CHECK(f(2 * r) <= f(r) * uparrow(f, 2.0) * (1 + 1e-9));
        }
        CHECK(max(x, y)(9.0) == std::max(x(9.0), y(9.0)));
        CHECK((x + y)(9.0) == doctest::Approx(x(9.0) + y(9.0)));
    }
}

TEST_CASE("json round trip") {
    auto f = max(AdmissibleFunction::power_log(1, 2, 0.25, 1), 3.0 * advance(AdmissibleFunction::constant(2), 4));
    auto g = AdmissibleFunction::from_json(f.to_json());
    for (double r : {0.0, 1.0, 10.0, 1e5}) CHECK(g(r) == f(r));
    CHECK(g.to_json() == f.to_json());
}

TEST_CASE("level_sup") {
    auto u = AdmissibleFunction::power_log(1, 1, 0.5, 0);
    CHECK(level_sup(u, 0.5) == 0.0);
    CHECK(level_sup(u, 3.0) == doctest::Approx(3.0).epsilon(1e-9));  // 1 + sqrt(1 + r) = 3
    CHECK(std::isinf(level_sup(AdmissibleFunction::constant(1), 2.0)));
}
