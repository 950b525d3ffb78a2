#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <memory>

#include "coarse/hyperbolicity.hpp"

using namespace coarse;

namespace {

Configuration line_config(const std::vector<double>& xs) {
    std::size_t n = xs.size();
    std::vector<double> d(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) d[i * n + j] = std::abs(xs[i] - xs[j]);
    return Configuration::from_matrix(n, d);
}

// Oracle: Gromov-product form of the four-point condition, every ordered
// quadruple, products computed from the raw matrix.
double delta_products(const Configuration& c) {
    auto gp = [&](std::size_t x, std::size_t y, std::size_t w) { return 0.5 * (c.d(x, w) + c.d(y, w) - c.d(x, y)); };
    double best = 0;
    for (std::size_t w = 0; w < c.n; ++w)
        for (std::size_t x = 0; x < c.n; ++x)
            for (std::size_t y = 0; y < c.n; ++y)
                for (std::size_t z = 0; z < c.n; ++z)
                    best = std::max(best, std::min(gp(x, y, w), gp(y, z, w)) - gp(x, z, w));
    return best;
}

}  // namespace

TEST_CASE("gromov product") {
    auto c = line_config({0, 3, 5});
    CHECK(gromov_product(c, 1, 2, 0) == 3.0);
    CHECK(gromov_product(c, 2, 2, 0) == c.d(2, 0));
    // Star: center 0, leaves 1..3.
    std::vector<double> star{0, 1, 1, 1, 1, 0, 2, 2, 1, 2, 0, 2, 1, 2, 2, 0};
    CHECK(gromov_product(Configuration::from_matrix(4, star), 1, 2, 0) == 0.0);
}

TEST_CASE("four-point delta") {
    CHECK(delta_four_point(line_config({0})).delta == 0.0);
    RegularTree T(3);
    for (std::uint64_t s = 0; s < 5; ++s) CHECK(delta_four_point(sample_configuration(T, {5.0}, 40, s)).delta == 0.0);

    double r2 = std::sqrt(2.0);
    std::vector<double> sq{0, 1, r2, 1, 1, 0, 1, r2, r2, 1, 0, 1, 1, r2, 1, 0};
    auto square = Configuration::from_matrix(4, sq);
    auto est = delta_four_point(square);
    CHECK(est.delta == doctest::Approx(delta_products(square)).epsilon(1e-15));
    CHECK(est.delta == doctest::Approx(r2 - 1).epsilon(1e-15));  // regression constant
    CHECK(est.exhaustive);
}

TEST_CASE("property: delta equals the product-form oracle") {
    HalfPlane H;
    Hyperboloid Y(3);
    for (std::uint64_t s = 0; s < 6; ++s) {
        for (const Space* sp : std::initializer_list<const Space*>{&H, &Y}) {
            auto c = sample_configuration(*sp, {5.0}, 14, s);
            CHECK(delta_four_point(c).delta == doctest::Approx(delta_products(c)).epsilon(1e-9));
        }
    }
}

TEST_CASE("property: quadruple defect is invariant under relabelling") {
    HalfPlane H;
    auto c = sample_configuration(H, {6.0}, 4, 12);
    std::array<std::size_t, 4> p{0, 1, 2, 3};
    double ref = quadruple_defect(c, 0, 1, 2, 3);
    do {
        CHECK(quadruple_defect(c, p[0], p[1], p[2], p[3]) == doctest::Approx(ref).epsilon(1e-14));
    } while (std::next_permutation(p.begin(), p.end()));
}

TEST_CASE("witness is reported and deterministic") {
    HalfPlane H;
    auto c = sample_configuration(H, {6.0}, 60, 3);
    auto a = delta_four_point(c), b = delta_four_point(c);
    CHECK(a.witness == b.witness);
    auto w = a.witness;
    CHECK(quadruple_defect(c, w[0], w[1], w[2], w[3]) == a.delta);
}

TEST_CASE("audits on the half-plane") {
    HalfPlane H;
    auto c = sample_configuration(H, {6.0}, 200, 5);
    double delta = std::max(std::log(1 + std::sqrt(2.0)), delta_four_point(c).delta);

    auto con = audit_lemma(H, 1.0, LemmaId::Contraction, 10000, 1);
    CHECK(con.violation_count == 0);
    CHECK(con.max_observed <= 16.0 + kAuditTol);

    AuditOptions exact;
    exact.eta = 0.0;
    auto lined = audit_lemma(H, delta, LemmaId::LinedUpProduct, 200, 2, exact);
    CHECK(lined.max_observed == doctest::Approx(0).epsilon(1e-6));
    CHECK(lined.violation_count == 0);

    auto ps = audit_lemma(H, delta, LemmaId::ProjectionSup, 500, 3);
    CHECK(ps.violation_count == 0);
    CHECK(ps.to_report().margin() > 0);
}

TEST_CASE("audits on the tree") {
    RegularTree T(3);
    for (auto id : {LemmaId::Contraction, LemmaId::RightTriangle, LemmaId::Quadrilateral, LemmaId::ProjectionSup}) {
        auto r = audit_lemma(T, 0.0, id, 300, 4);
        CHECK_MESSAGE(r.violation_count == 0, lemma_name(id));
    }
}

TEST_CASE("corrupted metric trips an audit") {
    auto H = std::make_shared<HalfPlane>();
    CorruptedSpace C(H, 3.0);
    AuditOptions o;
    o.check_pilot_delta = false;
    auto r = audit_lemma(C, 0.5, LemmaId::Contraction, 2000, 1, o);
    CHECK(r.violation_count >= 1);
    CHECK(!r.to_report().passed());
}

TEST_CASE("audit argument checks") {
    HalfPlane H;
    CHECK_THROWS_AS(audit_lemma(H, 0.01, LemmaId::Contraction, 10, 1), Error);  // below the pilot estimate
    CHECK_THROWS_AS(audit_lemma(H, 1.0, LemmaId::Contraction, 0, 1), Error);
    for (auto id : {LemmaId::Contraction, LemmaId::Connectedness, LemmaId::LinedUpProduct, LemmaId::RightTriangle,
                    LemmaId::Quadrilateral, LemmaId::ProjectionSup, LemmaId::LinearDivergence})
        CHECK(lemma_from_name(lemma_name(id)) == id);
    CHECK_THROWS_AS(lemma_from_name("nope"), Error);
}
