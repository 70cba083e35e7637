#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mfvpinn/quadrature.hpp"
#include "test_oracles.hpp"

using namespace mfvpinn;

TEST_CASE("composite reference rule integrates monomials exactly") {
  for (int q = 2; q <= 5; ++q) {
    const ReferenceRules rules = reference_rules(q);
    CHECK(rules.composite.weight_sum() == doctest::Approx(1.0).epsilon(1e-14));
    for (int a = 0; a <= q; ++a) {
      for (int b = 0; a + b <= q; ++b) {
        double num = 0.0;
        for (std::size_t l = 0; l < rules.composite.size(); ++l)
          num += rules.composite.weights[l] * std::pow(rules.composite.nodes[l].x, a) *
                 std::pow(rules.composite.nodes[l].y, b);
        CHECK(std::abs(num - oracles::rect_monomial(0, 1, 0, 1, a, b)) < 1e-12);
      }
    }
  }
}

TEST_CASE("q=3 composite examples") {
  const ReferenceRules rules = reference_rules(3);
  double xxy = 0.0;
  for (std::size_t l = 0; l < rules.composite.size(); ++l)
    xxy += rules.composite.weights[l] * rules.composite.nodes[l].x *
           rules.composite.nodes[l].x * rules.composite.nodes[l].y;
  CHECK(xxy == doctest::Approx(1.0 / 6.0).epsilon(1e-13));

  // Integral of x over the bottom fan triangle ((0,0),(1,0),(0.5,0.5)):
  // centroid x times area = 0.5 * 0.25.
  const QuadratureRule& t0 = rules.triangle[0];
  double ix = 0.0;
  for (std::size_t l = 0; l < t0.size(); ++l) ix += t0.weights[l] * t0.nodes[l].x;
  CHECK(ix == doctest::Approx(0.125).epsilon(1e-13));
  CHECK(t0.weight_sum() == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("exactness survives the patch map") {
  const ReferenceRules rules = reference_rules(3);
  Rng rng(9);
  for (int t = 0; t < 20; ++t) {
    const Vec2 lo{rng.uniform(0.0, 0.5), rng.uniform(0.0, 0.5)};
    const Vec2 hi{lo.x + rng.uniform(0.05, 0.5), lo.y + rng.uniform(0.05, 0.5)};
    const Patch patch = Patch::from_bounds(t, lo, hi, 0);
    const QuadratureRule rule = map_rule(rules.composite, patch);
    for (int a = 0; a <= 3; ++a) {
      for (int b = 0; a + b <= 3; ++b) {
        double num = 0.0;
        for (std::size_t l = 0; l < rule.size(); ++l)
          num += rule.weights[l] * std::pow(rule.nodes[l].x, a) * std::pow(rule.nodes[l].y, b);
        CHECK(std::abs(num - oracles::rect_monomial(lo.x, hi.x, lo.y, hi.y, a, b)) < 1e-12);
      }
    }
  }
}

TEST_CASE("map_rule scales weights by the area ratio") {
  const ReferenceRules rules = reference_rules(3);
  const Patch half = Patch::square(0, {0.5, 0.5}, 0.5, 0);
  const QuadratureRule mapped = map_rule(rules.composite, half);
  for (std::size_t l = 0; l < mapped.size(); ++l)
    CHECK(mapped.weights[l] == doctest::Approx(rules.composite.weights[l] * 0.25).epsilon(1e-15));

  const Patch identity = Patch::square(0, {0.5, 0.5}, 1.0, 0);
  const QuadratureRule same = map_rule(rules.composite, identity);
  for (std::size_t l = 0; l < same.size(); ++l) {
    CHECK(same.weights[l] == doctest::Approx(rules.composite.weights[l]).epsilon(1e-15));
    CHECK(same.nodes[l].x == doctest::Approx(rules.composite.nodes[l].x).epsilon(1e-15));
  }

  const Patch p06 = Patch::square(0, {0.3, 0.3}, 0.6, 0);
  const QuadratureRule r06 = map_rule(rules.composite, p06);
  CHECK(r06.weight_sum() == doctest::Approx(0.36).epsilon(1e-14));
}

TEST_CASE("edge rules") {
  const QuadratureRule horiz = edge_rule({0, 0}, {1, 0}, 3);
  double x3 = 0.0;
  for (std::size_t l = 0; l < horiz.size(); ++l)
    x3 += horiz.weights[l] * std::pow(horiz.nodes[l].x, 3);
  CHECK(x3 == doctest::Approx(0.25).epsilon(1e-14));

  const QuadratureRule diag = edge_rule({0, 0}, {1, 1}, 3);
  CHECK(diag.weight_sum() == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));

  // Edge of a mapped patch triangle: constant integrates to the length.
  const Patch p = Patch::square(0, {0.3, 0.7}, 0.4, 0);
  const Vec2 a = p.corner(1);
  const Vec2 b = p.center;
  const QuadratureRule e = edge_rule(a, b, 3);
  CHECK(e.weight_sum() == doctest::Approx((b - a).norm()).epsilon(1e-14));

  CHECK_THROWS(edge_rule({0.2, 0.2}, {0.2, 0.2}, 3));
}

TEST_CASE("unsupported composite order is rejected") {
  CHECK_THROWS(reference_rules(1));
  CHECK_THROWS(reference_rules(6));
}

TEST_CASE("triangle rule positivity and fitting-grid sizes") {
  const QuadratureRule minimal = triangle_rule({0, 0}, {1, 0}, {0, 1}, 3);
  const QuadratureRule fitting = triangle_rule({0, 0}, {1, 0}, {0, 1}, 3, true);
  CHECK(fitting.size() == 16);
  CHECK(minimal.size() < fitting.size());
  for (double w : minimal.weights) CHECK(w > 0.0);
  for (double w : fitting.weights) CHECK(w > 0.0);
  CHECK(minimal.weight_sum() == doctest::Approx(0.5).epsilon(1e-14));
}
