#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mfvpinn/estimator.hpp"
#include "test_oracles.hpp"

using namespace mfvpinn;

namespace {

ProblemSpec pure_poisson(std::function<double(Vec2)> f) {
  ProblemSpec p;
  p.mu = [](Vec2) { return 1.0; };
  p.beta = [](Vec2) { return Vec2{0.0, 0.0}; };
  p.sigma = [](Vec2) { return 0.0; };
  p.f = std::move(f);
  p.g = [](Vec2) { return 0.0; };
  return p;
}

FieldEvalFn analytic_field(std::function<FieldSample(Vec2)> fn) {
  return [fn](std::span<const Vec2> pts, std::span<double> u, std::span<Vec2> g) {
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const FieldSample s = fn(pts[i]);
      u[i] = s.value;
      g[i] = s.grad;
    }
  };
}

// Dense normal-equations projection oracle in the raw monomial basis.
std::vector<double> normal_equations_fit(const std::vector<Vec2>& nodes,
                                         const std::vector<double>& w,
                                         const std::vector<double>& s, int degree) {
  std::vector<std::pair<int, int>> exps;
  for (int d = 0; d <= degree; ++d)
    for (int a = d; a >= 0; --a) exps.emplace_back(a, d - a);
  const int nb = static_cast<int>(exps.size());
  std::vector<double> A(static_cast<std::size_t>(nb * nb), 0.0);
  std::vector<double> b(static_cast<std::size_t>(nb), 0.0);
  auto mono = [&](int k, Vec2 p) {
    return std::pow(p.x, exps[static_cast<std::size_t>(k)].first) *
           std::pow(p.y, exps[static_cast<std::size_t>(k)].second);
  };
  for (std::size_t l = 0; l < nodes.size(); ++l) {
    for (int i = 0; i < nb; ++i) {
      b[static_cast<std::size_t>(i)] += w[l] * mono(i, nodes[l]) * s[l];
      for (int j = 0; j < nb; ++j)
        A[static_cast<std::size_t>(i * nb + j)] += w[l] * mono(i, nodes[l]) * mono(j, nodes[l]);
    }
  }
  // Gaussian elimination with partial pivoting.
  for (int k = 0; k < nb; ++k) {
    int piv = k;
    for (int i = k + 1; i < nb; ++i)
      if (std::abs(A[static_cast<std::size_t>(i * nb + k)]) >
          std::abs(A[static_cast<std::size_t>(piv * nb + k)]))
        piv = i;
    for (int j = 0; j < nb; ++j)
      std::swap(A[static_cast<std::size_t>(k * nb + j)], A[static_cast<std::size_t>(piv * nb + j)]);
    std::swap(b[static_cast<std::size_t>(k)], b[static_cast<std::size_t>(piv)]);
    for (int i = k + 1; i < nb; ++i) {
      const double m = A[static_cast<std::size_t>(i * nb + k)] / A[static_cast<std::size_t>(k * nb + k)];
      for (int j = k; j < nb; ++j)
        A[static_cast<std::size_t>(i * nb + j)] -= m * A[static_cast<std::size_t>(k * nb + j)];
      b[static_cast<std::size_t>(i)] -= m * b[static_cast<std::size_t>(k)];
    }
  }
  for (int i = nb - 1; i >= 0; --i) {
    double v = b[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < nb; ++j)
      v -= A[static_cast<std::size_t>(i * nb + j)] * b[static_cast<std::size_t>(j)];
    b[static_cast<std::size_t>(i)] = v / A[static_cast<std::size_t>(i * nb + i)];
  }
  return b;
}

}  // namespace

TEST_CASE("project_poly reproduces polynomials and preserves constants") {
  const Triangle tri{{Vec2{0.1, 0.2}, Vec2{0.7, 0.25}, Vec2{0.4, 0.8}}};
  const QuadratureRule rule = triangle_rule(tri.v[0], tri.v[1], tri.v[2], 3, true);

  SUBCASE("idempotence on a cubic field") {
    std::vector<double> s(rule.size());
    for (std::size_t l = 0; l < rule.size(); ++l) {
      const Vec2 p = rule.nodes[l];
      s[l] = 1.0 + 2 * p.x - p.y + 0.5 * p.x * p.x * p.y;
    }
    const PolyFit fit = project_poly(tri, 3, rule.nodes, rule.weights, s);
    for (std::size_t l = 0; l < rule.size(); ++l)
      CHECK(fit.eval(rule.nodes[l]) == doctest::Approx(s[l]).epsilon(1e-12));
  }

  SUBCASE("constants project to themselves for any degree") {
    for (int k = 0; k <= 3; ++k) {
      std::vector<double> s(rule.size(), 4.2);
      const PolyFit fit = project_poly(tri, k, rule.nodes, rule.weights, s);
      CHECK(fit.eval(tri.centroid()) == doctest::Approx(4.2).epsilon(1e-13));
      CHECK(fit.eval(tri.v[0]) == doctest::Approx(4.2).epsilon(1e-12));
    }
  }

  SUBCASE("degree-1 fit of x^2 matches the normal-equations oracle") {
    std::vector<double> s(rule.size());
    for (std::size_t l = 0; l < rule.size(); ++l) s[l] = rule.nodes[l].x * rule.nodes[l].x;
    const PolyFit fit = project_poly(tri, 1, rule.nodes, rule.weights, s);
    const auto oracle =
        normal_equations_fit(rule.nodes, rule.weights, s, 1);  // coeffs: 1, x, y
    Rng rng(1);
    for (int t = 0; t < 20; ++t) {
      const Vec2 p{rng.uniform(0.1, 0.7), rng.uniform(0.2, 0.8)};
      const double ov = oracle[0] + oracle[1] * p.x + oracle[2] * p.y;
      CHECK(fit.eval(p) == doctest::Approx(ov).epsilon(1e-10));
    }
  }

  SUBCASE("quadrature mean is preserved") {
    std::vector<double> s(rule.size());
    for (std::size_t l = 0; l < rule.size(); ++l)
      s[l] = std::sin(5 * rule.nodes[l].x) * rule.nodes[l].y;
    const PolyFit fit = project_poly(tri, 2, rule.nodes, rule.weights, s);
    double mean_f = 0.0, mean_p = 0.0;
    for (std::size_t l = 0; l < rule.size(); ++l) {
      mean_f += rule.weights[l] * s[l];
      mean_p += rule.weights[l] * fit.eval(rule.nodes[l]);
    }
    CHECK(mean_f == doctest::Approx(mean_p).epsilon(1e-12));
  }

  SUBCASE("rank deficiency is detected") {
    const QuadratureRule tiny = triangle_rule(tri.v[0], tri.v[1], tri.v[2], 2);
    std::vector<double> s(tiny.size(), 1.0);
    CHECK_THROWS(project_poly(tri, 3, tiny.nodes, tiny.weights, s));
  }
}

TEST_CASE("eta_rhs terms") {
  const Triangle tri{{Vec2{0.0, 0.0}, Vec2{1.0, 0.0}, Vec2{0.5, 0.5}}};

  SUBCASE("zero forcing") {
    const auto [r1, r2] = eta_rhs_terms(tri, [](Vec2) { return 0.0; }, 3);
    CHECK(r1 == 0.0);
    CHECK(r2 == 0.0);
  }

  SUBCASE("low-degree forcing is annihilated") {
    const auto [r1, r2] = eta_rhs_terms(
        tri, [](Vec2 p) { return 1.0 + p.x - 2 * p.y + p.x * p.y; }, 3);
    CHECK(r1 < 1e-12);
    CHECK(r2 < 1e-12);
  }

  SUBCASE("x^4 oscillation matches a fine-rule oracle") {
    auto f = [](Vec2 p) { return std::pow(p.x, 4); };
    const auto [r1, r2] = eta_rhs_terms(tri, f, 3);
    CHECK(r1 > 0.0);
    CHECK(r2 > 0.0);

    // Oracle: independent projection via normal equations at the same
    // fitting nodes, continuous norm with an order-7 rule.
    const QuadratureRule fitr = triangle_rule(tri.v[0], tri.v[1], tri.v[2], 3, true);
    std::vector<double> s(fitr.size());
    for (std::size_t l = 0; l < fitr.size(); ++l) s[l] = f(fitr.nodes[l]);
    const auto c2 = normal_equations_fit(fitr.nodes, fitr.weights, s, 2);
    const QuadratureRule fine = triangle_rule(tri.v[0], tri.v[1], tri.v[2], 7);
    double acc = 0.0;
    for (std::size_t l = 0; l < fine.size(); ++l) {
      const Vec2 p = fine.nodes[l];
      const double proj = c2[0] + c2[1] * p.x + c2[2] * p.y + c2[3] * p.x * p.x +
                          c2[4] * p.x * p.y + c2[5] * p.y * p.y;
      const double d = f(p) - proj;
      acc += fine.weights[l] * d * d;
    }
    const double oracle_r1 = tri.diameter() * std::sqrt(acc);
    CHECK(r1 == doctest::Approx(oracle_r1).epsilon(1e-8));
  }
}

TEST_CASE("eta_coef terms") {
  const Triangle tri{{Vec2{0.2, 0.2}, Vec2{0.8, 0.3}, Vec2{0.5, 0.9}}};
  ProblemSpec prob = pure_poisson([](Vec2) { return 0.0; });

  SUBCASE("linear solution with constant coefficients vanishes") {
    const auto terms = eta_coef_terms(
        tri, analytic_field([](Vec2 p) -> FieldSample {
          return {1.0 + 2 * p.x - 3 * p.y, {2.0, -3.0}};
        }),
        prob, 3);
    for (double t : terms) CHECK(t < 1e-12);
  }

  SUBCASE("beta = sigma = 0 kills terms 2, 3, 5, 6") {
    const auto terms = eta_coef_terms(
        tri, analytic_field([](Vec2 p) -> FieldSample {
          const double u = std::tanh(3 * p.x) * p.y;
          return {u, {3.0 * (1 - std::tanh(3 * p.x) * std::tanh(3 * p.x)) * p.y,
                      std::tanh(3 * p.x)}};
        }),
        prob, 3);
    CHECK(terms[1] == 0.0);
    CHECK(terms[2] == 0.0);
    CHECK(terms[4] == 0.0);
    CHECK(terms[5] == 0.0);
    CHECK(terms[0] > 0.0);
    CHECK(terms[3] > 0.0);
  }

  SUBCASE("eta_coef_1 of a tanh field matches a fine-rule oracle within 2%") {
    auto field_fn = [](Vec2 p) -> FieldSample {
      const double t = std::tanh(4 * p.x + p.y);
      return {t, {4 * (1 - t * t), 1 - t * t}};
    };
    const auto terms = eta_coef_terms(tri, analytic_field(field_fn), prob, 3);

    // Oracle: same fit (normal equations at the fitting nodes), continuous
    // norm with an order-9 rule over both gradient components.
    const QuadratureRule fitr = triangle_rule(tri.v[0], tri.v[1], tri.v[2], 3, true);
    std::vector<double> gx(fitr.size()), gy(fitr.size());
    for (std::size_t l = 0; l < fitr.size(); ++l) {
      const FieldSample s = field_fn(fitr.nodes[l]);
      gx[l] = s.grad.x;
      gy[l] = s.grad.y;
    }
    const auto cx = normal_equations_fit(fitr.nodes, fitr.weights, gx, 3);
    const auto cy = normal_equations_fit(fitr.nodes, fitr.weights, gy, 3);
    std::vector<std::pair<int, int>> exps;
    for (int d = 0; d <= 3; ++d)
      for (int a = d; a >= 0; --a) exps.emplace_back(a, d - a);
    auto eval = [&](const std::vector<double>& c, Vec2 p) {
      double acc = 0.0;
      for (std::size_t k = 0; k < c.size(); ++k)
        acc += c[k] * std::pow(p.x, exps[k].first) * std::pow(p.y, exps[k].second);
      return acc;
    };
    const QuadratureRule fine = triangle_rule(tri.v[0], tri.v[1], tri.v[2], 9);
    double acc = 0.0;
    for (std::size_t l = 0; l < fine.size(); ++l) {
      const FieldSample s = field_fn(fine.nodes[l]);
      const double dx = s.grad.x - eval(cx, fine.nodes[l]);
      const double dy = s.grad.y - eval(cy, fine.nodes[l]);
      acc += fine.weights[l] * (dx * dx + dy * dy);
    }
    CHECK(terms[0] == doctest::Approx(std::sqrt(acc)).epsilon(0.02));
  }
}

TEST_CASE("eta_res_patch") {
  ProblemSpec prob = pure_poisson([](Vec2) { return 0.0; });

  SUBCASE("linear solution: zero bulk and zero jumps") {
    const Patch p = Patch::square(0, {0.4, 0.6}, 0.5, 0);
    const double v = eta_res_patch(
        p, analytic_field([](Vec2 q) -> FieldSample { return {q.x - q.y, {1.0, -1.0}}; }),
        prob, 3);
    CHECK(v < 1e-12);
  }

  SUBCASE("u = x^2 on the identity patch: bulk 2 per triangle, no jumps") {
    const Patch p = Patch::square(0, {0.5, 0.5}, 1.0, 0);
    const FieldEvalFn f =
        analytic_field([](Vec2 q) -> FieldSample { return {q.x * q.x, {2 * q.x, 0.0}}; });
    const double v = eta_res_patch(p, f, prob, 3);
    // h_T = 1 for every fan triangle, ||2||_{0,T} = 2 sqrt(1/4) = 1.
    CHECK(v == doctest::Approx(4.0).epsilon(1e-12));

    const FieldEvalFn fneg =
        analytic_field([](Vec2 q) -> FieldSample { return {-q.x * q.x, {-2 * q.x, 0.0}}; });
    CHECK(eta_res_patch(p, fneg, prob, 3) == doctest::Approx(v).epsilon(1e-13));
  }
}

TEST_CASE("patch_indicator assembles the breakdown") {
  ProblemSpec prob = pure_poisson([](Vec2) { return 0.0; });
  const Patch patch = Patch::square(7, {0.5, 0.5}, 0.5, 1);
  const PatchEstimatorContext ctx = build_estimator_context(patch, prob, 3);
  std::vector<Vec2> q_nodes;
  for (const auto& t : ctx.tris) q_nodes.insert(q_nodes.end(), t.q_nodes.begin(), t.q_nodes.end());

  auto eval_with = [&](const std::function<FieldSample(Vec2)>& fn, double r, double ch) {
    std::vector<double> uq(q_nodes.size()), uf(ctx.fine_all.size());
    std::vector<Vec2> gq(q_nodes.size()), gf(ctx.fine_all.size());
    analytic_field(fn)(q_nodes, uq, gq);
    analytic_field(fn)(ctx.fine_all, uf, gf);
    return patch_indicator(ctx, uq, gq, uf, gf, r, ch);
  };

  SUBCASE("all terms zero gives eta = 0") {
    const auto bd = eval_with([](Vec2) -> FieldSample { return {0.0, {0.0, 0.0}}; }, 0.0, 1.0);
    CHECK(bd.eta == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(bd.eta_gamma == doctest::Approx(0.0).epsilon(1e-14));
  }

  SUBCASE("a single nonzero term passes through the square root") {
    const auto bd = eval_with([](Vec2) -> FieldSample { return {0.0, {0.0, 0.0}}; }, 0.25, 2.0);
    CHECK(bd.eta_loss == doctest::Approx(0.5));
    CHECK(bd.eta == doctest::Approx(0.5).epsilon(1e-13));
    CHECK(bd.eta_gamma == doctest::Approx(patch.gamma * 0.5).epsilon(1e-13));
  }

  SUBCASE("doubling C_h doubles eta_loss only") {
    auto field = [](Vec2 q) -> FieldSample {
      const double t = std::tanh(2 * q.x - q.y);
      return {t, {2 * (1 - t * t), -(1 - t * t)}};
    };
    const auto bd1 = eval_with(field, 0.1, 1.0);
    const auto bd2 = eval_with(field, 0.1, 2.0);
    CHECK(bd2.eta_loss == doctest::Approx(2 * bd1.eta_loss).epsilon(1e-13));
    CHECK(bd2.eta_res == doctest::Approx(bd1.eta_res).epsilon(1e-13));
    CHECK(bd2.eta_coef[0] == doctest::Approx(bd1.eta_coef[0]).epsilon(1e-13));
  }

  SUBCASE("aggregation identity holds") {
    auto field = [](Vec2 q) -> FieldSample {
      const double t = std::sin(3 * q.x) * std::cos(2 * q.y);
      return {t, {3 * std::cos(3 * q.x) * std::cos(2 * q.y),
                  -2 * std::sin(3 * q.x) * std::sin(2 * q.y)}};
    };
    const auto bd = eval_with(field, 0.05, 1.5);
    double eta2 = bd.eta_res * bd.eta_res + bd.eta_loss * bd.eta_loss;
    for (double c : bd.eta_coef) eta2 += c * c;
    for (double r : bd.eta_rhs) eta2 += r * r;
    CHECK(bd.eta * bd.eta == doctest::Approx(eta2).epsilon(1e-12));
    for (double c : bd.eta_coef) CHECK(c >= 0.0);
    for (double r : bd.eta_rhs) CHECK(r >= 0.0);
  }
}

TEST_CASE("vanishing breakdown for the exact linear solution") {
  ProblemSpec prob = pure_poisson([](Vec2) { return 0.0; });
  Rng rng(13);
  for (int t = 0; t < 5; ++t) {
    const double edge = rng.uniform(0.2, 0.9);
    const Patch patch = Patch::square(t, {rng.uniform(edge / 2, 1 - edge / 2),
                                          rng.uniform(edge / 2, 1 - edge / 2)},
                                      edge, 0);
    const PatchEstimatorContext ctx = build_estimator_context(patch, prob, 3);
    std::vector<Vec2> q_nodes;
    for (const auto& tc : ctx.tris)
      q_nodes.insert(q_nodes.end(), tc.q_nodes.begin(), tc.q_nodes.end());
    std::vector<double> uq(q_nodes.size()), uf(ctx.fine_all.size());
    std::vector<Vec2> gq(q_nodes.size()), gf(ctx.fine_all.size());
    const auto lin = analytic_field(
        [](Vec2 q) -> FieldSample { return {0.7 * q.x + 0.2 * q.y - 0.1, {0.7, 0.2}}; });
    lin(q_nodes, uq, gq);
    lin(ctx.fine_all, uf, gf);
    const auto bd = patch_indicator(ctx, uq, gq, uf, gf, 0.0, 1.0);
    CHECK(bd.eta < 1e-12);
    CHECK(bd.eta_res < 1e-12);
    for (double c : bd.eta_coef) CHECK(c < 1e-12);
    for (double r : bd.eta_rhs) CHECK(r < 1e-12);
  }
}

TEST_CASE("global indicator") {
  std::vector<EstimatorBreakdown> bds(3);
  bds[0].eta_gamma = 1.0;
  bds[1].eta_gamma = 2.0;
  bds[2].eta_gamma = 3.0;
  const int ids[3] = {5, 1, 9};
  CHECK(global_indicator(bds, ids) == doctest::Approx(6.0).epsilon(1e-15));
  CHECK(global_indicator(std::span<const EstimatorBreakdown>{},
                         std::span<const int>{}) == 0.0);

  // Permutation invariance via the fixed id ordering.
  std::vector<EstimatorBreakdown> perm{bds[2], bds[0], bds[1]};
  const int perm_ids[3] = {9, 5, 1};
  CHECK(global_indicator(perm, perm_ids) == global_indicator(bds, ids));
}
