#include "mfvpinn/quadrature.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mfvpinn {

double QuadratureRule::weight_sum() const { return kahan_sum(weights); }

void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: n must be positive");
  nodes.assign(static_cast<std::size_t>(n), 0.0);
  weights.assign(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) {
    // Chebyshev-based initial guess, refined by Newton on P_n.
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      if (n == 1) p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      const double pn = (n == 1) ? x : p1;
      const double pn1 = (n == 1) ? 1.0 : p0;
      dp = n * (x * pn - pn1) / (x * x - 1.0);
      const double dx = pn / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    nodes[static_cast<std::size_t>(i)] = x;
    weights[static_cast<std::size_t>(i)] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
}

QuadratureRule triangle_rule(Vec2 a, Vec2 b, Vec2 c, int q, bool node_unisolvent) {
  if (q < 1) throw std::invalid_argument("triangle_rule: order must be positive");
  // Exactness for total degree q needs ceil((q+2)/2) points along the
  // collapsed axis and ceil((q+1)/2) along the other.
  const int ns = node_unisolvent ? q + 1 : (q + 3) / 2;
  const int nt = node_unisolvent ? q + 1 : (q + 2) / 2;
  std::vector<double> gxs, gws, gxt, gwt;
  gauss_legendre(ns, gxs, gws);
  gauss_legendre(nt, gxt, gwt);

  // Duffy map on the unit right triangle: (s, t) in [0,1]^2 -> (s, t(1-s)),
  // Jacobian (1-s); then affinely onto (a, b, c).
  const Vec2 e1 = b - a;
  const Vec2 e2 = c - a;
  const double jac = std::abs(e1.x * e2.y - e1.y * e2.x);  // = 2 * area

  QuadratureRule rule;
  rule.order = q;
  rule.owner = RuleOwner::ReferenceTriangle;
  rule.nodes.reserve(static_cast<std::size_t>(ns * nt));
  rule.weights.reserve(static_cast<std::size_t>(ns * nt));
  for (int i = 0; i < ns; ++i) {
    const double s = 0.5 * (gxs[static_cast<std::size_t>(i)] + 1.0);
    const double ws = 0.5 * gws[static_cast<std::size_t>(i)];
    for (int j = 0; j < nt; ++j) {
      const double t = 0.5 * (gxt[static_cast<std::size_t>(j)] + 1.0) * (1.0 - s);
      const double wt = 0.5 * gwt[static_cast<std::size_t>(j)] * (1.0 - s);
      rule.nodes.push_back(a + e1 * s + e2 * t);
      rule.weights.push_back(ws * wt * jac);
    }
  }
  return rule;
}

ReferenceRules reference_rules(int q) {
  if (q < 2 || q > 5) throw std::invalid_argument("reference_rules: order must be in 2..5");
  const ReferencePatch& ref = ReferencePatch::instance();
  ReferenceRules rules;
  rules.order = q;
  rules.composite.order = q;
  rules.composite.owner = RuleOwner::ReferencePatch;
  for (int j = 0; j < ReferencePatch::kTriangles; ++j) {
    const auto& tri = ref.triangles[static_cast<std::size_t>(j)];
    // Training rules double as the node set that the estimator's polynomial
    // projections are fitted at, so they carry the unisolvent grid.
    QuadratureRule r =
        triangle_rule(ref.point(tri[0]), ref.point(tri[1]), ref.point(tri[2]), q, true);
    rules.composite.nodes.insert(rules.composite.nodes.end(), r.nodes.begin(), r.nodes.end());
    rules.composite.weights.insert(rules.composite.weights.end(), r.weights.begin(),
                                   r.weights.end());
    rules.triangle[static_cast<std::size_t>(j)] = std::move(r);
  }
  rules.points_per_triangle = static_cast<int>(rules.triangle[0].size());
  return rules;
}

QuadratureRule map_rule(const QuadratureRule& ref_rule, const Patch& patch) {
  QuadratureRule rule;
  rule.order = ref_rule.order;
  rule.owner = RuleOwner::Patch;
  rule.nodes.reserve(ref_rule.size());
  rule.weights.reserve(ref_rule.size());
  const double scale = patch.area();  // area(ref patch) = 1
  for (std::size_t i = 0; i < ref_rule.size(); ++i) {
    rule.nodes.push_back(map_point(patch, ref_rule.nodes[i]));
    rule.weights.push_back(ref_rule.weights[i] * scale);
  }
  return rule;
}

QuadratureRule edge_rule(Vec2 p0, Vec2 p1, int q) {
  const double length = (p1 - p0).norm();
  if (length <= 0.0) throw std::invalid_argument("edge_rule: degenerate edge");
  const int n = std::max(1, (q + 2) / 2);  // ceil((q+1)/2)
  std::vector<double> gx, gw;
  gauss_legendre(n, gx, gw);
  QuadratureRule rule;
  rule.order = q;
  rule.owner = RuleOwner::Edge;
  for (int i = 0; i < n; ++i) {
    const double s = 0.5 * (gx[static_cast<std::size_t>(i)] + 1.0);
    rule.nodes.push_back(p0 + (p1 - p0) * s);
    rule.weights.push_back(0.5 * gw[static_cast<std::size_t>(i)] * length);
  }
  return rule;
}

}  // namespace mfvpinn
