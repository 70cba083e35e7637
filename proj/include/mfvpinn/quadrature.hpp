#pragma once

#include <array>
#include <vector>

#include "mfvpinn/core.hpp"
#include "mfvpinn/geometry.hpp"

namespace mfvpinn {

enum class RuleOwner { ReferenceTriangle, ReferencePatch, Patch, Edge };

struct QuadratureRule {
  std::vector<Vec2> nodes;
  std::vector<double> weights;
  int order = 0;
  RuleOwner owner = RuleOwner::ReferencePatch;

  std::size_t size() const { return nodes.size(); }
  double weight_sum() const;
};

/// Gauss-Legendre nodes and weights on [-1, 1], exact for degree 2n-1.
/// Computed by Newton iteration on the Legendre polynomial.
void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights);

/// Quadrature rule on the triangle (a, b, c), exact for all bivariate
/// polynomials of total degree <= q, with strictly positive weights.
/// Built by collapsing a tensor Gauss rule through the Duffy map. With
/// `node_unisolvent` the grid is enlarged to (q+1) x (q+1) points so the
/// nodes also determine degree-q polynomials uniquely, which the
/// estimator's projections rely on.
QuadratureRule triangle_rule(Vec2 a, Vec2 b, Vec2 c, int q, bool node_unisolvent = false);

/// Per-triangle rules on the reference-patch fan plus their composite.
struct ReferenceRules {
  std::array<QuadratureRule, ReferencePatch::kTriangles> triangle;
  QuadratureRule composite;
  int order = 0;
  int points_per_triangle = 0;
};

/// Rules of order q (2..5) on the four fan triangles of the reference patch
/// and the composite rule on the patch itself.
ReferenceRules reference_rules(int q);

/// Maps a reference rule onto a patch: nodes through M_i, weights scaled by
/// area(P_i) / area(reference patch).
QuadratureRule map_rule(const QuadratureRule& ref_rule, const Patch& patch);

/// Gauss rule on the segment p0-p1 with ceil((q+1)/2) points; weights sum to
/// the segment length.
QuadratureRule edge_rule(Vec2 p0, Vec2 p1, int q);

}  // namespace mfvpinn
