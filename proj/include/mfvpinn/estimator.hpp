#pragma once

#include <array>
#include <span>
#include <vector>

#include "mfvpinn/assembly.hpp"
#include "mfvpinn/geometry.hpp"
#include "mfvpinn/problems.hpp"

namespace mfvpinn {

struct Triangle {
  std::array<Vec2, 3> v;

  double area() const;
  double diameter() const;
  Vec2 centroid() const;
};

/// Fan triangle j of a patch (corners j, j+1 and the patch center).
Triangle patch_triangle(const Patch& patch, int j);

/// Number of bivariate monomials of total degree <= degree.
constexpr int poly_basis_size(int degree) { return (degree + 1) * (degree + 2) / 2; }

/// A polynomial on a triangle in scaled local coordinates
/// X = (x - center) / scale, stored as graded monomial coefficients
/// (1, X, Y, X^2, XY, Y^2, ...).
struct PolyFit {
  Vec2 center;
  double scale = 1.0;
  int degree = 0;
  std::vector<double> coeff;

  double eval(Vec2 x) const;
  double eval_dx(Vec2 x) const;
  double eval_dy(Vec2 x) const;
};

/// Quadrature-weighted least-squares L2 projection of field samples onto
/// total-degree <= degree polynomials on the element. The constant is in
/// the basis, so the quadrature mean is preserved. Throws on a
/// rank-deficient node set (under-resolved quadrature).
PolyFit project_poly(const Triangle& element, int degree, std::span<const Vec2> nodes,
                     std::span<const double> weights, std::span<const double> samples);

/// Oscillation of the forcing term on an element:
///   eta_rhs1 = h_E || f - P_{q-1} f ||_{0,E}
///   eta_rhs2 = h_E || f - P_{q-1} f ||_{0,E,w} + || f - P_q f ||_{0,E,w}
/// with projections fitted at the element's order-q training nodes, the
/// continuous norm evaluated with an internal order-7 rule, and the
/// discrete seminorm over exactly the training nodes.
std::pair<double, double> eta_rhs_terms(const Triangle& element,
                                        const std::function<double(Vec2)>& f, int q);

/// The six coefficient-oscillation terms of one element for the current
/// approximate solution (evaluated through the supplied field).
std::array<double, 6> eta_coef_terms(const Triangle& element, const FieldEvalFn& field,
                                     const ProblemSpec& problem, int q);

/// Patch residual term: per fan triangle the weighted bulk norm plus the
/// projected-flux jumps across the four internal vertex-to-center edges.
double eta_res_patch(const Patch& patch, const FieldEvalFn& field, const ProblemSpec& problem,
                     int q);

/// All indicator components of one patch. The coef/rhs entries aggregate
/// the four fan triangles in root-sum-square form, so
/// eta^2 = eta_res^2 + eta_loss^2 + sum_k eta_coef[k]^2 + sum_k eta_rhs[k]^2.
struct EstimatorBreakdown {
  double eta_res = 0.0;
  double eta_loss = 0.0;  // C_h |r_{h,i}|
  std::array<double, 6> eta_coef{};
  std::array<double, 2> eta_rhs{};
  double eta = 0.0;
  double eta_gamma = 0.0;  // gamma_i * eta
};

/// Precomputed per-patch data for fast indicator evaluation during
/// training: projection factorizations at the training nodes, internal
/// fine rules with basis tables, edge rules with normals, and the
/// solution-independent forcing oscillations.
struct PatchEstimatorContext {
  struct Tri {
    Triangle tri;
    double h = 0.0;
    std::vector<Vec2> q_nodes;
    std::vector<double> q_w;
    std::vector<double> basis_q;  // [nb][nq]
    std::vector<double> chol_hi;  // factor for degree q
    std::vector<double> chol_lo;  // factor for degree q-1
    Vec2 basis_center;
    double basis_scale = 1.0;
    std::vector<Vec2> fine_nodes;
    std::vector<double> fine_w;
    std::vector<double> basis_fine, dbasis_fine_x, dbasis_fine_y;  // [nb][nf]
    std::vector<double> f_q, mu_q, sigma_q;
    std::vector<Vec2> beta_q;
    std::vector<double> f_fine, mu_fine, sigma_fine;
    std::vector<Vec2> beta_fine;
    std::vector<double> f_lo_coeff;  // P_{q-1} f
    double eta_rhs1 = 0.0, eta_rhs2 = 0.0;
  };
  struct Edge {
    std::vector<Vec2> nodes;
    std::vector<double> w;
    Vec2 normal;
    int tri_a = 0, tri_b = 0;
    std::vector<double> basis_a, basis_b;  // [nb][ne]
  };

  int patch_id = -1;
  double gamma = 0.0;
  double h_patch = 0.0;
  int q = 0;
  std::array<Tri, 4> tris;
  std::array<Edge, 4> edges;
  std::vector<Vec2> fine_all;  // concatenated fine nodes of the four triangles
};

PatchEstimatorContext build_estimator_context(const Patch& patch, const ProblemSpec& problem,
                                              int q);

/// Assembles the breakdown from lifted solution samples at the patch's
/// training nodes and at the context's fine nodes, plus the current
/// variational residual of the patch.
EstimatorBreakdown patch_indicator(const PatchEstimatorContext& ctx, std::span<const double> u_q,
                                   std::span<const Vec2> gu_q, std::span<const double> u_fine,
                                   std::span<const Vec2> gu_fine, double residual_value,
                                   double c_h);

/// ES_m: the sum of gamma-scaled indicators, accumulated in ascending
/// patch-id order with compensated summation (permutation invariant).
double global_indicator(std::span<const EstimatorBreakdown> breakdowns,
                        std::span<const int> patch_ids);

/// Per-cover context set with incremental reuse by patch id.
struct EstimatorSet {
  int q = 0;
  std::vector<PatchEstimatorContext> patches;  // in cover order
  std::vector<Vec2> fine_nodes;                // all fine nodes concatenated
  std::vector<std::size_t> fine_offsets;
  int last_build_count = 0;
};

void update_estimator_set(EstimatorSet& set, const Cover& cover, const ProblemSpec& problem,
                          int q);

/// Evaluates the network once over training and fine nodes, lifts both, and
/// assembles every patch breakdown. Residuals are recomputed from the
/// tensors at the given parameters.
std::vector<EstimatorBreakdown> compute_indicators(const TensorSet& tensors,
                                                   const EstimatorSet& est,
                                                   const LiftCache& lift_q,
                                                   const LiftCache& lift_fine,
                                                   const NetworkParams& params, double c_h);

}  // namespace mfvpinn
