#include "mfvpinn/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

namespace mfvpinn {

double Triangle::area() const {
  const Vec2 e1 = v[1] - v[0];
  const Vec2 e2 = v[2] - v[0];
  return 0.5 * std::abs(e1.x * e2.y - e1.y * e2.x);
}

double Triangle::diameter() const {
  double d = 0.0;
  for (int i = 0; i < 3; ++i) d = std::max(d, (v[static_cast<std::size_t>((i + 1) % 3)] -
                                                v[static_cast<std::size_t>(i)]).norm());
  return d;
}

Vec2 Triangle::centroid() const { return (v[0] + v[1] + v[2]) / 3.0; }

Triangle patch_triangle(const Patch& patch, int j) {
  return {{patch.corner(j), patch.corner((j + 1) % 4), patch.center}};
}

namespace {

// Graded monomial exponents (a, b) with a + b <= degree.
std::vector<std::pair<int, int>> exponents(int degree) {
  std::vector<std::pair<int, int>> e;
  for (int d = 0; d <= degree; ++d)
    for (int a = d; a >= 0; --a) e.emplace_back(a, d - a);
  return e;
}

void basis_values(Vec2 center, double scale, int degree, Vec2 x, double* out) {
  const double X = (x.x - center.x) / scale;
  const double Y = (x.y - center.y) / scale;
  int idx = 0;
  for (int d = 0; d <= degree; ++d) {
    for (int a = d; a >= 0; --a) {
      double v = 1.0;
      for (int k = 0; k < a; ++k) v *= X;
      for (int k = 0; k < d - a; ++k) v *= Y;
      out[idx++] = v;
    }
  }
}

// Lower-triangular Cholesky factor of the SPD matrix A (n x n, row-major).
// Throws when a pivot collapses relative to the original diagonal.
std::vector<double> cholesky(std::vector<double> A, int n) {
  std::vector<double> diag(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) diag[static_cast<std::size_t>(i)] =
      A[static_cast<std::size_t>(i * n + i)];
  for (int k = 0; k < n; ++k) {
    double pivot = A[static_cast<std::size_t>(k * n + k)];
    for (int j = 0; j < k; ++j) {
      const double l = A[static_cast<std::size_t>(k * n + j)];
      pivot -= l * l;
    }
    if (!(pivot > 1e-13 * std::max(1.0, diag[static_cast<std::size_t>(k)])))
      throw std::runtime_error("project_poly: rank-deficient node set (under-resolved quadrature)");
    const double lkk = std::sqrt(pivot);
    A[static_cast<std::size_t>(k * n + k)] = lkk;
    for (int i = k + 1; i < n; ++i) {
      double v = A[static_cast<std::size_t>(i * n + k)];
      for (int j = 0; j < k; ++j)
        v -= A[static_cast<std::size_t>(i * n + j)] * A[static_cast<std::size_t>(k * n + j)];
      A[static_cast<std::size_t>(i * n + k)] = v / lkk;
    }
  }
  return A;
}

void chol_solve(const std::vector<double>& L, int n, double* b) {
  for (int i = 0; i < n; ++i) {
    double v = b[i];
    for (int j = 0; j < i; ++j) v -= L[static_cast<std::size_t>(i * n + j)] * b[j];
    b[i] = v / L[static_cast<std::size_t>(i * n + i)];
  }
  for (int i = n - 1; i >= 0; --i) {
    double v = b[i];
    for (int j = i + 1; j < n; ++j) v -= L[static_cast<std::size_t>(j * n + i)] * b[j];
    b[i] = v / L[static_cast<std::size_t>(i * n + i)];
  }
}

// rhs_k = sum_l basis[k][l] w[l] s[l], then two triangular solves.
void fit_from_tables(const std::vector<double>& basis, const std::vector<double>& chol, int nb,
                     std::span<const double> w, std::span<const double> samples, double* coeff) {
  const std::size_t n = w.size();
  for (int k = 0; k < nb; ++k) {
    double acc = 0.0;
    const double* row = basis.data() + static_cast<std::size_t>(k) * n;
    for (std::size_t l = 0; l < n; ++l) acc += row[l] * w[l] * samples[l];
    coeff[k] = acc;
  }
  chol_solve(chol, nb, coeff);
}

double eval_table(const std::vector<double>& basis, std::size_t n, std::size_t l, int nb,
                  const double* coeff) {
  double acc = 0.0;
  for (int k = 0; k < nb; ++k) acc += coeff[k] * basis[static_cast<std::size_t>(k) * n + l];
  return acc;
}

}  // namespace

double PolyFit::eval(Vec2 x) const {
  std::vector<double> b(coeff.size());
  basis_values(center, scale, degree, x, b.data());
  double acc = 0.0;
  for (std::size_t k = 0; k < coeff.size(); ++k) acc += coeff[k] * b[k];
  return acc;
}

double PolyFit::eval_dx(Vec2 x) const {
  const auto exps = exponents(degree);
  const double X = (x.x - center.x) / scale;
  const double Y = (x.y - center.y) / scale;
  double acc = 0.0;
  for (std::size_t k = 0; k < coeff.size(); ++k) {
    const auto [a, b] = exps[k];
    if (a == 0) continue;
    acc += coeff[k] * a / scale * std::pow(X, a - 1) * std::pow(Y, b);
  }
  return acc;
}

double PolyFit::eval_dy(Vec2 x) const {
  const auto exps = exponents(degree);
  const double X = (x.x - center.x) / scale;
  const double Y = (x.y - center.y) / scale;
  double acc = 0.0;
  for (std::size_t k = 0; k < coeff.size(); ++k) {
    const auto [a, b] = exps[k];
    if (b == 0) continue;
    acc += coeff[k] * b / scale * std::pow(X, a) * std::pow(Y, b - 1);
  }
  return acc;
}

PolyFit project_poly(const Triangle& element, int degree, std::span<const Vec2> nodes,
                     std::span<const double> weights, std::span<const double> samples) {
  if (nodes.size() != weights.size() || nodes.size() != samples.size())
    throw std::invalid_argument("project_poly: mismatched spans");
  const int nb = poly_basis_size(degree);
  const std::size_t n = nodes.size();

  PolyFit fit;
  fit.center = element.centroid();
  fit.scale = element.diameter();
  fit.degree = degree;
  fit.coeff.assign(static_cast<std::size_t>(nb), 0.0);

  std::vector<double> basis(static_cast<std::size_t>(nb) * n);
  std::vector<double> col(static_cast<std::size_t>(nb));
  for (std::size_t l = 0; l < n; ++l) {
    basis_values(fit.center, fit.scale, degree, nodes[l], col.data());
    for (int k = 0; k < nb; ++k) basis[static_cast<std::size_t>(k) * n + l] = col[static_cast<std::size_t>(k)];
  }
  std::vector<double> gram(static_cast<std::size_t>(nb) * static_cast<std::size_t>(nb), 0.0);
  for (int a = 0; a < nb; ++a)
    for (int b = 0; b <= a; ++b) {
      double acc = 0.0;
      for (std::size_t l = 0; l < n; ++l)
        acc += weights[l] * basis[static_cast<std::size_t>(a) * n + l] *
               basis[static_cast<std::size_t>(b) * n + l];
      gram[static_cast<std::size_t>(a * nb + b)] = acc;
      gram[static_cast<std::size_t>(b * nb + a)] = acc;
    }
  const std::vector<double> chol = cholesky(std::move(gram), nb);
  fit_from_tables(basis, chol, nb, weights, samples, fit.coeff.data());
  return fit;
}

namespace {

PatchEstimatorContext::Tri build_tri_context(const Triangle& tri, const ProblemSpec& problem,
                                             std::span<const Vec2> q_nodes,
                                             std::span<const double> q_w, int q) {
  PatchEstimatorContext::Tri t;
  t.tri = tri;
  t.h = tri.diameter();
  t.q_nodes.assign(q_nodes.begin(), q_nodes.end());
  t.q_w.assign(q_w.begin(), q_w.end());
  t.basis_center = tri.centroid();
  t.basis_scale = t.h;

  const int nb_hi = poly_basis_size(q);
  const int nb_lo = poly_basis_size(q - 1);
  const std::size_t nq = t.q_nodes.size();

  t.basis_q.assign(static_cast<std::size_t>(nb_hi) * nq, 0.0);
  std::vector<double> col(static_cast<std::size_t>(nb_hi));
  for (std::size_t l = 0; l < nq; ++l) {
    basis_values(t.basis_center, t.basis_scale, q, t.q_nodes[l], col.data());
    for (int k = 0; k < nb_hi; ++k)
      t.basis_q[static_cast<std::size_t>(k) * nq + l] = col[static_cast<std::size_t>(k)];
  }

  auto gram_of = [&](int nb) {
    std::vector<double> gram(static_cast<std::size_t>(nb) * static_cast<std::size_t>(nb), 0.0);
    for (int a = 0; a < nb; ++a)
      for (int b = 0; b <= a; ++b) {
        double acc = 0.0;
        for (std::size_t l = 0; l < nq; ++l)
          acc += t.q_w[l] * t.basis_q[static_cast<std::size_t>(a) * nq + l] *
                 t.basis_q[static_cast<std::size_t>(b) * nq + l];
        gram[static_cast<std::size_t>(a * nb + b)] = acc;
        gram[static_cast<std::size_t>(b * nb + a)] = acc;
      }
    return gram;
  };
  t.chol_hi = cholesky(gram_of(nb_hi), nb_hi);
  t.chol_lo = cholesky(gram_of(nb_lo), nb_lo);

  const QuadratureRule fine = triangle_rule(tri.v[0], tri.v[1], tri.v[2], 7);
  t.fine_nodes = fine.nodes;
  t.fine_w = fine.weights;
  const std::size_t nf = t.fine_nodes.size();
  t.basis_fine.assign(static_cast<std::size_t>(nb_hi) * nf, 0.0);
  t.dbasis_fine_x.assign(static_cast<std::size_t>(nb_hi) * nf, 0.0);
  t.dbasis_fine_y.assign(static_cast<std::size_t>(nb_hi) * nf, 0.0);
  const auto exps = exponents(q);
  for (std::size_t l = 0; l < nf; ++l) {
    basis_values(t.basis_center, t.basis_scale, q, t.fine_nodes[l], col.data());
    const double X = (t.fine_nodes[l].x - t.basis_center.x) / t.basis_scale;
    const double Y = (t.fine_nodes[l].y - t.basis_center.y) / t.basis_scale;
    for (int k = 0; k < nb_hi; ++k) {
      t.basis_fine[static_cast<std::size_t>(k) * nf + l] = col[static_cast<std::size_t>(k)];
      const auto [a, b] = exps[static_cast<std::size_t>(k)];
      t.dbasis_fine_x[static_cast<std::size_t>(k) * nf + l] =
          a == 0 ? 0.0 : a / t.basis_scale * std::pow(X, a - 1) * std::pow(Y, b);
      t.dbasis_fine_y[static_cast<std::size_t>(k) * nf + l] =
          b == 0 ? 0.0 : b / t.basis_scale * std::pow(X, a) * std::pow(Y, b - 1);
    }
  }

  t.f_q.resize(nq);
  t.mu_q.resize(nq);
  t.sigma_q.resize(nq);
  t.beta_q.resize(nq);
  for (std::size_t l = 0; l < nq; ++l) {
    t.f_q[l] = problem.f(t.q_nodes[l]);
    t.mu_q[l] = problem.mu(t.q_nodes[l]);
    t.sigma_q[l] = problem.sigma(t.q_nodes[l]);
    t.beta_q[l] = problem.beta(t.q_nodes[l]);
  }
  t.f_fine.resize(nf);
  t.mu_fine.resize(nf);
  t.sigma_fine.resize(nf);
  t.beta_fine.resize(nf);
  for (std::size_t l = 0; l < nf; ++l) {
    t.f_fine[l] = problem.f(t.fine_nodes[l]);
    t.mu_fine[l] = problem.mu(t.fine_nodes[l]);
    t.sigma_fine[l] = problem.sigma(t.fine_nodes[l]);
    t.beta_fine[l] = problem.beta(t.fine_nodes[l]);
  }

  // Forcing oscillations: solution independent, computed once.
  std::vector<double> cf_lo(static_cast<std::size_t>(nb_lo));
  std::vector<double> cf_hi(static_cast<std::size_t>(nb_hi));
  fit_from_tables(t.basis_q, t.chol_lo, nb_lo, t.q_w, t.f_q, cf_lo.data());
  fit_from_tables(t.basis_q, t.chol_hi, nb_hi, t.q_w, t.f_q, cf_hi.data());
  t.f_lo_coeff = cf_lo;

  double cont_lo = 0.0;
  for (std::size_t l = 0; l < nf; ++l) {
    const double d = t.f_fine[l] - eval_table(t.basis_fine, nf, l, nb_lo, cf_lo.data());
    cont_lo += t.fine_w[l] * d * d;
  }
  double disc_lo = 0.0, disc_hi = 0.0;
  for (std::size_t l = 0; l < nq; ++l) {
    const double dlo = t.f_q[l] - eval_table(t.basis_q, nq, l, nb_lo, cf_lo.data());
    const double dhi = t.f_q[l] - eval_table(t.basis_q, nq, l, nb_hi, cf_hi.data());
    disc_lo += t.q_w[l] * dlo * dlo;
    disc_hi += t.q_w[l] * dhi * dhi;
  }
  t.eta_rhs1 = t.h * std::sqrt(cont_lo);
  t.eta_rhs2 = t.h * std::sqrt(disc_lo) + std::sqrt(disc_hi);
  return t;
}

}  // namespace

PatchEstimatorContext build_estimator_context(const Patch& patch, const ProblemSpec& problem,
                                              int q) {
  PatchEstimatorContext ctx;
  ctx.patch_id = patch.id;
  ctx.gamma = patch.gamma;
  ctx.h_patch = patch.diameter();
  ctx.q = q;

  const ReferenceRules rules = reference_rules(q);
  const int ppt = rules.points_per_triangle;
  const double area = patch.area();

  for (int j = 0; j < 4; ++j) {
    const Triangle tri = patch_triangle(patch, j);
    const QuadratureRule& ref = rules.triangle[static_cast<std::size_t>(j)];
    std::vector<Vec2> nodes(static_cast<std::size_t>(ppt));
    std::vector<double> w(static_cast<std::size_t>(ppt));
    for (int l = 0; l < ppt; ++l) {
      nodes[static_cast<std::size_t>(l)] = map_point(patch, ref.nodes[static_cast<std::size_t>(l)]);
      w[static_cast<std::size_t>(l)] = ref.weights[static_cast<std::size_t>(l)] * area;
    }
    ctx.tris[static_cast<std::size_t>(j)] = build_tri_context(tri, problem, nodes, w, q);
  }

  const int nb_hi = poly_basis_size(q);
  for (int j = 0; j < 4; ++j) {
    auto& e = ctx.edges[static_cast<std::size_t>(j)];
    const Vec2 corner = patch.corner(j);
    const QuadratureRule er = edge_rule(corner, patch.center, q);
    e.nodes = er.nodes;
    e.w = er.weights;
    const Vec2 dir = patch.center - corner;
    e.normal = Vec2{-dir.y, dir.x} / dir.norm();
    e.tri_a = (j + 3) % 4;
    e.tri_b = j;
    const std::size_t ne = e.nodes.size();
    e.basis_a.assign(static_cast<std::size_t>(nb_hi) * ne, 0.0);
    e.basis_b.assign(static_cast<std::size_t>(nb_hi) * ne, 0.0);
    std::vector<double> col(static_cast<std::size_t>(nb_hi));
    for (std::size_t l = 0; l < ne; ++l) {
      const auto& ta = ctx.tris[static_cast<std::size_t>(e.tri_a)];
      basis_values(ta.basis_center, ta.basis_scale, q, e.nodes[l], col.data());
      for (int k = 0; k < nb_hi; ++k)
        e.basis_a[static_cast<std::size_t>(k) * ne + l] = col[static_cast<std::size_t>(k)];
      const auto& tb = ctx.tris[static_cast<std::size_t>(e.tri_b)];
      basis_values(tb.basis_center, tb.basis_scale, q, e.nodes[l], col.data());
      for (int k = 0; k < nb_hi; ++k)
        e.basis_b[static_cast<std::size_t>(k) * ne + l] = col[static_cast<std::size_t>(k)];
    }
  }

  for (const auto& t : ctx.tris)
    ctx.fine_all.insert(ctx.fine_all.end(), t.fine_nodes.begin(), t.fine_nodes.end());
  return ctx;
}

EstimatorBreakdown patch_indicator(const PatchEstimatorContext& ctx, std::span<const double> u_q,
                                   std::span<const Vec2> gu_q, std::span<const double> u_fine,
                                   std::span<const Vec2> gu_fine, double residual_value,
                                   double c_h) {
  const int q = ctx.q;
  const int nb_hi = poly_basis_size(q);
  const int nb_lo = poly_basis_size(q - 1);

  EstimatorBreakdown out;
  out.eta_loss = c_h * std::abs(residual_value);

  // Per-triangle flux fits, kept for the jump terms.
  std::array<std::vector<double>, 4> flux_x_c, flux_y_c;

  double res_sum = 0.0;
  std::array<double, 6> coef_sq{};
  std::array<double, 2> rhs_sq{};

  std::size_t off_q = 0, off_f = 0;
  for (int j = 0; j < 4; ++j) {
    const auto& t = ctx.tris[static_cast<std::size_t>(j)];
    const std::size_t nq = t.q_nodes.size();
    const std::size_t nf = t.fine_nodes.size();
    const auto uq = u_q.subspan(off_q, nq);
    const auto guq = gu_q.subspan(off_q, nq);
    const auto uf = u_fine.subspan(off_f, nf);
    const auto guf = gu_fine.subspan(off_f, nf);
    off_q += nq;
    off_f += nf;

    // Field samples at the two node sets.
    std::vector<double> fx_q(nq), fy_q(nq), conv_q(nq), reac_q(nq);
    for (std::size_t l = 0; l < nq; ++l) {
      fx_q[l] = t.mu_q[l] * guq[l].x;
      fy_q[l] = t.mu_q[l] * guq[l].y;
      conv_q[l] = t.beta_q[l].dot(guq[l]);
      reac_q[l] = t.sigma_q[l] * uq[l];
    }
    std::vector<double> fx_f(nf), fy_f(nf), conv_f(nf), reac_f(nf);
    for (std::size_t l = 0; l < nf; ++l) {
      fx_f[l] = t.mu_fine[l] * guf[l].x;
      fy_f[l] = t.mu_fine[l] * guf[l].y;
      conv_f[l] = t.beta_fine[l].dot(guf[l]);
      reac_f[l] = t.sigma_fine[l] * uf[l];
    }

    // Projections fitted at the training nodes.
    std::vector<double> cfx(static_cast<std::size_t>(nb_hi)), cfy(static_cast<std::size_t>(nb_hi));
    std::vector<double> cconv_lo(static_cast<std::size_t>(nb_lo)),
        cconv_hi(static_cast<std::size_t>(nb_hi));
    std::vector<double> creac_lo(static_cast<std::size_t>(nb_lo)),
        creac_hi(static_cast<std::size_t>(nb_hi));
    fit_from_tables(t.basis_q, t.chol_hi, nb_hi, t.q_w, fx_q, cfx.data());
    fit_from_tables(t.basis_q, t.chol_hi, nb_hi, t.q_w, fy_q, cfy.data());
    fit_from_tables(t.basis_q, t.chol_lo, nb_lo, t.q_w, conv_q, cconv_lo.data());
    fit_from_tables(t.basis_q, t.chol_hi, nb_hi, t.q_w, conv_q, cconv_hi.data());
    fit_from_tables(t.basis_q, t.chol_lo, nb_lo, t.q_w, reac_q, creac_lo.data());
    fit_from_tables(t.basis_q, t.chol_hi, nb_hi, t.q_w, reac_q, creac_hi.data());

    // Continuous norms over the internal fine rule.
    double c1 = 0.0, c2 = 0.0, c3 = 0.0, bulk2 = 0.0;
    for (std::size_t l = 0; l < nf; ++l) {
      const double px = eval_table(t.basis_fine, nf, l, nb_hi, cfx.data());
      const double py = eval_table(t.basis_fine, nf, l, nb_hi, cfy.data());
      const double dx = fx_f[l] - px;
      const double dy = fy_f[l] - py;
      c1 += t.fine_w[l] * (dx * dx + dy * dy);
      const double dconv = conv_f[l] - eval_table(t.basis_fine, nf, l, nb_lo, cconv_lo.data());
      c2 += t.fine_w[l] * dconv * dconv;
      const double dreac = reac_f[l] - eval_table(t.basis_fine, nf, l, nb_lo, creac_lo.data());
      c3 += t.fine_w[l] * dreac * dreac;
      // bulk = P_{q-1} f + div P_q(mu grad u) - P_{q-1}(conv + reac)
      double div = 0.0;
      for (int k = 0; k < nb_hi; ++k)
        div += cfx[static_cast<std::size_t>(k)] * t.dbasis_fine_x[static_cast<std::size_t>(k) * nf + l] +
               cfy[static_cast<std::size_t>(k)] * t.dbasis_fine_y[static_cast<std::size_t>(k) * nf + l];
      double bulk = div + eval_table(t.basis_fine, nf, l, nb_lo, t.f_lo_coeff.data());
      bulk -= eval_table(t.basis_fine, nf, l, nb_lo, cconv_lo.data()) +
              eval_table(t.basis_fine, nf, l, nb_lo, creac_lo.data());
      bulk2 += t.fine_w[l] * bulk * bulk;
    }

    // Discrete seminorms over exactly the training nodes.
    double d4 = 0.0, d5lo = 0.0, d5hi = 0.0, d6lo = 0.0, d6hi = 0.0;
    for (std::size_t l = 0; l < nq; ++l) {
      const double dx = fx_q[l] - eval_table(t.basis_q, nq, l, nb_hi, cfx.data());
      const double dy = fy_q[l] - eval_table(t.basis_q, nq, l, nb_hi, cfy.data());
      d4 += t.q_w[l] * (dx * dx + dy * dy);
      const double dclo = conv_q[l] - eval_table(t.basis_q, nq, l, nb_lo, cconv_lo.data());
      const double dchi = conv_q[l] - eval_table(t.basis_q, nq, l, nb_hi, cconv_hi.data());
      d5lo += t.q_w[l] * dclo * dclo;
      d5hi += t.q_w[l] * dchi * dchi;
      const double drlo = reac_q[l] - eval_table(t.basis_q, nq, l, nb_lo, creac_lo.data());
      const double drhi = reac_q[l] - eval_table(t.basis_q, nq, l, nb_hi, creac_hi.data());
      d6lo += t.q_w[l] * drlo * drlo;
      d6hi += t.q_w[l] * drhi * drhi;
    }

    const std::array<double, 6> terms{
        std::sqrt(c1),
        t.h * std::sqrt(c2),
        t.h * std::sqrt(c3),
        std::sqrt(d4),
        t.h * std::sqrt(d5lo) + std::sqrt(d5hi),
        t.h * std::sqrt(d6lo) + std::sqrt(d6hi),
    };
    for (int k = 0; k < 6; ++k)
      coef_sq[static_cast<std::size_t>(k)] += terms[static_cast<std::size_t>(k)] *
                                              terms[static_cast<std::size_t>(k)];
    rhs_sq[0] += t.eta_rhs1 * t.eta_rhs1;
    rhs_sq[1] += t.eta_rhs2 * t.eta_rhs2;

    res_sum += t.h * std::sqrt(bulk2);
    flux_x_c[static_cast<std::size_t>(j)] = std::move(cfx);
    flux_y_c[static_cast<std::size_t>(j)] = std::move(cfy);
  }

  // Jump terms over the internal vertex-to-center edges.
  const double hp_sqrt = std::sqrt(ctx.h_patch);
  for (const auto& e : ctx.edges) {
    const std::size_t ne = e.nodes.size();
    const auto& cxa = flux_x_c[static_cast<std::size_t>(e.tri_a)];
    const auto& cya = flux_y_c[static_cast<std::size_t>(e.tri_a)];
    const auto& cxb = flux_x_c[static_cast<std::size_t>(e.tri_b)];
    const auto& cyb = flux_y_c[static_cast<std::size_t>(e.tri_b)];
    double jump2 = 0.0;
    for (std::size_t l = 0; l < ne; ++l) {
      const double ax = eval_table(e.basis_a, ne, l, nb_hi, cxa.data());
      const double ay = eval_table(e.basis_a, ne, l, nb_hi, cya.data());
      const double bx = eval_table(e.basis_b, ne, l, nb_hi, cxb.data());
      const double by = eval_table(e.basis_b, ne, l, nb_hi, cyb.data());
      const double jn = (ax - bx) * e.normal.x + (ay - by) * e.normal.y;
      jump2 += e.w[l] * jn * jn;
    }
    res_sum += hp_sqrt * std::sqrt(jump2);
  }

  out.eta_res = res_sum;
  double eta2 = out.eta_res * out.eta_res + out.eta_loss * out.eta_loss;
  for (int k = 0; k < 6; ++k) {
    out.eta_coef[static_cast<std::size_t>(k)] = std::sqrt(coef_sq[static_cast<std::size_t>(k)]);
    eta2 += coef_sq[static_cast<std::size_t>(k)];
  }
  for (int k = 0; k < 2; ++k) {
    out.eta_rhs[static_cast<std::size_t>(k)] = std::sqrt(rhs_sq[static_cast<std::size_t>(k)]);
    eta2 += rhs_sq[static_cast<std::size_t>(k)];
  }
  out.eta = std::sqrt(eta2);
  out.eta_gamma = ctx.gamma * out.eta;
  return out;
}

std::pair<double, double> eta_rhs_terms(const Triangle& element,
                                        const std::function<double(Vec2)>& f, int q) {
  ProblemSpec dummy;
  dummy.mu = [](Vec2) { return 1.0; };
  dummy.beta = [](Vec2) { return Vec2{}; };
  dummy.sigma = [](Vec2) { return 0.0; };
  dummy.f = f;
  const QuadratureRule tr = triangle_rule(element.v[0], element.v[1], element.v[2], q, true);
  const auto tri = build_tri_context(element, dummy, tr.nodes, tr.weights, q);
  return {tri.eta_rhs1, tri.eta_rhs2};
}

namespace {

// Single-triangle breakdown through the patch path would drag in the whole
// patch; for the per-element ops we re-run just the triangle block.
std::array<double, 6> coef_terms_from_context(const PatchEstimatorContext::Tri& t,
                                              const FieldEvalFn& field, int q) {
  const int nb_hi = poly_basis_size(q);
  const int nb_lo = poly_basis_size(q - 1);
  const std::size_t nq = t.q_nodes.size();
  const std::size_t nf = t.fine_nodes.size();

  std::vector<double> uq(nq), uf(nf);
  std::vector<Vec2> guq(nq), guf(nf);
  field(t.q_nodes, uq, guq);
  field(t.fine_nodes, uf, guf);

  std::vector<double> fx_q(nq), fy_q(nq), conv_q(nq), reac_q(nq);
  for (std::size_t l = 0; l < nq; ++l) {
    fx_q[l] = t.mu_q[l] * guq[l].x;
    fy_q[l] = t.mu_q[l] * guq[l].y;
    conv_q[l] = t.beta_q[l].dot(guq[l]);
    reac_q[l] = t.sigma_q[l] * uq[l];
  }
  std::vector<double> fx_f(nf), fy_f(nf), conv_f(nf), reac_f(nf);
  for (std::size_t l = 0; l < nf; ++l) {
    fx_f[l] = t.mu_fine[l] * guf[l].x;
    fy_f[l] = t.mu_fine[l] * guf[l].y;
    conv_f[l] = t.beta_fine[l].dot(guf[l]);
    reac_f[l] = t.sigma_fine[l] * uf[l];
  }

  std::vector<double> cfx(static_cast<std::size_t>(nb_hi)), cfy(static_cast<std::size_t>(nb_hi));
  std::vector<double> cconv_lo(static_cast<std::size_t>(nb_lo)),
      cconv_hi(static_cast<std::size_t>(nb_hi));
  std::vector<double> creac_lo(static_cast<std::size_t>(nb_lo)),
      creac_hi(static_cast<std::size_t>(nb_hi));
  fit_from_tables(t.basis_q, t.chol_hi, nb_hi, t.q_w, fx_q, cfx.data());
  fit_from_tables(t.basis_q, t.chol_hi, nb_hi, t.q_w, fy_q, cfy.data());
  fit_from_tables(t.basis_q, t.chol_lo, nb_lo, t.q_w, conv_q, cconv_lo.data());
  fit_from_tables(t.basis_q, t.chol_hi, nb_hi, t.q_w, conv_q, cconv_hi.data());
  fit_from_tables(t.basis_q, t.chol_lo, nb_lo, t.q_w, reac_q, creac_lo.data());
  fit_from_tables(t.basis_q, t.chol_hi, nb_hi, t.q_w, reac_q, creac_hi.data());

  double c1 = 0.0, c2 = 0.0, c3 = 0.0;
  for (std::size_t l = 0; l < nf; ++l) {
    const double dx = fx_f[l] - eval_table(t.basis_fine, nf, l, nb_hi, cfx.data());
    const double dy = fy_f[l] - eval_table(t.basis_fine, nf, l, nb_hi, cfy.data());
    c1 += t.fine_w[l] * (dx * dx + dy * dy);
    const double dconv = conv_f[l] - eval_table(t.basis_fine, nf, l, nb_lo, cconv_lo.data());
    c2 += t.fine_w[l] * dconv * dconv;
    const double dreac = reac_f[l] - eval_table(t.basis_fine, nf, l, nb_lo, creac_lo.data());
    c3 += t.fine_w[l] * dreac * dreac;
  }
  double d4 = 0.0, d5lo = 0.0, d5hi = 0.0, d6lo = 0.0, d6hi = 0.0;
  for (std::size_t l = 0; l < nq; ++l) {
    const double dx = fx_q[l] - eval_table(t.basis_q, nq, l, nb_hi, cfx.data());
    const double dy = fy_q[l] - eval_table(t.basis_q, nq, l, nb_hi, cfy.data());
    d4 += t.q_w[l] * (dx * dx + dy * dy);
    const double dclo = conv_q[l] - eval_table(t.basis_q, nq, l, nb_lo, cconv_lo.data());
    const double dchi = conv_q[l] - eval_table(t.basis_q, nq, l, nb_hi, cconv_hi.data());
    d5lo += t.q_w[l] * dclo * dclo;
    d5hi += t.q_w[l] * dchi * dchi;
    const double drlo = reac_q[l] - eval_table(t.basis_q, nq, l, nb_lo, creac_lo.data());
    const double drhi = reac_q[l] - eval_table(t.basis_q, nq, l, nb_hi, creac_hi.data());
    d6lo += t.q_w[l] * drlo * drlo;
    d6hi += t.q_w[l] * drhi * drhi;
  }
  return {std::sqrt(c1),
          t.h * std::sqrt(c2),
          t.h * std::sqrt(c3),
          std::sqrt(d4),
          t.h * std::sqrt(d5lo) + std::sqrt(d5hi),
          t.h * std::sqrt(d6lo) + std::sqrt(d6hi)};
}

}  // namespace

std::array<double, 6> eta_coef_terms(const Triangle& element, const FieldEvalFn& field,
                                     const ProblemSpec& problem, int q) {
  const QuadratureRule tr = triangle_rule(element.v[0], element.v[1], element.v[2], q, true);
  const auto tri = build_tri_context(element, problem, tr.nodes, tr.weights, q);
  return coef_terms_from_context(tri, field, q);
}

double eta_res_patch(const Patch& patch, const FieldEvalFn& field, const ProblemSpec& problem,
                     int q) {
  const PatchEstimatorContext ctx = build_estimator_context(patch, problem, q);
  std::vector<Vec2> q_nodes;
  for (const auto& t : ctx.tris) q_nodes.insert(q_nodes.end(), t.q_nodes.begin(), t.q_nodes.end());
  std::vector<double> uq(q_nodes.size()), uf(ctx.fine_all.size());
  std::vector<Vec2> guq(q_nodes.size()), guf(ctx.fine_all.size());
  field(q_nodes, uq, guq);
  field(ctx.fine_all, uf, guf);
  const EstimatorBreakdown bd = patch_indicator(ctx, uq, guq, uf, guf, 0.0, 0.0);
  return bd.eta_res;
}

double global_indicator(std::span<const EstimatorBreakdown> breakdowns,
                        std::span<const int> patch_ids) {
  if (breakdowns.size() != patch_ids.size())
    throw std::invalid_argument("global_indicator: id span mismatch");
  std::vector<std::size_t> order(breakdowns.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return patch_ids[a] < patch_ids[b]; });
  std::vector<double> vals(breakdowns.size());
  for (std::size_t i = 0; i < order.size(); ++i) vals[i] = breakdowns[order[i]].eta_gamma;
  return kahan_sum(vals);
}

void update_estimator_set(EstimatorSet& set, const Cover& cover, const ProblemSpec& problem,
                          int q) {
  std::unordered_map<int, PatchEstimatorContext> existing;
  if (set.q == q)
    for (auto& ctx : set.patches) existing.emplace(ctx.patch_id, std::move(ctx));
  set.q = q;
  set.patches.clear();
  set.last_build_count = 0;
  for (const Patch& patch : cover.patches) {
    auto it = existing.find(patch.id);
    if (it != existing.end()) {
      set.patches.push_back(std::move(it->second));
      existing.erase(it);
    } else {
      set.patches.push_back(build_estimator_context(patch, problem, q));
      ++set.last_build_count;
    }
  }
  set.fine_nodes.clear();
  set.fine_offsets.assign(1, 0);
  for (const auto& ctx : set.patches) {
    set.fine_nodes.insert(set.fine_nodes.end(), ctx.fine_all.begin(), ctx.fine_all.end());
    set.fine_offsets.push_back(set.fine_nodes.size());
  }
}

std::vector<EstimatorBreakdown> compute_indicators(const TensorSet& tensors,
                                                   const EstimatorSet& est,
                                                   const LiftCache& lift_q,
                                                   const LiftCache& lift_fine,
                                                   const NetworkParams& params, double c_h) {
  if (tensors.patches.size() != est.patches.size())
    throw std::invalid_argument("compute_indicators: tensor/estimator set mismatch");

  NetworkWorkspace ws;
  std::vector<double> u_q(tensors.nodes.size()), u_f(est.fine_nodes.size());
  std::vector<Vec2> gu_q(tensors.nodes.size()), gu_f(est.fine_nodes.size());
  forward_batch(params, tensors.nodes, u_q, gu_q, ws);
  forward_batch(params, est.fine_nodes, u_f, gu_f, ws);
  apply_lift_cached(lift_q, u_q, gu_q);
  apply_lift_cached(lift_fine, u_f, gu_f);

  std::vector<EstimatorBreakdown> out;
  out.reserve(est.patches.size());
  for (std::size_t i = 0; i < est.patches.size(); ++i) {
    const std::size_t qlo = tensors.offsets[i];
    const std::size_t qn = tensors.offsets[i + 1] - qlo;
    const std::size_t flo = est.fine_offsets[i];
    const std::size_t fn = est.fine_offsets[i + 1] - flo;
    const double r = residual(tensors.patches[i],
                              std::span<const double>(u_q).subspan(qlo, qn),
                              std::span<const Vec2>(gu_q).subspan(qlo, qn));
    out.push_back(patch_indicator(est.patches[i], std::span<const double>(u_q).subspan(qlo, qn),
                                  std::span<const Vec2>(gu_q).subspan(qlo, qn),
                                  std::span<const double>(u_f).subspan(flo, fn),
                                  std::span<const Vec2>(gu_f).subspan(flo, fn), r, c_h));
  }
  return out;
}

}  // namespace mfvpinn
