#include "mfvpinn/assembly.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <unordered_map>

namespace mfvpinn {

namespace {

// Hat value and reference gradient on fan triangle j of the unit square.
inline void hat_on_triangle(int j, Vec2 ref, double& value, Vec2& ref_grad) {
  switch (j) {
    case 0: value = 2.0 * ref.y; ref_grad = {0.0, 2.0}; break;          // bottom
    case 1: value = 2.0 * (1.0 - ref.x); ref_grad = {-2.0, 0.0}; break; // right
    case 2: value = 2.0 * (1.0 - ref.y); ref_grad = {0.0, -2.0}; break; // top
    default: value = 2.0 * ref.x; ref_grad = {2.0, 0.0}; break;         // left
  }
}

inline int fan_triangle_of(Vec2 ref) {
  const double dx = ref.x - 0.5;
  const double dy = ref.y - 0.5;
  if (dy <= -std::abs(dx)) return 0;
  if (dx >= std::abs(dy)) return 1;
  if (dy >= std::abs(dx)) return 2;
  return 3;
}

PatchTensors build_patch_tensors(const Patch& patch, const ProblemSpec& problem,
                                 const ReferenceRules& rules) {
  PatchTensors t;
  t.patch_id = patch.id;
  t.gamma = patch.gamma;
  const std::size_t n = rules.composite.size();
  t.nodes.resize(n);
  t.weights.resize(n);
  t.phi.resize(n);
  t.dphi.resize(n);
  t.mu.resize(n);
  t.sigma.resize(n);
  t.f.resize(n);
  t.beta.resize(n);
  t.grad_coeff.resize(n);
  t.val_coeff.resize(n);

  const double inv_hx = 1.0 / (2.0 * patch.half_widths.x);
  const double inv_hy = 1.0 / (2.0 * patch.half_widths.y);
  const double area = patch.area();
  const int ppt = rules.points_per_triangle;

  double f_term = 0.0;
  for (std::size_t l = 0; l < n; ++l) {
    const Vec2 ref = rules.composite.nodes[l];
    const Vec2 x = map_point(patch, ref);
    const double w = rules.composite.weights[l] * area;
    double value;
    Vec2 ref_grad;
    hat_on_triangle(static_cast<int>(l) / ppt, ref, value, ref_grad);
    const Vec2 grad{ref_grad.x * inv_hx, ref_grad.y * inv_hy};

    t.nodes[l] = x;
    t.weights[l] = w;
    t.phi[l] = value;
    t.dphi[l] = grad;
    t.mu[l] = problem.mu(x);
    t.sigma[l] = problem.sigma(x);
    t.f[l] = problem.f(x);
    t.beta[l] = problem.beta(x);

    f_term += w * t.f[l] * value;
    t.grad_coeff[l] = w * (t.mu[l] * grad + value * t.beta[l]);
    t.val_coeff[l] = w * t.sigma[l] * value;
  }
  t.f_term = f_term;
  return t;
}

}  // namespace

TestEval eval_test(const Patch& patch, Vec2 x) {
  if (!patch.contains(x, 0.0)) return {};
  const Vec2 ref = inverse_map(patch, x);
  double value;
  Vec2 ref_grad;
  hat_on_triangle(fan_triangle_of(ref), ref, value, ref_grad);
  return {value, {ref_grad.x / (2.0 * patch.half_widths.x),
                  ref_grad.y / (2.0 * patch.half_widths.y)}};
}

TensorSet build_tensors(const Cover& cover, const ProblemSpec& problem, int q) {
  TensorSet set;
  update_tensors(set, cover, problem, q);
  return set;
}

void update_tensors(TensorSet& tensors, const Cover& cover, const ProblemSpec& problem, int q) {
  const ReferenceRules rules = reference_rules(q);
  std::unordered_map<int, PatchTensors> existing;
  if (tensors.q == q) {
    for (PatchTensors& t : tensors.patches) existing.emplace(t.patch_id, std::move(t));
  }
  tensors.q = q;
  tensors.points_per_triangle = rules.points_per_triangle;
  tensors.patches.clear();
  tensors.last_build_count = 0;

  for (const Patch& patch : cover.patches) {
    auto it = existing.find(patch.id);
    if (it != existing.end()) {
      tensors.patches.push_back(std::move(it->second));
      existing.erase(it);
    } else {
      tensors.patches.push_back(build_patch_tensors(patch, problem, rules));
      ++tensors.last_build_count;
    }
  }

  tensors.nodes.clear();
  tensors.offsets.assign(1, 0);
  for (const PatchTensors& t : tensors.patches) {
    tensors.nodes.insert(tensors.nodes.end(), t.nodes.begin(), t.nodes.end());
    tensors.offsets.push_back(tensors.nodes.size());
  }
}

double residual(const PatchTensors& tensors, std::span<const double> u,
                std::span<const Vec2> grad_u) {
  if (u.size() != tensors.nodes.size() || grad_u.size() != tensors.nodes.size())
    throw std::invalid_argument("residual: inputs not node-aligned");
  double acc = 0.0;
  for (std::size_t l = 0; l < u.size(); ++l)
    acc += grad_u[l].dot(tensors.grad_coeff[l]) + u[l] * tensors.val_coeff[l];
  return tensors.f_term - acc;
}

LossBreakdown loss_value(const TensorSet& tensors, std::span<const double> u,
                         std::span<const Vec2> grad_u, std::span<const double> theta,
                         double lambda_reg) {
  LossBreakdown out;
  const std::size_t n = tensors.patches.size();
  out.residuals.resize(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = tensors.offsets[i];
    const std::size_t hi = tensors.offsets[i + 1];
    const double r = residual(tensors.patches[i], u.subspan(lo, hi - lo),
                              grad_u.subspan(lo, hi - lo));
    out.residuals[i] = r;
    acc += tensors.patches[i].gamma * r * r;
  }
  out.residual_term = n > 0 ? acc / static_cast<double>(n) : 0.0;
  double reg = 0.0;
  for (double v : theta) reg += v * v;
  out.reg_term = lambda_reg * reg;
  out.total = out.residual_term + out.reg_term;
  return out;
}

void loss_cotangents(const TensorSet& tensors, std::span<const double> residuals,
                     std::span<double> cot_u, std::span<Vec2> cot_grad) {
  const std::size_t n = tensors.patches.size();
  const double inv_n = n > 0 ? 1.0 / static_cast<double>(n) : 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const PatchTensors& t = tensors.patches[i];
    const double scale = -2.0 * inv_n * t.gamma * residuals[i];
    const std::size_t lo = tensors.offsets[i];
    for (std::size_t l = 0; l < t.nodes.size(); ++l) {
      cot_u[lo + l] = scale * t.val_coeff[l];
      cot_grad[lo + l] = scale * t.grad_coeff[l];
    }
  }
}

LossOracle::LossOracle(const TensorSet* tensors, const LiftCache* lift,
                       std::vector<int> layer_dims, double lambda_reg)
    : tensors_(tensors), lift_(lift), lambda_reg_(lambda_reg) {
  params_.layer_dims = std::move(layer_dims);
  params_.theta.assign(params_.param_count(), 0.0);
  ws_.resize(params_);
}

void LossOracle::forward(std::span<const double> theta) {
  if (theta.size() != params_.theta.size())
    throw std::invalid_argument("LossOracle: parameter vector has wrong size");
  std::memcpy(params_.theta.data(), theta.data(), theta.size() * sizeof(double));
  const std::size_t n = tensors_->nodes.size();
  u_.resize(n);
  gu_.resize(n);
  forward_batch(params_, tensors_->nodes, u_, gu_, ws_);
  apply_lift_cached(*lift_, u_, gu_);
  last_ = loss_value(*tensors_, u_, gu_, theta, lambda_reg_);
}

double LossOracle::value(std::span<const double> theta) {
  forward(theta);
  return last_.total;
}

double LossOracle::value_and_gradient(std::span<const double> theta,
                                      std::span<double> grad_out) {
  forward(theta);
  const std::size_t n = tensors_->nodes.size();
  cu_.resize(n);
  cg_.resize(n);
  loss_cotangents(*tensors_, last_.residuals, cu_, cg_);
  lift_cotangents_cached(*lift_, cu_, cg_);
  param_gradient(params_, tensors_->nodes, cu_, cg_, grad_out, ws_);
  for (std::size_t k = 0; k < grad_out.size(); ++k)
    grad_out[k] += 2.0 * lambda_reg_ * theta[k];
  return last_.total;
}

LossBreakdown loss_naive(const Cover& cover, const ProblemSpec& problem, int q,
                         const NetworkParams& params, const BoundaryLift& lift,
                         double lambda_reg) {
  const ReferenceRules rules = reference_rules(q);
  LossBreakdown out;
  double acc = 0.0;
  for (const Patch& patch : cover.patches) {
    double r = 0.0;
    for (int j = 0; j < ReferencePatch::kTriangles; ++j) {
      const QuadratureRule& tri = rules.triangle[static_cast<std::size_t>(j)];
      for (std::size_t l = 0; l < tri.size(); ++l) {
        const Vec2 x = map_point(patch, tri.nodes[l]);
        const double w = tri.weights[l] * patch.area();
        double uval;
        Vec2 ugrad;
        forward_batch(params, std::span<const Vec2>(&x, 1), std::span<double>(&uval, 1),
                      std::span<Vec2>(&ugrad, 1));
        apply_lift(lift, std::span<const Vec2>(&x, 1), std::span<double>(&uval, 1),
                   std::span<Vec2>(&ugrad, 1));
        const TestEval te = eval_test(patch, x);
        r += w * (problem.f(x) * te.value - problem.mu(x) * ugrad.dot(te.grad) -
                  problem.beta(x).dot(ugrad) * te.value - problem.sigma(x) * uval * te.value);
      }
    }
    out.residuals.push_back(r);
    acc += patch.gamma * r * r;
  }
  out.residual_term =
      cover.patches.empty() ? 0.0 : acc / static_cast<double>(cover.patches.size());
  double reg = 0.0;
  for (double v : params.theta) reg += v * v;
  out.reg_term = lambda_reg * reg;
  out.total = out.residual_term + out.reg_term;
  return out;
}

}  // namespace mfvpinn
