#pragma once

#include <span>
#include <vector>

#include "mfvpinn/geometry.hpp"
#include "mfvpinn/network.hpp"
#include "mfvpinn/problems.hpp"
#include "mfvpinn/quadrature.hpp"

namespace mfvpinn {

struct TestEval {
  double value = 0.0;
  Vec2 grad;
};

/// The patch's hat test function: 1 at the patch center, 0 on the patch
/// boundary and outside, linear on each fan triangle. The gradient is
/// transformed through the inverse diagonal scaling of the patch map.
TestEval eval_test(const Patch& patch, Vec2 x);

/// Everything the loss needs about one patch, precomputed once per
/// training iteration: mapped quadrature nodes, test-function values and
/// gradients, coefficient samples, and the fused per-node residual
/// coefficients (the coefficients of u and grad u in r_{h,i}).
struct PatchTensors {
  int patch_id = -1;
  double gamma = 0.0;
  std::vector<Vec2> nodes;  // triangle-major, points_per_triangle per fan triangle
  std::vector<double> weights;
  std::vector<double> phi;
  std::vector<Vec2> dphi;
  std::vector<double> mu, sigma, f;
  std::vector<Vec2> beta;
  double f_term = 0.0;             // sum_l w_l f phi
  std::vector<Vec2> grad_coeff;    // w_l (mu dphi + phi beta)
  std::vector<double> val_coeff;   // w_l sigma phi
};

struct TensorSet {
  int q = 0;
  int points_per_triangle = 0;
  std::vector<PatchTensors> patches;     // in cover order
  std::vector<Vec2> nodes;               // all patch nodes, concatenated
  std::vector<std::size_t> offsets;      // patches.size() + 1 prefix offsets
  int last_build_count = 0;              // tensors freshly built by the last update
};

TensorSet build_tensors(const Cover& cover, const ProblemSpec& problem, int q);

/// Incremental rebuild: tensors of surviving patches are reused by id,
/// removed ones dropped, new ones built. `last_build_count` reports how
/// many were built.
void update_tensors(TensorSet& tensors, const Cover& cover, const ProblemSpec& problem, int q);

/// Variational residual r_{h,i} of one patch given the (lifted) solution
/// values and gradients at the patch's own nodes.
double residual(const PatchTensors& tensors, std::span<const double> u,
                std::span<const Vec2> grad_u);

struct LossBreakdown {
  double total = 0.0;
  double residual_term = 0.0;  // (1/n) sum gamma_i r_i^2
  double reg_term = 0.0;       // lambda * ||theta||^2
  std::vector<double> residuals;
};

/// Loss from precomputed lifted field values at all tensor nodes.
LossBreakdown loss_value(const TensorSet& tensors, std::span<const double> u,
                         std::span<const Vec2> grad_u, std::span<const double> theta,
                         double lambda_reg);

/// Cotangents of the residual term w.r.t. the lifted (u, grad u) at every
/// node, for the reverse pass. Outputs must have one entry per node.
void loss_cotangents(const TensorSet& tensors, std::span<const double> residuals,
                     std::span<double> cot_u, std::span<Vec2> cot_grad);

/// Full loss/gradient chain for the optimizers: raw network forward at all
/// tensor nodes, boundary lift, residual loss with L2 regularization, and
/// the exact parameter gradient via the network adjoint.
class LossOracle {
public:
  LossOracle(const TensorSet* tensors, const LiftCache* lift, std::vector<int> layer_dims,
             double lambda_reg);

  double value(std::span<const double> theta);
  double value_and_gradient(std::span<const double> theta, std::span<double> grad_out);

  const LossBreakdown& last() const { return last_; }
  std::size_t param_count() const { return params_.param_count(); }

private:
  void forward(std::span<const double> theta);

  const TensorSet* tensors_;
  const LiftCache* lift_;
  double lambda_reg_;
  NetworkParams params_;
  NetworkWorkspace ws_;
  std::vector<double> u_;
  std::vector<Vec2> gu_;
  std::vector<double> cu_;
  std::vector<Vec2> cg_;
  LossBreakdown last_;
};

/// Naive reference evaluation of the same loss: per patch, per node,
/// everything recomputed from the geometry and the problem definition with
/// no precomputed tensors. Used as the assembly oracle.
LossBreakdown loss_naive(const Cover& cover, const ProblemSpec& problem, int q,
                         const NetworkParams& params, const BoundaryLift& lift,
                         double lambda_reg);

}  // namespace mfvpinn
