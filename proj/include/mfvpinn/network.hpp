#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mfvpinn/core.hpp"

namespace mfvpinn {

/// Weights of a fully connected tanh network mapping R^2 -> R. Parameters
/// are stored flat in layer-major order: A_1 (row-major), b_1, A_2, b_2, ...
/// The last layer is affine (no activation).
struct NetworkParams {
  std::vector<int> layer_dims;  // [2, N_1, ..., N_{L-1}, 1]
  std::vector<double> theta;
  std::uint64_t seed = 0;

  int layer_count() const { return static_cast<int>(layer_dims.size()) - 1; }
  std::size_t param_count() const;
  std::size_t weight_offset(int layer) const;  // layer in 1..L
  std::size_t bias_offset(int layer) const;
};

/// Glorot-normal initialization: weights from a truncated normal with
/// std sqrt(2 / (N_{l-1} + N_l)) clipped at two standard deviations,
/// biases zero. Reproducible from the seed.
NetworkParams init_params(const std::vector<int>& layer_dims, std::uint64_t seed);

/// Scratch buffers for forward/backward passes; reusable across calls to
/// avoid allocation in the training loop.
struct NetworkWorkspace {
  // Per layer l = 0..L-1: activations z and input-tangent columns jx, jy.
  // For hidden layers additionally t = tanh' and the pre-activation
  // tangents px, py (J = t .* P), needed by the backward pass.
  std::vector<std::vector<double>> z, jx, jy, t, px, py;
  std::vector<double> zbar, jxbar, jybar, sbar, pxbar, pybar, zbar2, jxbar2, jybar2;

  void resize(const NetworkParams& params);
};

/// Evaluates u and its spatial gradient at a batch of points. The gradient
/// is propagated by the exact chain rule alongside the value; no
/// approximation is involved.
void forward_batch(const NetworkParams& params, std::span<const Vec2> points,
                   std::span<double> u, std::span<Vec2> grad, NetworkWorkspace& ws);

/// Convenience overload with internal workspace.
void forward_batch(const NetworkParams& params, std::span<const Vec2> points,
                   std::span<double> u, std::span<Vec2> grad);

/// Accumulates d/dtheta sum_p [cot_u[p] * u(x_p) + cot_grad[p] . grad u(x_p)]
/// into grad_out (which is zeroed first): the exact adjoint of
/// forward_batch over the joint (value, gradient) computation. Points are
/// processed in order with a sequential reduction, so results are
/// reproducible bit-for-bit.
void param_gradient(const NetworkParams& params, std::span<const Vec2> points,
                    std::span<const double> cot_u, std::span<const Vec2> cot_grad,
                    std::span<double> grad_out, NetworkWorkspace& ws);

void param_gradient(const NetworkParams& params, std::span<const Vec2> points,
                    std::span<const double> cot_u, std::span<const Vec2> cot_grad,
                    std::span<double> grad_out);

/// A scalar field with its gradient.
struct FieldSample {
  double value = 0.0;
  Vec2 grad;
};

using ScalarField = std::function<FieldSample(Vec2)>;

/// Boundary enforcement B w = phi * w + gbar, with phi vanishing on the
/// domain boundary and positive inside, and gbar an extension of the
/// Dirichlet data.
struct BoundaryLift {
  ScalarField phi;
  ScalarField gbar;
};

/// Applies the lift in place: u <- phi u + gbar, grad <- phi grad + u grad(phi) + grad(gbar).
void apply_lift(const BoundaryLift& lift, std::span<const Vec2> points, std::span<double> u,
                std::span<Vec2> grad);

/// Lift values precomputed at a fixed point set (evaluated once per
/// training iteration, then reused every optimizer step).
struct LiftCache {
  std::vector<double> phi, gbar;
  std::vector<Vec2> dphi, dgbar;
};

LiftCache cache_lift(const BoundaryLift& lift, std::span<const Vec2> points);

void apply_lift_cached(const LiftCache& cache, std::span<double> u, std::span<Vec2> grad);

/// Transforms cotangents w.r.t. (Bu, grad Bu) into cotangents w.r.t. the raw
/// network outputs (u, grad u). Needs the raw network values u at the same
/// points only through the cache-independent chain rule, so it is purely
/// algebraic: cu <- phi cu + dphi . cg, cg <- phi cg.
void lift_cotangents_cached(const LiftCache& cache, std::span<double> cot_u,
                            std::span<Vec2> cot_grad);

}  // namespace mfvpinn
