#pragma once

#include <functional>
#include <optional>
#include <string>

#include "mfvpinn/geometry.hpp"
#include "mfvpinn/network.hpp"

namespace mfvpinn {

/// Coefficients, data and (optionally) the exact solution of the
/// second-order elliptic problem
///   -div(mu grad u) + beta . grad u + sigma u = f   in Omega,
///   u = g on the boundary.
struct ProblemSpec {
  std::string name;
  std::function<double(Vec2)> mu;
  std::function<Vec2(Vec2)> beta;
  std::function<double(Vec2)> sigma;
  std::function<double(Vec2)> f;
  std::function<double(Vec2)> g;
  Domain domain;
  std::optional<ScalarField> exact;  // value + gradient
  BoundaryLift lift;
};

/// Poisson problem on the unit square whose exact solution is, in polar
/// coordinates, r^(2/3) sin(2/3 (theta + pi/2)); harmonic, so f = 0, with a
/// gradient blowing up like r^(-1/3) at the origin.
ProblemSpec poisson_singular();

/// Poisson problem on the unit square minus four rectangular holes, with a
/// degree-(6,6) product-polynomial solution normalized to value 1 at
/// (2/13, 2/17) and homogeneous Dirichlet data. The hole sides sit exactly
/// on the roots of the polynomial factors, so the solution vanishes on the
/// entire boundary.
ProblemSpec poisson_holes();

/// Batch evaluator of an approximate solution (value and gradient).
using FieldEvalFn =
    std::function<void(std::span<const Vec2>, std::span<double>, std::span<Vec2>)>;

/// Wraps a network + boundary lift as a batch field evaluator.
FieldEvalFn lifted_network_field(const NetworkParams& params, const BoundaryLift& lift);

/// Relative H1 error || u - u_approx ||_1 / || u ||_1 over the domain,
/// computed on a ref_level x ref_level grid of cells with an order-5 tensor
/// Gauss rule per cell; cells meeting a hole interior are excluded.
/// Requires problem.exact.
double relative_h1_error(const FieldEvalFn& approx, const ProblemSpec& problem, int ref_level);

}  // namespace mfvpinn
