#pragma once

// Shared independent oracles for the test suites. Everything here is kept
// deliberately naive (brute force, closed forms, finite differences) and
// separate from the library's own computation paths.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "mfvpinn/core.hpp"

namespace oracles {

/// Closed-form integral of x^a y^b over an axis-aligned rectangle.
inline double rect_monomial(double x0, double x1, double y0, double y1, int a, int b) {
  auto seg = [](double lo, double hi, int k) {
    return (std::pow(hi, k + 1) - std::pow(lo, k + 1)) / (k + 1);
  };
  return seg(x0, x1, a) * seg(y0, y1, b);
}

/// Central finite difference of a scalar function of one coordinate.
inline double central_diff(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

/// Five-point-stencil Laplacian with one Richardson extrapolation step
/// (h^4 accurate), used to validate manufactured forcings.
inline double stencil_laplacian(const std::function<double(mfvpinn::Vec2)>& f, mfvpinn::Vec2 p,
                                double h) {
  auto lap = [&](double hh) {
    return (f({p.x + hh, p.y}) + f({p.x - hh, p.y}) + f({p.x, p.y + hh}) + f({p.x, p.y - hh}) -
            4.0 * f(p)) /
           (hh * hh);
  };
  const double c = lap(h);
  const double fpart = lap(h / 2.0);
  return (4.0 * fpart - c) / 3.0;
}

/// Brute-force prefix scan implementing the bulk-marking thresholds.
struct MarkOracle {
  int tau_tilde = 0;
  int tau = 0;
  std::vector<int> marked;  // positions
};

inline MarkOracle mark_prefix_scan(const std::vector<double>& scores, double fraction,
                                   double cap) {
  const int n = static_cast<int>(scores.size());
  std::vector<int> order(scores.size());
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
  });
  double total = 0.0;
  for (double s : scores) total += s;
  MarkOracle out;
  int below = 0;
  double acc = 0.0;
  for (int k = 0; k < n; ++k) {
    acc += scores[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])];
    if (acc / total < fraction)
      ++below;
    else
      break;
  }
  out.tau_tilde = below + 1;
  out.tau = std::min(static_cast<int>(std::ceil(cap * n)), out.tau_tilde);
  out.marked.assign(order.begin(), order.begin() + out.tau);
  return out;
}

}  // namespace oracles
