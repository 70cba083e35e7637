#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace mfvpinn {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2 operator/(double s) const { return {x / s, y / s}; }
  Vec2& operator+=(Vec2 o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double norm() const { return std::sqrt(x * x + y * y); }
};

inline Vec2 operator*(double s, Vec2 v) { return v * s; }

/// Deterministic random source. All stochastic choices in the solver go
/// through this class so that a run is reproducible from its seed alone,
/// independently of the standard library's distribution implementations.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  /// Standard normal via Box-Muller (one value per draw).
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  /// Normal(0, sigma) with samples outside +-clip*sigma redrawn.
  double truncated_normal(double sigma, double clip = 2.0) {
    for (;;) {
      const double z = normal();
      if (std::abs(z) <= clip) return z * sigma;
    }
  }

private:
  std::mt19937_64 eng_;
};

/// Compensated (Kahan) summation over a span, in the given order.
inline double kahan_sum(std::span<const double> values) {
  double s = 0.0, c = 0.0;
  for (double v : values) {
    const double t = v - c;
    const double u = s + t;
    c = (u - s) - t;
    s = u;
  }
  return s;
}

}  // namespace mfvpinn
