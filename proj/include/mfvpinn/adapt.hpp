#pragma once

#include <span>
#include <vector>

#include "mfvpinn/core.hpp"
#include "mfvpinn/geometry.hpp"

namespace mfvpinn {

struct RefinementConfig {
  int strategy = 2;              // 1..4
  int c_m = 4;                   // children per marked patch: 4 or 9
  double a_ratio = 1.25;         // children area sum factor (through the edge formula)
  double energy_fraction = 0.75; // marked prefix must reach this indicator share
  double cap_fraction = 0.3;     // marked count capped at ceil(cap * cover size)
  double jitter_lo = 9.0 / 10.0; // strategy-1 edge jitter interval
  double jitter_hi = 10.0 / 9.0;
  int level_window = 2;          // strategy 3 marks levels <= max_level - level_window
  bool strategy4_gamma_scaled = true;  // rank gamma r^2 rather than raw r^2
};

struct Marking {
  int tau_tilde = 0;
  int tau = 0;
  std::vector<int> marked;  // positions into the score vector, sorted by rank
};

/// Bulk marking: tau_tilde is the shortest descending prefix whose share of
/// the total reaches energy_fraction; tau caps it at
/// ceil(cap_fraction * n). Ties in the descending sort break toward the
/// lower patch id. An all-zero score vector marks the single entry with the
/// lowest id.
Marking select_tau(std::span<const double> scores, std::span<const int> ids,
                   double energy_fraction, double cap_fraction);

/// Moves a candidate child center the minimal amount so a patch of the
/// given per-axis edges fits in the unit square (componentwise clamp).
Vec2 clamp_center(Vec2 candidate, Vec2 edge);

/// Strategy-1 children: uniformly random centers inside the parent, edges
/// jittered around (a_ratio / sqrt(c_m)) times the parent's.
std::vector<Patch> spawn_random(const Patch& parent, const RefinementConfig& config, Rng& rng);

/// Strategy-2/3 children: centers at the fixed reference layout (2x2 at
/// 0.25/0.75 or 3x3 at 0.2/0.5/0.8) mapped through the parent, no jitter.
/// With a_ratio >= 1 the children cover the parent.
std::vector<Patch> spawn_fixed(const Patch& parent, const RefinementConfig& config);

struct RefineResult {
  Cover cover;
  std::vector<int> marked_ids;
  std::vector<int> spawned_ids;
  std::vector<int> removed_ids;
};

/// One refinement transaction: marking per the configured strategy,
/// spawning, optional parent removal (strategy 3), and hole cutting of
/// every new patch. `scores` is eta_gamma for strategies 1-3 and the
/// (gamma-scaled) squared residual for strategy 4.
RefineResult refine(const Cover& cover, std::span<const double> scores, const Domain& domain,
                    const RefinementConfig& config, Rng& rng);

}  // namespace mfvpinn
