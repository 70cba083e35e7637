#include "mfvpinn/adapt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

namespace mfvpinn {

Marking select_tau(std::span<const double> scores, std::span<const int> ids,
                   double energy_fraction, double cap_fraction) {
  const std::size_t n = scores.size();
  if (n == 0) throw std::invalid_argument("select_tau: empty score vector");
  if (ids.size() != n) throw std::invalid_argument("select_tau: id span mismatch");
  for (double s : scores)
    if (!(s >= 0.0)) throw std::invalid_argument("select_tau: scores must be non-negative");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids[a] < ids[b];
  });

  const double total = kahan_sum(scores);
  Marking m;
  if (total <= 0.0) {
    // Degenerate: every indicator vanished; mark the lowest-id patch.
    m.tau_tilde = 1;
    m.tau = 1;
    m.marked.push_back(static_cast<int>(order.front()));
    return m;
  }

  int below = 0;
  double prefix = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    prefix += scores[order[k]];
    if (prefix / total < energy_fraction)
      ++below;
    else
      break;
  }
  m.tau_tilde = below + 1;
  const int cap = static_cast<int>(std::ceil(cap_fraction * static_cast<double>(n)));
  m.tau = std::min(cap, m.tau_tilde);
  m.marked.reserve(static_cast<std::size_t>(m.tau));
  for (std::size_t k = 0; k < static_cast<std::size_t>(m.tau); ++k)
    m.marked.push_back(static_cast<int>(order[k]));
  return m;
}

Vec2 clamp_center(Vec2 candidate, Vec2 edge) {
  return {std::max(std::min(candidate.x, 1.0 - edge.x / 2.0), edge.x / 2.0),
          std::max(std::min(candidate.y, 1.0 - edge.y / 2.0), edge.y / 2.0)};
}

std::vector<Patch> spawn_random(const Patch& parent, const RefinementConfig& config, Rng& rng) {
  const double scale = config.a_ratio / std::sqrt(static_cast<double>(config.c_m));
  std::vector<Patch> children;
  children.reserve(static_cast<std::size_t>(config.c_m));
  for (int k = 0; k < config.c_m; ++k) {
    const Vec2 cand{rng.uniform(parent.lo().x, parent.hi().x),
                    rng.uniform(parent.lo().y, parent.hi().y)};
    const double lambda = rng.uniform(config.jitter_lo, config.jitter_hi);
    const Vec2 edge{lambda * scale * 2.0 * parent.half_widths.x,
                    lambda * scale * 2.0 * parent.half_widths.y};
    const Vec2 center = clamp_center(cand, edge);
    children.push_back(Patch::from_bounds(-1, {center.x - edge.x / 2.0, center.y - edge.y / 2.0},
                                          {center.x + edge.x / 2.0, center.y + edge.y / 2.0},
                                          parent.level + 1));
  }
  return children;
}

std::vector<Patch> spawn_fixed(const Patch& parent, const RefinementConfig& config) {
  static const std::vector<Vec2> layout4{{0.25, 0.25}, {0.75, 0.25}, {0.25, 0.75}, {0.75, 0.75}};
  static const std::vector<Vec2> layout9{{0.2, 0.2}, {0.2, 0.5}, {0.2, 0.8},
                                         {0.5, 0.2}, {0.5, 0.5}, {0.5, 0.8},
                                         {0.8, 0.2}, {0.8, 0.5}, {0.8, 0.8}};
  const std::vector<Vec2>* layout = nullptr;
  if (config.c_m == 4)
    layout = &layout4;
  else if (config.c_m == 9)
    layout = &layout9;
  else
    throw std::invalid_argument("spawn_fixed: c_m must be 4 or 9");

  const double scale = config.a_ratio / std::sqrt(static_cast<double>(config.c_m));
  const Vec2 edge{scale * 2.0 * parent.half_widths.x, scale * 2.0 * parent.half_widths.y};
  std::vector<Patch> children;
  children.reserve(layout->size());
  for (Vec2 ref : *layout) {
    const Vec2 center = clamp_center(map_point(parent, ref), edge);
    children.push_back(Patch::from_bounds(-1, {center.x - edge.x / 2.0, center.y - edge.y / 2.0},
                                          {center.x + edge.x / 2.0, center.y + edge.y / 2.0},
                                          parent.level + 1));
  }
  return children;
}

RefineResult refine(const Cover& cover, std::span<const double> scores, const Domain& domain,
                    const RefinementConfig& config, Rng& rng) {
  if (scores.size() != cover.patches.size())
    throw std::invalid_argument("refine: one score per patch required");
  if (cover.patches.empty()) throw std::invalid_argument("refine: empty cover");

  std::vector<int> ids(cover.patches.size());
  for (std::size_t i = 0; i < cover.patches.size(); ++i) ids[i] = cover.patches[i].id;

  const Marking main = select_tau(scores, ids, config.energy_fraction, config.cap_fraction);
  std::set<int> marked_pos(main.marked.begin(), main.marked.end());

  if (config.strategy == 3) {
    // Small-level-gap extension: additionally mark the worst low-level
    // patches (levels <= max_level - level_window), up to tau more.
    int max_level = 0;
    for (const Patch& p : cover.patches) max_level = std::max(max_level, p.level);
    const int window = max_level - config.level_window;
    std::vector<std::size_t> low;
    for (std::size_t i = 0; i < cover.patches.size(); ++i)
      if (cover.patches[i].level <= window) low.push_back(i);
    if (!low.empty()) {
      std::sort(low.begin(), low.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return ids[a] < ids[b];
      });
      const std::size_t take = std::min(low.size(), static_cast<std::size_t>(main.tau));
      for (std::size_t k = 0; k < take; ++k) marked_pos.insert(static_cast<int>(low[k]));
    }
  }

  RefineResult result;
  result.cover.generation = cover.generation + 1;
  result.cover.next_id = cover.next_id;

  const bool remove_parents = config.strategy == 3;
  for (std::size_t i = 0; i < cover.patches.size(); ++i) {
    const bool marked = marked_pos.count(static_cast<int>(i)) > 0;
    if (marked) result.marked_ids.push_back(cover.patches[i].id);
    if (marked && remove_parents) {
      result.removed_ids.push_back(cover.patches[i].id);
      continue;
    }
    result.cover.patches.push_back(cover.patches[i]);
  }

  const bool random_centers = config.strategy == 1 || config.strategy == 4;
  for (int pos : marked_pos) {
    const Patch& parent = cover.patches[static_cast<std::size_t>(pos)];
    std::vector<Patch> children = random_centers ? spawn_random(parent, config, rng)
                                                 : spawn_fixed(parent, config);
    for (const Patch& child : children) {
      for (Patch piece : cut_patch(child, domain)) {
        const int id = result.cover.add(piece);
        result.spawned_ids.push_back(id);
      }
    }
  }
  return result;
}

}  // namespace mfvpinn
