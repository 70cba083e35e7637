#include "mfvpinn/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mfvpinn {

const ReferencePatch& ReferencePatch::instance() {
  static const ReferencePatch ref;
  return ref;
}

Vec2 Patch::corner(int j) const {
  const Vec2 v = ReferencePatch::instance().vertices[static_cast<std::size_t>(j)];
  return map_point(*this, v);
}

Patch Patch::square(int id, Vec2 center, double edge, int level) {
  return from_bounds(id, {center.x - edge / 2.0, center.y - edge / 2.0},
                     {center.x + edge / 2.0, center.y + edge / 2.0}, level);
}

Patch Patch::from_bounds(int id, Vec2 lo, Vec2 hi, int level) {
  if (!(hi.x > lo.x) || !(hi.y > lo.y)) throw std::invalid_argument("patch bounds degenerate");
  Patch p;
  p.id = id;
  p.center = (lo + hi) * 0.5;
  p.half_widths = (hi - lo) * 0.5;
  p.level = level;
  p.gamma = 1.0 / p.area();
  return p;
}

Vec2 map_point(const Patch& patch, Vec2 ref_point) {
  const Vec2 c = ReferencePatch::instance().center;
  return {patch.center.x + 2.0 * patch.half_widths.x * (ref_point.x - c.x),
          patch.center.y + 2.0 * patch.half_widths.y * (ref_point.y - c.y)};
}

Vec2 inverse_map(const Patch& patch, Vec2 x) {
  const Vec2 c = ReferencePatch::instance().center;
  return {c.x + (x.x - patch.center.x) / (2.0 * patch.half_widths.x),
          c.y + (x.y - patch.center.y) / (2.0 * patch.half_widths.y)};
}

std::pair<Cover, Cover> initial_covers() {
  Cover p0;
  p0.generation = 0;
  p0.add(Patch::square(0, {0.5, 0.5}, 1.0, 0));

  Cover p1;
  p1.generation = 1;
  p1.patches = p0.patches;
  p1.next_id = p0.next_id;
  for (Vec2 c : {Vec2{0.3, 0.3}, Vec2{0.7, 0.3}, Vec2{0.3, 0.7}, Vec2{0.7, 0.7}})
    p1.add(Patch::square(0, c, 0.6, 1));
  return {p0, p1};
}

namespace {

bool overlaps_interior(Vec2 alo, Vec2 ahi, Vec2 blo, Vec2 bhi) {
  return alo.x < bhi.x && blo.x < ahi.x && alo.y < bhi.y && blo.y < ahi.y;
}

int count_hole_overlaps(const Patch& p, const Domain& dom) {
  int n = 0;
  for (const Rect& h : dom.holes)
    if (overlaps_interior(p.lo(), p.hi(), h.lo(), h.hi())) ++n;
  return n;
}

const Rect* first_overlapping_hole(const Patch& p, const Domain& dom) {
  for (const Rect& h : dom.holes)
    if (overlaps_interior(p.lo(), p.hi(), h.lo(), h.hi())) return &h;
  return nullptr;
}

bool piece_acceptable(Vec2 lo, Vec2 hi, double parent_area) {
  const double wx = hi.x - lo.x;
  const double wy = hi.y - lo.y;
  if (wx <= 0.0 || wy <= 0.0) return false;
  const double ar = std::max(wx / wy, wy / wx);
  if (ar > 100.0) return false;
  if (wx * wy < parent_area / 100.0) return false;
  return true;
}

// Maximal axis-aligned rectangles covering patch \ hole when the two
// rectangles' interiors overlap: one strip per hole side that falls
// strictly inside the patch. Strips overlap near the hole's corners.
void cut_single_hole(const Patch& p, const Rect& hole, double parent_area,
                     std::vector<Patch>& out) {
  const Vec2 plo = p.lo(), phi = p.hi();
  const Vec2 hlo = hole.lo(), hhi = hole.hi();

  struct Piece {
    Vec2 lo, hi;
  };
  std::array<Piece, 4> candidates{{
      {{plo.x, plo.y}, {hlo.x, phi.y}},  // left of the hole
      {{hhi.x, plo.y}, {phi.x, phi.y}},  // right
      {{plo.x, plo.y}, {phi.x, hlo.y}},  // below
      {{plo.x, hhi.y}, {phi.x, phi.y}},  // above
  }};
  for (const Piece& c : candidates) {
    if (c.hi.x - c.lo.x <= 0.0 || c.hi.y - c.lo.y <= 0.0) continue;
    if (!piece_acceptable(c.lo, c.hi, parent_area)) continue;
    Patch piece = Patch::from_bounds(-1, c.lo, c.hi, p.level);
    out.push_back(piece);
  }
}

void cut_recursive(const Patch& p, const Domain& dom, double parent_area, int depth,
                   std::vector<Patch>& out) {
  if (depth > 40) throw std::runtime_error("cut_patch: recursion depth exceeded");
  const int n = count_hole_overlaps(p, dom);
  if (n == 0) {
    out.push_back(p);
    return;
  }
  if (n == 1) {
    cut_single_hole(p, *first_overlapping_hole(p, dom), parent_area, out);
    return;
  }
  // Two or more holes: four corner sub-patches, each 0.55 of the parent per
  // axis, so the quadrants tile the parent with 10% linear overlap.
  const Vec2 plo = p.lo(), phi = p.hi();
  const double wx = 0.55 * (phi.x - plo.x);
  const double wy = 0.55 * (phi.y - plo.y);
  const std::array<std::array<Vec2, 2>, 4> quads{{
      {{plo, {plo.x + wx, plo.y + wy}}},
      {{{phi.x - wx, plo.y}, {phi.x, plo.y + wy}}},
      {{{phi.x - wx, phi.y - wy}, phi}},
      {{{plo.x, phi.y - wy}, {plo.x + wx, phi.y}}},
  }};
  for (const auto& q : quads) {
    Patch child = Patch::from_bounds(-1, q[0], q[1], p.level);
    cut_recursive(child, dom, parent_area, depth + 1, out);
  }
}

}  // namespace

std::vector<Patch> cut_patch(const Patch& patch, const Domain& domain) {
  std::vector<Patch> out;
  if (count_hole_overlaps(patch, domain) == 0) {
    out.push_back(patch);
    return out;
  }
  cut_recursive(patch, domain, patch.area(), 0, out);
  return out;
}

Cover cut_cover(const Cover& cover, const Domain& domain) {
  Cover result;
  result.generation = cover.generation;
  result.next_id = cover.next_id;
  for (const Patch& p : cover.patches) {
    std::vector<Patch> pieces = cut_patch(p, domain);
    if (pieces.size() == 1 && pieces.front().id == p.id) {
      result.patches.push_back(pieces.front());
      continue;
    }
    for (Patch& piece : pieces) result.add(piece);
  }
  return result;
}

bool cover_check(const Cover& cover, const Domain& domain, int grid_n) {
  if (grid_n < 2) throw std::invalid_argument("cover_check: grid_n must be >= 2");
  for (int i = 0; i < grid_n; ++i) {
    for (int j = 0; j < grid_n; ++j) {
      const Vec2 p{static_cast<double>(i) / (grid_n - 1), static_cast<double>(j) / (grid_n - 1)};
      if (domain.in_hole_interior(p, 1e-12)) continue;
      bool covered = false;
      for (const Patch& patch : cover.patches) {
        if (patch.contains(p)) {
          covered = true;
          break;
        }
      }
      if (!covered) return false;
    }
  }
  return true;
}

}  // namespace mfvpinn
