#pragma once

#include <array>
#include <utility>
#include <vector>

#include "mfvpinn/core.hpp"

namespace mfvpinn {

/// The unit-square reference patch with its four-triangle fan triangulation.
/// Triangle j connects vertices j and (j+1) mod 4 with the center, so the
/// triangles partition the square and share the center as common apex.
struct ReferencePatch {
  static constexpr int kTriangles = 4;

  std::array<Vec2, 4> vertices{{{0.0, 0.0}, {1.0, 0.0}, {1.0, 1.0}, {0.0, 1.0}}};
  Vec2 center{0.5, 0.5};
  // Index triples into [vertices..., center]; index 4 is the center.
  std::array<std::array<int, 3>, 4> triangles{{{0, 1, 4}, {1, 2, 4}, {2, 3, 4}, {3, 0, 4}}};

  Vec2 point(int idx) const { return idx == 4 ? center : vertices[static_cast<std::size_t>(idx)]; }

  static const ReferencePatch& instance();
};

/// Axis-aligned rectangular patch, an affine image of the reference patch
/// under positive diagonal scaling plus translation.
struct Patch {
  int id = -1;
  Vec2 center;
  Vec2 half_widths;  // (hx/2, hy/2); square patches have hx == hy
  int level = 0;     // refinement generation this patch first appeared in
  double gamma = 0.0;  // 1 / area

  double area() const { return 4.0 * half_widths.x * half_widths.y; }
  double diameter() const { return 2.0 * half_widths.norm(); }
  Vec2 lo() const { return center - half_widths; }
  Vec2 hi() const { return center + half_widths; }

  bool contains(Vec2 p, double tol = 1e-12) const {
    return p.x >= center.x - half_widths.x - tol && p.x <= center.x + half_widths.x + tol &&
           p.y >= center.y - half_widths.y - tol && p.y <= center.y + half_widths.y + tol;
  }

  /// Corner j of the patch, ordered like the reference-patch vertices.
  Vec2 corner(int j) const;

  static Patch square(int id, Vec2 center, double edge, int level);
  static Patch from_bounds(int id, Vec2 lo, Vec2 hi, int level);
};

/// M_i : reference patch -> patch.
Vec2 map_point(const Patch& patch, Vec2 ref_point);
/// M_i^{-1} : patch -> reference patch.
Vec2 inverse_map(const Patch& patch, Vec2 x);

/// Axis-aligned rectangle (used for holes).
struct Rect {
  Vec2 center;
  Vec2 half;  // (half base, half height)

  Vec2 lo() const { return center - half; }
  Vec2 hi() const { return center + half; }
  bool contains_interior(Vec2 p, double tol = 0.0) const {
    return p.x > center.x - half.x + tol && p.x < center.x + half.x - tol &&
           p.y > center.y - half.y + tol && p.y < center.y + half.y - tol;
  }
};

/// Computational domain: the unit square minus a set of rectangular holes.
struct Domain {
  std::vector<Rect> holes;

  bool in_hole_interior(Vec2 p, double tol = 0.0) const {
    for (const Rect& h : holes)
      if (h.contains_interior(p, tol)) return true;
    return false;
  }

  static Domain unit_square() { return {}; }
};

/// An ordered collection of patches covering the domain at one adaptive
/// generation. Patch ids are unique across the whole run; `next_id` is
/// carried along so refinement can keep assigning fresh ids.
struct Cover {
  std::vector<Patch> patches;
  int generation = 0;
  int next_id = 0;

  int add(Patch p) {
    p.id = next_id++;
    patches.push_back(p);
    return p.id;
  }
  std::size_t size() const { return patches.size(); }
};

/// The fixed starting covers: the single full-domain patch, and its
/// enrichment with four edge-0.6 patches at (0.3,0.3), (0.7,0.3),
/// (0.3,0.7), (0.7,0.7). Hole domains cut these afterwards.
std::pair<Cover, Cover> initial_covers();

/// Removes the hole regions from a patch. Returns the patch unchanged when
/// it meets no hole interior; with exactly one hole, the minimal set (at
/// most four) of maximal axis-aligned rectangles covering patch \ hole;
/// with two or more holes, recursively splits into four overlapping corner
/// sub-patches until every piece meets at most one hole. Pieces with aspect
/// ratio above 100 or area below area(parent)/100 are dropped. Produced
/// patches keep the parent's level and have id -1 (assigned on insertion).
std::vector<Patch> cut_patch(const Patch& patch, const Domain& domain);

/// Cuts every patch of a cover, assigning fresh ids to pieces that differ
/// from their parent. Patches untouched by holes keep their id.
Cover cut_cover(const Cover& cover, const Domain& domain);

/// True iff every node of a grid_n x grid_n uniform sample of the domain
/// (hole interiors excluded) lies in at least one closed patch.
bool cover_check(const Cover& cover, const Domain& domain, int grid_n);

}  // namespace mfvpinn
