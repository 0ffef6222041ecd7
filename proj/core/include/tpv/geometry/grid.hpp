#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace tpv::geometry {

using Vec3 = Eigen::Vector3d;

// The three orthogonal planes. Plane axes:
//   top   = (h, w)  world (x, y)
//   side  = (d, h)  world (z, x)
//   front = (w, d)  world (y, z)
enum class View : int { Top = 0, Side = 1, Front = 2 };

inline constexpr std::array<View, 3> kViews = {View::Top, View::Side, View::Front};

std::string_view view_name(View view);
// Parses "top" | "side" | "front"; throws ConfigError on any other tag.
View parse_view(std::string_view tag);

// Continuous position on a plane in grid units: cell i spans [i, i+1) along
// each axis, so its center sits at i + 0.5.
struct GridCoord {
  double a = 0.0;
  double b = 0.0;
};

// Position handed to bilinear sampling, where integers address cell centers.
inline double to_sample(double grid) { return grid - 0.5; }

// Grid of H x W x D cells of side `cell_size`, axis-aligned with x <-> H,
// y <-> W, z <-> D and centered on `origin` (the ego position by default).
struct TpvGridSpec {
  std::int64_t H = 1;
  std::int64_t W = 1;
  std::int64_t D = 1;
  double cell_size = 1.0;
  Vec3 origin = Vec3::Zero();

  void validate() const;

  // Extents of a plane as (rows, cols): top (H, W), side (D, H), front (W, D).
  std::array<std::int64_t, 2> plane_extent(View view) const;
  // Cell count along the axis orthogonal to a plane: top D, side W, front H.
  std::int64_t orthogonal_extent(View view) const;
  std::int64_t cell_count(View view) const;

  // World-space bounds of the volume.
  Vec3 lower() const;
  Vec3 upper() const;
  bool contains(const Vec3& p) const;

  Vec3 voxel_center(std::int64_t h, std::int64_t w, std::int64_t d) const;

  bool operator==(const TpvGridSpec& o) const {
    return H == o.H && W == o.W && D == o.D && cell_size == o.cell_size && origin == o.origin;
  }
};

// World pair of the plane's two axes for a grid position:
// top -> (x, y), side -> (z, x), front -> (y, z).
std::array<double, 2> plane_to_world(const TpvGridSpec& spec, View view, GridCoord coord);

// Projects a world point onto a plane; exact inverse of plane_to_world. The
// coordinate orthogonal to the plane is ignored.
GridCoord world_to_plane(const TpvGridSpec& spec, View view, const Vec3& p);

// Cell-center grid position of query (i, j) on a plane.
inline GridCoord query_center(std::int64_t i, std::int64_t j) {
  return {static_cast<double>(i) + 0.5, static_cast<double>(j) + 0.5};
}

// Uniform positions along the axis orthogonal to `view`, in grid units:
// (k + 0.5) * extent / count for k in [0, count).
std::vector<double> uniform_pillar_positions(std::int64_t extent, std::int64_t count);

}  // namespace tpv::geometry
