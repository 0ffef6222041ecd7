#include "tpv/geometry/grid.hpp"

#include "tpv/errors.hpp"

namespace tpv::geometry {

std::string_view view_name(View view) {
  switch (view) {
    case View::Top:
      return "top";
    case View::Side:
      return "side";
    case View::Front:
      return "front";
  }
  return "?";
}

View parse_view(std::string_view tag) {
  if (tag == "top") return View::Top;
  if (tag == "side") return View::Side;
  if (tag == "front") return View::Front;
  throw ConfigError("unknown view tag '" + std::string(tag) + "' (expected top, side or front)");
}

void TpvGridSpec::validate() const {
  if (H < 1 || W < 1 || D < 1) {
    throw ConfigError("grid extents must be >= 1, got " + std::to_string(H) + "x" + std::to_string(W) + "x" +
                      std::to_string(D));
  }
  if (!(cell_size > 0.0)) throw ConfigError("cell size must be positive");
}

std::array<std::int64_t, 2> TpvGridSpec::plane_extent(View view) const {
  switch (view) {
    case View::Top:
      return {H, W};
    case View::Side:
      return {D, H};
    case View::Front:
      return {W, D};
  }
  throw ConfigError("unknown view");
}

std::int64_t TpvGridSpec::orthogonal_extent(View view) const {
  switch (view) {
    case View::Top:
      return D;
    case View::Side:
      return W;
    case View::Front:
      return H;
  }
  throw ConfigError("unknown view");
}

std::int64_t TpvGridSpec::cell_count(View view) const {
  const auto e = plane_extent(view);
  return e[0] * e[1];
}

Vec3 TpvGridSpec::lower() const {
  return origin - 0.5 * cell_size * Vec3(static_cast<double>(H), static_cast<double>(W), static_cast<double>(D));
}

Vec3 TpvGridSpec::upper() const {
  return origin + 0.5 * cell_size * Vec3(static_cast<double>(H), static_cast<double>(W), static_cast<double>(D));
}

bool TpvGridSpec::contains(const Vec3& p) const {
  const Vec3 lo = lower(), hi = upper();
  return p.x() >= lo.x() && p.x() < hi.x() && p.y() >= lo.y() && p.y() < hi.y() && p.z() >= lo.z() && p.z() < hi.z();
}

Vec3 TpvGridSpec::voxel_center(std::int64_t h, std::int64_t w, std::int64_t d) const {
  return lower() + cell_size * Vec3(static_cast<double>(h) + 0.5, static_cast<double>(w) + 0.5,
                                    static_cast<double>(d) + 0.5);
}

namespace {

double to_world(double grid, std::int64_t extent, double s, double origin) {
  return (grid - static_cast<double>(extent) / 2.0) * s + origin;
}

double to_grid(double world, std::int64_t extent, double s, double origin) {
  return (world - origin) / s + static_cast<double>(extent) / 2.0;
}

}  // namespace

std::array<double, 2> plane_to_world(const TpvGridSpec& spec, View view, GridCoord c) {
  const double s = spec.cell_size;
  const Vec3& o = spec.origin;
  switch (view) {
    case View::Top:
      return {to_world(c.a, spec.H, s, o.x()), to_world(c.b, spec.W, s, o.y())};
    case View::Side:
      return {to_world(c.a, spec.D, s, o.z()), to_world(c.b, spec.H, s, o.x())};
    case View::Front:
      return {to_world(c.a, spec.W, s, o.y()), to_world(c.b, spec.D, s, o.z())};
  }
  throw ConfigError("unknown view");
}

GridCoord world_to_plane(const TpvGridSpec& spec, View view, const Vec3& p) {
  const double s = spec.cell_size;
  const Vec3& o = spec.origin;
  switch (view) {
    case View::Top:
      return {to_grid(p.x(), spec.H, s, o.x()), to_grid(p.y(), spec.W, s, o.y())};
    case View::Side:
      return {to_grid(p.z(), spec.D, s, o.z()), to_grid(p.x(), spec.H, s, o.x())};
    case View::Front:
      return {to_grid(p.y(), spec.W, s, o.y()), to_grid(p.z(), spec.D, s, o.z())};
  }
  throw ConfigError("unknown view");
}

std::vector<double> uniform_pillar_positions(std::int64_t extent, std::int64_t count) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(count));
  for (std::int64_t k = 0; k < count; ++k) {
    out.push_back((static_cast<double>(k) + 0.5) * static_cast<double>(extent) / static_cast<double>(count));
  }
  return out;
}

}  // namespace tpv::geometry
