#include "tpv/geometry/reference_points.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "tpv/errors.hpp"

namespace tpv::geometry {

std::vector<Vec3> ica_reference_points(View view, std::int64_t i, std::int64_t j, const TpvGridSpec& spec,
                                       std::int64_t count) {
  const std::int64_t extent = spec.orthogonal_extent(view);
  if (count < 1) throw ConfigError("reference point count must be >= 1");
  if (count > extent) {
    throw ConfigError("reference point count " + std::to_string(count) + " exceeds the " +
                      std::to_string(extent) + " cells orthogonal to the " + std::string(view_name(view)) +
                      " plane");
  }
  const auto in_plane = plane_to_world(spec, view, query_center(i, j));
  std::vector<Vec3> out;
  out.reserve(static_cast<std::size_t>(count));
  for (const double t : uniform_pillar_positions(extent, count)) {
    switch (view) {
      case View::Top: {
        const double z = (t - static_cast<double>(spec.D) / 2.0) * spec.cell_size + spec.origin.z();
        out.emplace_back(in_plane[0], in_plane[1], z);
        break;
      }
      case View::Side: {
        const double y = (t - static_cast<double>(spec.W) / 2.0) * spec.cell_size + spec.origin.y();
        out.emplace_back(in_plane[1], y, in_plane[0]);
        break;
      }
      case View::Front: {
        const double x = (t - static_cast<double>(spec.H) / 2.0) * spec.cell_size + spec.origin.x();
        out.emplace_back(x, in_plane[0], in_plane[1]);
        break;
      }
    }
  }
  return out;
}

void CvhaOptions::validate() const {
  if (!(radius >= 1.0)) throw ConfigError("hybrid-attention neighbourhood radius must be >= 1 cell");
  if (same_count < 1) throw ConfigError("hybrid-attention same-plane count must be >= 1");
  for (const auto c : cross_count) {
    if (c < 1) throw ConfigError("hybrid-attention cross-plane counts must be >= 1");
  }
}

std::uint64_t mix_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> words) {
  auto splitmix = [](std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  };
  std::uint64_t h = splitmix(seed);
  for (const auto w : words) h = splitmix(h ^ w);
  return h;
}

CvhaRefs cvha_reference_points(View view, std::int64_t i, std::int64_t j, const TpvGridSpec& spec,
                               const CvhaOptions& options, std::uint64_t seed) {
  options.validate();
  CvhaRefs refs;
  refs.query_view = view;
  const GridCoord c = query_center(i, j);

  std::mt19937_64 rng(mix_seed(seed, {static_cast<std::uint64_t>(view), static_cast<std::uint64_t>(i),
                                      static_cast<std::uint64_t>(j)}));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto& same = refs.by_plane[static_cast<int>(view)];
  for (std::int64_t k = 0; k < options.same_count; ++k) {
    const double r = options.radius * std::sqrt(unit(rng));
    const double theta = 2.0 * std::numbers::pi * unit(rng);
    same.push_back({c.a + r * std::cos(theta), c.b + r * std::sin(theta)});
  }

  const std::int64_t n = options.cross_count[static_cast<int>(view)];
  const auto t = uniform_pillar_positions(spec.orthogonal_extent(view), n);
  auto& top = refs.by_plane[static_cast<int>(View::Top)];
  auto& side = refs.by_plane[static_cast<int>(View::Side)];
  auto& front = refs.by_plane[static_cast<int>(View::Front)];
  for (const double tk : t) {
    switch (view) {
      case View::Top:  // c = (h, w), t along d
        side.push_back({tk, c.a});
        front.push_back({c.b, tk});
        break;
      case View::Side:  // c = (d, h), t along w
        top.push_back({c.b, tk});
        front.push_back({tk, c.a});
        break;
      case View::Front:  // c = (w, d), t along h
        top.push_back({tk, c.a});
        side.push_back({c.b, tk});
        break;
    }
  }
  return refs;
}

}  // namespace tpv::geometry
