#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "tpv/geometry/grid.hpp"

namespace tpv::geometry {

// World-space reference points for image cross-attention of query (i, j) on
// `view`: every point shares the query's two in-plane world coordinates and the
// third coordinate sits at `count` uniform cell-center depths across the
// orthogonal extent. Throws ConfigError if count < 1 or count exceeds the
// orthogonal cell count.
std::vector<Vec3> ica_reference_points(View view, std::int64_t i, std::int64_t j, const TpvGridSpec& spec,
                                       std::int64_t count);

struct CvhaOptions {
  double radius = 2.0;          // cells
  std::int64_t same_count = 4;  // random neighbours on the query's own plane
  // Cross-plane counts per query view; each cross-plane set uses the count of
  // the query view.
  std::array<std::int64_t, 3> cross_count = {4, 4, 4};

  void validate() const;
};

// Reference grid coordinates of one hybrid-attention query, grouped by the
// plane they live on (indexed by View). by_plane[view] is the same-plane set.
struct CvhaRefs {
  View query_view = View::Top;
  std::array<std::vector<GridCoord>, 3> by_plane;

  const std::vector<GridCoord>& on(View v) const { return by_plane[static_cast<int>(v)]; }
};

// Cross-plane rule, with c the query's cell-center coordinate and t_k uniform
// positions along the orthogonal axis:
//   top   (h, w): side {(t_k, h_c)}   front {(w_c, t_k)}
//   side  (d, h): top  {(h_c, t_k)}   front {(t_k, d_c)}
//   front (w, d): top  {(t_k, w_c)}   side  {(d_c, t_k)}
// Same-plane points are uniform in a disc of `radius` cells around the query
// center, drawn from a generator seeded by (seed, view, i, j).
CvhaRefs cvha_reference_points(View view, std::int64_t i, std::int64_t j, const TpvGridSpec& spec,
                               const CvhaOptions& options, std::uint64_t seed);

// Deterministic 64-bit mix of a seed with extra words.
std::uint64_t mix_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> words);

}  // namespace tpv::geometry
