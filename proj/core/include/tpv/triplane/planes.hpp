#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "tpv/geometry/grid.hpp"
#include "tpv/numeric/tape.hpp"
#include "tpv/numeric/tensor.hpp"

namespace tpv::triplane {

using geometry::TpvGridSpec;
using geometry::Vec3;
using geometry::View;
using numeric::BasicTensor;
using numeric::Tensor;
using numeric::Var;

// Three orthogonal feature planes: hw [H x W x C], dh [D x H x C],
// wd [W x D x C]. With `bev` set only the top plane contributes to queries.
template <typename T>
struct BasicPlanes {
  BasicTensor<T> hw;
  BasicTensor<T> dh;
  BasicTensor<T> wd;
  TpvGridSpec spec;
  bool bev = false;

  static BasicPlanes zeros(const TpvGridSpec& spec, std::int64_t channels);

  std::int64_t channels() const { return hw.rank() == 3 ? hw.dim(2) : 0; }
  const BasicTensor<T>& plane(View v) const;
  BasicTensor<T>& plane(View v);
  // Throws DimensionError when plane extents disagree with each other or the grid.
  void validate() const;
  // Stored values: C * (HW + DH + WD).
  std::int64_t value_count() const { return hw.numel() + dh.numel() + wd.numel(); }
};

using TpvPlanes = BasicPlanes<float>;

// Planes as recorded tape values, for training.
template <typename T>
struct PlaneVars {
  Var<T> hw;
  Var<T> dh;
  Var<T> wd;
  bool bev = false;

  Var<T> plane(View v) const { return v == View::Top ? hw : (v == View::Side ? dh : wd); }
};

// Sample coordinates of world points on one plane, ready for bilinear
// sampling: [N x 2]. Positions within 1e-9 of an integer are snapped so voxel
// centers address cells exactly.
template <typename T>
BasicTensor<T> plane_sample_coords(const TpvGridSpec& spec, View view, std::span<const Vec3> points);

// Sum of the three bilinear plane samples per point: [N x C]. Points outside
// the volume clamp to the border cells.
Tensor query_points(const TpvPlanes& planes, std::span<const Vec3> points);
template <typename T>
Var<T> query_points(const PlaneVars<T>& planes, const TpvGridSpec& spec, std::span<const Vec3> points);

inline constexpr std::int64_t kDefaultVoxelBudgetBytes = 256LL << 20;

// Broadcast sum V[h,w,d] = hw[h,w] + dh[d,h] + wd[w,d] as [H x W x D x C].
// Throws ResourceError when the dense volume exceeds `budget_bytes`.
Tensor voxel_features(const TpvPlanes& planes, std::int64_t budget_bytes = kDefaultVoxelBudgetBytes);
// Same broadcast on tape values, flattened to [(H*W*D) x C] in h, w, d order.
template <typename T>
Var<T> voxel_features(const PlaneVars<T>& planes, const TpvGridSpec& spec,
                      std::int64_t budget_bytes = kDefaultVoxelBudgetBytes);

// Resamples every plane by `factor`: extents become round(n * factor), the cell
// size becomes s / factor. For integer factors the new interpolant equals the
// old one everywhere; even factors move the origin by half a new cell so the
// old cell centers stay on the new sample lattice.
TpvPlanes resize_planes(const TpvPlanes& planes, double factor);
// Target extents must share one scale factor with the current extents.
TpvPlanes resize_planes(const TpvPlanes& planes, std::array<std::int64_t, 3> extents);

// Single-plane variant: side and front planes zeroed and ignored by queries.
TpvPlanes bev_mode(const TpvPlanes& planes);

struct MemoryAccount {
  std::int64_t plane_values = 0;  // C * (HW + DH + WD)
  std::int64_t voxel_values = 0;  // C * H * W * D
  double ratio() const { return static_cast<double>(voxel_values) / static_cast<double>(plane_values); }
};
MemoryAccount memory_account(const TpvGridSpec& spec, std::int64_t channels);

// Snapshot layout: <prefix>.hw.tpvt, <prefix>.dh.tpvt, <prefix>.wd.tpvt
// (tensor files) plus <prefix>.grid, a text sidecar
// "TPVGRID1 H W D s origin_x origin_y origin_z bev".
void save_planes(const std::filesystem::path& prefix, const TpvPlanes& planes);
TpvPlanes load_planes(const std::filesystem::path& prefix);

}  // namespace tpv::triplane
