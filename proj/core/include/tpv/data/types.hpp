#pragma once

#include <cstdint>
#include <vector>

#include "tpv/geometry/grid.hpp"

namespace tpv::data {

using geometry::TpvGridSpec;
using geometry::Vec3;

// Semantic classes of the synthetic world. kEmptyClass marks unoccupied voxels.
inline constexpr int kNumClasses = 6;
inline constexpr int kEmptyClass = kNumClasses;

struct LabeledPointSet {
  std::vector<Vec3> positions;
  std::vector<int> labels;

  std::size_t size() const { return positions.size(); }
  // Throws DataError on length mismatch or non-finite coordinates.
  void validate() const;
};

// Class ids laid out h-major, then w, then d.
struct VoxelLabelGrid {
  TpvGridSpec spec;
  std::vector<std::uint8_t> labels;

  static VoxelLabelGrid filled(const TpvGridSpec& spec, int label);

  std::int64_t index(std::int64_t h, std::int64_t w, std::int64_t d) const { return (h * spec.W + w) * spec.D + d; }
  int at(std::int64_t h, std::int64_t w, std::int64_t d) const { return labels[index(h, w, d)]; }
  void set(std::int64_t h, std::int64_t w, std::int64_t d, int label) {
    labels[index(h, w, d)] = static_cast<std::uint8_t>(label);
  }
  std::int64_t size() const { return static_cast<std::int64_t>(labels.size()); }
  // Throws DataError when the label count disagrees with the grid.
  void validate() const;
};

// Cell index of a world point, or false when it lies outside the volume.
bool locate_voxel(const TpvGridSpec& spec, const Vec3& p, std::int64_t& h, std::int64_t& w, std::int64_t& d);

}  // namespace tpv::data
