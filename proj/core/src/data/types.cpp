#include "tpv/data/types.hpp"

#include <cmath>
#include <string>

#include "tpv/errors.hpp"

namespace tpv::data {

void LabeledPointSet::validate() const {
  if (positions.size() != labels.size()) {
    throw DataError("point set has " + std::to_string(positions.size()) + " positions but " +
                    std::to_string(labels.size()) + " labels");
  }
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (!positions[i].allFinite()) throw DataError("point " + std::to_string(i) + " has a non-finite coordinate");
  }
}

VoxelLabelGrid VoxelLabelGrid::filled(const TpvGridSpec& spec, int label) {
  spec.validate();
  VoxelLabelGrid g;
  g.spec = spec;
  g.labels.assign(static_cast<std::size_t>(spec.H * spec.W * spec.D), static_cast<std::uint8_t>(label));
  return g;
}

void VoxelLabelGrid::validate() const {
  spec.validate();
  if (static_cast<std::int64_t>(labels.size()) != spec.H * spec.W * spec.D) {
    throw DataError("voxel grid holds " + std::to_string(labels.size()) + " labels for a " + std::to_string(spec.H) +
                    "x" + std::to_string(spec.W) + "x" + std::to_string(spec.D) + " grid");
  }
}

bool locate_voxel(const TpvGridSpec& spec, const Vec3& p, std::int64_t& h, std::int64_t& w, std::int64_t& d) {
  auto cell = [&](double x, double o, std::int64_t n, std::int64_t& out) {
    const double g = std::floor((x - o) / spec.cell_size + static_cast<double>(n) / 2.0);
    if (!(g >= 0.0 && g < static_cast<double>(n))) return false;
    out = static_cast<std::int64_t>(g);
    return true;
  };
  return cell(p.x(), spec.origin.x(), spec.H, h) && cell(p.y(), spec.origin.y(), spec.W, w) &&
         cell(p.z(), spec.origin.z(), spec.D, d);
}

}  // namespace tpv::data
