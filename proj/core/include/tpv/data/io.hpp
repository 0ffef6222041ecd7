#pragma once

#include <filesystem>
#include <iosfwd>

#include "tpv/data/scene.hpp"
#include "tpv/data/types.hpp"
#include "tpv/numeric/tensor.hpp"

// File formats. Every reader throws DataError on malformed input.
namespace tpv::data {

// Text: "TPVPTS1" / "count N" / "fields x y z class" / N lines "x y z class".
void write_points(std::ostream& out, const LabeledPointSet& points);
LabeledPointSet read_points(std::istream& in);
void save_points(const std::filesystem::path& path, const LabeledPointSet& points);
LabeledPointSet load_points(const std::filesystem::path& path);

// Binary: "TPVOCC1" | u32 H | u32 W | u32 D | H*W*D class bytes (h, then w, then d).
// The cell size is not stored; readers pair the grid with a scene or config.
void write_voxels(std::ostream& out, const VoxelLabelGrid& grid);
VoxelLabelGrid read_voxels(std::istream& in, const TpvGridSpec& spec);
void save_voxels(const std::filesystem::path& path, const VoxelLabelGrid& grid);
VoxelLabelGrid load_voxels(const std::filesystem::path& path, const TpvGridSpec& spec);

// Text: "TPVSCENE1", then "seed", "difficulty", "grid H W D s ox oy oz",
// "ground 0|1", "boxes N" and N lines "class lx ly lz ux uy uz".
void write_scene(std::ostream& out, const SyntheticScene& scene);
SyntheticScene read_scene(std::istream& in);
void save_scene(const std::filesystem::path& path, const SyntheticScene& scene);
SyntheticScene load_scene(const std::filesystem::path& path);

// 8-bit binary PPM of an [H x W x 3] image with values in [0, 1].
void save_ppm(const std::filesystem::path& path, const numeric::Tensor& image);
// [H x W] class-id slice rendered with class colors (empty in white).
numeric::Tensor colorize_labels(const std::vector<int>& labels, std::int64_t rows, std::int64_t cols);

}  // namespace tpv::data
