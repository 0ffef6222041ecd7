#include "tpv/data/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <string>

#include "tpv/errors.hpp"
#include "tpv/numeric/snapshot.hpp"

namespace tpv::data {

namespace {

std::ifstream open_in(const std::filesystem::path& path, bool binary) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path, bool binary) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  return out;
}

void expect_word(std::istream& in, const std::string& word, const char* what) {
  std::string got;
  if (!(in >> got) || got != word) {
    throw DataError(std::string(what) + ": expected '" + word + "', found '" + got + "'");
  }
}

}  // namespace

void write_points(std::ostream& out, const LabeledPointSet& points) {
  points.validate();
  out << "TPVPTS1\ncount " << points.size() << "\nfields x y z class\n"
      << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points.positions[i];
    out << p.x() << ' ' << p.y() << ' ' << p.z() << ' ' << points.labels[i] << '\n';
  }
}

LabeledPointSet read_points(std::istream& in) {
  expect_word(in, "TPVPTS1", "point file");
  expect_word(in, "count", "point file");
  std::size_t n = 0;
  if (!(in >> n)) throw DataError("point file: bad count");
  for (const char* f : {"fields", "x", "y", "z", "class"}) expect_word(in, f, "point file");
  LabeledPointSet pts;
  pts.positions.resize(n);
  pts.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& p = pts.positions[i];
    if (!(in >> p.x() >> p.y() >> p.z() >> pts.labels[i])) {
      throw DataError("point file: truncated at point " + std::to_string(i) + " of " + std::to_string(n));
    }
    if (pts.labels[i] < 0 || pts.labels[i] > kEmptyClass) {
      throw DataError("point file: label " + std::to_string(pts.labels[i]) + " out of range");
    }
  }
  pts.validate();
  return pts;
}

void save_points(const std::filesystem::path& path, const LabeledPointSet& points) {
  auto out = open_out(path, false);
  write_points(out, points);
}

LabeledPointSet load_points(const std::filesystem::path& path) {
  auto in = open_in(path, false);
  return read_points(in);
}

void write_voxels(std::ostream& out, const VoxelLabelGrid& grid) {
  grid.validate();
  out.write("TPVOCC1", 7);
  numeric::io::put_u32(out, static_cast<std::uint32_t>(grid.spec.H));
  numeric::io::put_u32(out, static_cast<std::uint32_t>(grid.spec.W));
  numeric::io::put_u32(out, static_cast<std::uint32_t>(grid.spec.D));
  out.write(reinterpret_cast<const char*>(grid.labels.data()), static_cast<std::streamsize>(grid.labels.size()));
}

VoxelLabelGrid read_voxels(std::istream& in, const TpvGridSpec& spec) {
  char magic[7] = {};
  in.read(magic, 7);
  if (!in || std::string(magic, 7) != "TPVOCC1") throw DataError("voxel file: bad magic");
  const std::int64_t H = numeric::io::get_u32(in), W = numeric::io::get_u32(in), D = numeric::io::get_u32(in);
  if (!in) throw DataError("voxel file: truncated header");
  if (H != spec.H || W != spec.W || D != spec.D) {
    throw DataError("voxel file holds a " + std::to_string(H) + "x" + std::to_string(W) + "x" + std::to_string(D) +
                    " grid, expected " + std::to_string(spec.H) + "x" + std::to_string(spec.W) + "x" +
                    std::to_string(spec.D));
  }
  VoxelLabelGrid grid = VoxelLabelGrid::filled(spec, kEmptyClass);
  in.read(reinterpret_cast<char*>(grid.labels.data()), static_cast<std::streamsize>(grid.labels.size()));
  if (in.gcount() != static_cast<std::streamsize>(grid.labels.size())) throw DataError("voxel file: truncated body");
  for (auto v : grid.labels) {
    if (v > kEmptyClass) throw DataError("voxel file: class id " + std::to_string(v) + " out of range");
  }
  return grid;
}

void save_voxels(const std::filesystem::path& path, const VoxelLabelGrid& grid) {
  auto out = open_out(path, true);
  write_voxels(out, grid);
}

VoxelLabelGrid load_voxels(const std::filesystem::path& path, const TpvGridSpec& spec) {
  auto in = open_in(path, true);
  return read_voxels(in, spec);
}

void write_scene(std::ostream& out, const SyntheticScene& scene) {
  const auto& g = scene.grid;
  out << std::setprecision(std::numeric_limits<double>::max_digits10) << "TPVSCENE1\nseed " << scene.seed
      << "\ndifficulty " << difficulty_name(scene.difficulty) << "\ngrid " << g.H << ' ' << g.W << ' ' << g.D << ' '
      << g.cell_size << ' ' << g.origin.x() << ' ' << g.origin.y() << ' ' << g.origin.z() << "\nground "
      << (scene.has_ground ? 1 : 0) << "\nboxes " << scene.boxes.size() << '\n';
  for (const auto& b : scene.boxes) {
    out << b.cls << ' ' << b.lower.x() << ' ' << b.lower.y() << ' ' << b.lower.z() << ' ' << b.upper.x() << ' '
        << b.upper.y() << ' ' << b.upper.z() << '\n';
  }
}

SyntheticScene read_scene(std::istream& in) {
  SyntheticScene s;
  std::string difficulty;
  int ground = 0;
  std::size_t n = 0;
  expect_word(in, "TPVSCENE1", "scene file");
  expect_word(in, "seed", "scene file");
  in >> s.seed;
  expect_word(in, "difficulty", "scene file");
  in >> difficulty;
  expect_word(in, "grid", "scene file");
  in >> s.grid.H >> s.grid.W >> s.grid.D >> s.grid.cell_size >> s.grid.origin.x() >> s.grid.origin.y() >>
      s.grid.origin.z();
  expect_word(in, "ground", "scene file");
  in >> ground;
  expect_word(in, "boxes", "scene file");
  in >> n;
  if (!in) throw DataError("scene file: malformed header");
  try {
    s.difficulty = parse_difficulty(difficulty);
  } catch (const ConfigError& e) {
    throw DataError(std::string("scene file: ") + e.what());
  }
  s.has_ground = ground != 0;
  s.boxes.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& b = s.boxes[i];
    in >> b.cls >> b.lower.x() >> b.lower.y() >> b.lower.z() >> b.upper.x() >> b.upper.y() >> b.upper.z();
    if (!in) throw DataError("scene file: truncated at box " + std::to_string(i));
  }
  try {
    s.validate();
  } catch (const ConfigError& e) {
    throw DataError(std::string("scene file: ") + e.what());
  }
  return s;
}

void save_scene(const std::filesystem::path& path, const SyntheticScene& scene) {
  auto out = open_out(path, false);
  write_scene(out, scene);
}

SyntheticScene load_scene(const std::filesystem::path& path) {
  auto in = open_in(path, false);
  return read_scene(in);
}

void save_ppm(const std::filesystem::path& path, const numeric::Tensor& image) {
  if (image.rank() != 3 || image.dim(2) != 3) throw DimensionError("ppm export expects an [H x W x 3] image");
  auto out = open_out(path, true);
  out << "P6\n" << image.dim(1) << ' ' << image.dim(0) << "\n255\n";
  for (float v : image.data()) {
    const auto byte = static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
    out.put(static_cast<char>(byte));
  }
}

numeric::Tensor colorize_labels(const std::vector<int>& labels, std::int64_t rows, std::int64_t cols) {
  if (static_cast<std::int64_t>(labels.size()) != rows * cols) throw DimensionError("label slice size mismatch");
  numeric::Tensor img({rows, cols, 3});
  for (std::int64_t i = 0; i < rows * cols; ++i) {
    const auto c = labels[i] == kEmptyClass ? std::array<float, 3>{1.0f, 1.0f, 1.0f} : class_color(labels[i]);
    for (int k = 0; k < 3; ++k) img[i * 3 + k] = c[k];
  }
  return img;
}

}  // namespace tpv::data
