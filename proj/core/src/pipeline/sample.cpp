#include "tpv/pipeline/sample.hpp"

#include <fstream>

#include "tpv/data/io.hpp"
#include "tpv/errors.hpp"
#include "tpv/geometry/reference_points.hpp"
#include "tpv/numeric/snapshot.hpp"

namespace tpv::pipeline {

namespace fs = std::filesystem;

Sample generate_sample(const RunConfig& config) {
  config.validate();
  data::SceneOptions options;
  options.grid = config.grid;
  auto generated = data::generate_scene(config.seed, config.difficulty, options);
  Sample s;
  s.scene = std::move(generated.scene);
  s.truth = std::move(generated.truth);
  auto rig_options = config.cameras;
  s.rig = geometry::make_surround_rig(rig_options);
  s.images = data::render_cameras(s.scene, s.rig);
  data::LidarOptions lidar;
  lidar.rays = config.lidar_rays;
  lidar.origin = rig_options.position;
  s.points = data::sample_lidar(s.scene, lidar, geometry::mix_seed(config.seed, {0x6c696461ULL}));
  return s;
}

Sample with_heldout_points(const Sample& sample, const RunConfig& config) {
  Sample out = sample;
  data::LidarOptions lidar;
  lidar.rays = config.lidar_rays;
  lidar.origin = config.cameras.position;
  out.points = data::sample_lidar(sample.scene, lidar, geometry::mix_seed(config.seed, {0x686f6c64ULL}));
  return out;
}

void save_sample(const fs::path& dir, const Sample& sample, const RunConfig& config) {
  if (fs::exists(dir) && !(fs::is_directory(dir) && fs::is_empty(dir))) {
    throw DataError("refusing to write into non-empty " + dir.string());
  }
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "config.txt");
    if (!out) throw DataError("cannot write " + (dir / "config.txt").string());
    out << config.to_text();
  }
  data::save_scene(dir / "scene.txt", sample.scene);
  geometry::save_rig(dir / "rig.txt", sample.rig);
  for (std::size_t k = 0; k < sample.images.size(); ++k) {
    numeric::save_tensor(dir / ("cam" + std::to_string(k) + ".tpvt"), sample.images[k]);
    data::save_ppm(dir / ("cam" + std::to_string(k) + ".ppm"), sample.images[k]);
  }
  data::save_points(dir / "points.txt", sample.points);
  data::save_voxels(dir / "truth.occ", sample.truth);
}

Sample load_sample(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("data directory " + dir.string() + " does not exist");
  Sample s;
  s.scene = data::load_scene(dir / "scene.txt");
  s.rig = geometry::load_rig(dir / "rig.txt");
  for (std::size_t k = 0; k < s.rig.size(); ++k) {
    auto img = numeric::load_tensor(dir / ("cam" + std::to_string(k) + ".tpvt"));
    const auto& cam = s.rig.cameras[k];
    if (img.rank() != 3 || img.dim(0) != cam.height || img.dim(1) != cam.width || img.dim(2) != 3) {
      throw DataError("image " + std::to_string(k) + " does not match its camera");
    }
    s.images.push_back(std::move(img));
  }
  s.points = data::load_points(dir / "points.txt");
  s.truth = data::load_voxels(dir / "truth.occ", s.scene.grid);
  return s;
}

}  // namespace tpv::pipeline
