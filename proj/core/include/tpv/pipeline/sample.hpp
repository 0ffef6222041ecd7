#pragma once

#include <filesystem>
#include <vector>

#include "tpv/data/scene.hpp"
#include "tpv/data/types.hpp"
#include "tpv/geometry/camera.hpp"
#include "tpv/numeric/tensor.hpp"
#include "tpv/pipeline/config.hpp"

namespace tpv::pipeline {

// One synthetic training/evaluation scene with its sensors and labels.
struct Sample {
  data::SyntheticScene scene;
  geometry::CameraRig rig;
  std::vector<numeric::Tensor> images;  // per camera, [height x width x 3]
  data::LabeledPointSet points;
  data::VoxelLabelGrid truth;
};

// Deterministic in config.seed.
Sample generate_sample(const RunConfig& config);

// Copy of `sample` whose points come from a second LiDAR sweep of the same
// scene (independent ray seed), for scoring on points the model never saw.
Sample with_heldout_points(const Sample& sample, const RunConfig& config);

// Directory layout:
//   config.txt       run config used to generate the data
//   scene.txt        TPVSCENE1 boxes
//   rig.txt          TPVRIG1 cameras
//   cam<k>.tpvt      float image tensors (cam<k>.ppm alongside for viewing)
//   points.txt       TPVPTS1 labeled LiDAR points
//   truth.occ        TPVOCC1 dense voxel labels
// save_sample refuses a directory that exists and is not empty (DataError).
void save_sample(const std::filesystem::path& dir, const Sample& sample, const RunConfig& config);
Sample load_sample(const std::filesystem::path& dir);

}  // namespace tpv::pipeline
