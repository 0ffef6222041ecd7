#pragma once

#include <functional>
#include <vector>

#include "tpv/encoder/checkpoint.hpp"
#include "tpv/encoder/encoder.hpp"
#include "tpv/head/head.hpp"
#include "tpv/pipeline/config.hpp"
#include "tpv/pipeline/sample.hpp"

namespace tpv::pipeline {

inline constexpr const char* kHeadPrefix = "head";

struct Model {
  RunConfig config;
  numeric::ParameterStore<float> params;
};

Model init_model(const RunConfig& config);
void save_model(const std::filesystem::path& path, const Model& model);
// Throws ConfigError when the archive's parameters disagree with its config.
Model load_model(const std::filesystem::path& path);

// Labels the routed losses see. Point labels are the LiDAR classes. Voxel
// labels are the dense truth for the occupancy task; for the points task
// they are pseudo labels from the points, with point-free voxels ignored.
struct TrainingLabels {
  std::vector<int> points;
  std::vector<int> voxels;
};
TrainingLabels training_labels(const RunConfig& config, const Sample& sample);

struct StepRecord {
  int step = 0;
  double loss = 0.0;
  double ce = 0.0;
  double lovasz = 0.0;
  double rate = 0.0;
  double grad_norm = 0.0;
};

// Learning rate at `step`: linear warmup to optim.rate, then cosine decay to 0
// over the remaining steps when optim.cosine is set.
double learning_rate(const OptimizerConfig& optim, int step);

// SGD with momentum or Adam, both with decoupled weight decay. Throws NumericError, with the
// step and loss terms in the message, when the loss or gradient stops being
// finite.
std::vector<StepRecord> train(Model& model, const Sample& sample,
                              const std::function<void(const StepRecord&)>& on_step = {});

struct Prediction {
  triplane::TpvPlanes planes;
  std::vector<int> points;              // point-feature predictions, semantic classes only
  std::vector<int> points_from_voxels;  // prediction of each point's containing voxel, semantic classes only
  data::VoxelLabelGrid voxels;          // voxel predictions including empty
};

Prediction predict(const Model& model, const Sample& sample);
// Decodes already encoded (possibly resized) planes.
Prediction decode(const Model& model, const triplane::TpvPlanes& planes, const data::LabeledPointSet& points);

struct Scores {
  double point_miou = 0.0;
  double point_miou_from_voxels = 0.0;
  double sc_iou = 0.0;
  double ssc_miou = 0.0;
};

Scores score(const Prediction& prediction, const Sample& sample);

}  // namespace tpv::pipeline
