#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "tpv/data/scene.hpp"
#include "tpv/encoder/config.hpp"
#include "tpv/geometry/camera.hpp"
#include "tpv/head/head.hpp"

namespace tpv::pipeline {

enum class Task { Points, Occupancy };
std::string task_name(Task t);
Task parse_task(const std::string& name);

enum class OptimizerKind { Sgd, Adam };
std::string optimizer_name(OptimizerKind k);
OptimizerKind parse_optimizer(const std::string& name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  int steps = 300;
  double rate = 0.005;
  double momentum = 0.9;  // SGD only
  double beta1 = 0.9;     // Adam only
  double beta2 = 0.999;   // Adam only
  double weight_decay = 0.0;
  int warmup_steps = 20;
  bool cosine = true;
  // Global gradient-norm clip; 0 disables clipping.
  double grad_clip = 5.0;
};

// Everything a command needs, as a flat key=value document. Every key has a
// default; see to_text() for the full list.
struct RunConfig {
  std::uint64_t seed = 0;
  Task task = Task::Occupancy;

  geometry::TpvGridSpec grid = data::SceneOptions::default_grid();
  data::Difficulty difficulty = data::Difficulty::Standard;
  std::int64_t lidar_rays = 20000;
  geometry::SurroundRigOptions cameras;

  encoder::EncoderConfig encoder;  // grid and seed are taken from the fields above
  std::int64_t head_hidden = 32;
  head::Activation head_activation = head::Activation::Gelu;
  head::LossRouting routing;
  OptimizerConfig optim;

  // Throws ConfigError naming the offending key.
  void validate() const;

  encoder::EncoderConfig encoder_config() const;
  head::HeadConfig head_config() const;

  std::string to_text() const;
  // Applies "key=value" lines on top of the current values. Blank lines and
  // lines starting with '#' are skipped; unknown keys are a ConfigError.
  void apply_text(const std::string& text);
  void set(const std::string& key, const std::string& value);

  // Defaults, then `text`, then validate().
  static RunConfig from_text(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
};

}  // namespace tpv::pipeline
