#include "tpv/pipeline/trainer.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "tpv/errors.hpp"
#include "tpv/eval/metrics.hpp"
#include "tpv/geometry/reference_points.hpp"
#include "tpv/numeric/ops.hpp"

namespace tpv::pipeline {

using numeric::ParameterStore;
using numeric::Tape;
using numeric::Tensor;
using numeric::Var;

Model init_model(const RunConfig& config) {
  config.validate();
  Model m;
  m.config = config;
  encoder::init_encoder(m.params, config.encoder_config());
  std::mt19937_64 rng(geometry::mix_seed(config.seed, {0x68656164ULL}));
  head::init_head(m.params, kHeadPrefix, config.head_config(), rng);
  return m;
}

void save_model(const std::filesystem::path& path, const Model& model) {
  encoder::save_checkpoint(path, model.params, model.config.to_text());
}

Model load_model(const std::filesystem::path& path) {
  auto ck = encoder::load_checkpoint(path);
  Model m;
  m.config = RunConfig::from_text(ck.config);
  const auto fresh = init_model(m.config);
  if (fresh.params.size() != ck.params.size()) {
    throw ConfigError("checkpoint holds " + std::to_string(ck.params.size()) + " parameters, its config implies " +
                      std::to_string(fresh.params.size()));
  }
  for (const auto& p : fresh.params.items()) {
    if (!ck.params.contains(p.name)) throw ConfigError("checkpoint lacks parameter " + p.name);
    if (ck.params.at(p.name).tensor.shape() != p.tensor.shape()) {
      throw ConfigError("checkpoint parameter " + p.name + " has shape " +
                        numeric::shape_str(ck.params.at(p.name).tensor.shape()) + ", expected " +
                        numeric::shape_str(p.tensor.shape()));
    }
  }
  m.params = std::move(ck.params);
  return m;
}

TrainingLabels training_labels(const RunConfig& config, const Sample& sample) {
  TrainingLabels t;
  t.points = sample.points.labels;
  if (config.task == Task::Occupancy) {
    t.voxels.assign(sample.truth.labels.begin(), sample.truth.labels.end());
  } else {
    const auto pseudo = head::pseudo_voxel_labels(sample.points, sample.scene.grid);
    t.voxels.reserve(pseudo.labels.size());
    for (auto v : pseudo.labels) t.voxels.push_back(v == data::kEmptyClass ? head::kIgnoreLabel : v);
  }
  return t;
}

double learning_rate(const OptimizerConfig& o, int step) {
  if (step < o.warmup_steps) return o.rate * static_cast<double>(step + 1) / static_cast<double>(o.warmup_steps);
  if (!o.cosine) return o.rate;
  const double span = std::max(1, o.steps - o.warmup_steps);
  const double t = std::min(1.0, static_cast<double>(step - o.warmup_steps) / span);
  return o.rate * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

namespace {

constexpr double kAdamEps = 1e-8;

bool uses(const head::LossRouting& r, head::PredictionSource s) { return r.ce_input == s || r.lovasz_input == s; }

void check_grid(const RunConfig& config, const Sample& sample) {
  const auto& a = config.grid;
  const auto& b = sample.scene.grid;
  if (a.H != b.H || a.W != b.W || a.D != b.D || a.cell_size != b.cell_size) {
    throw DataError("data grid " + std::to_string(b.H) + "x" + std::to_string(b.W) + "x" + std::to_string(b.D) +
                    " does not match the config grid " + std::to_string(a.H) + "x" + std::to_string(a.W) + "x" +
                    std::to_string(a.D));
  }
}

}  // namespace

std::vector<StepRecord> train(Model& model, const Sample& sample, const std::function<void(const StepRecord&)>& on_step) {
  const auto& config = model.config;
  config.validate();
  check_grid(config, sample);
  const auto enc = config.encoder_config();
  const auto head_cfg = config.head_config();
  const auto plan = encoder::EncoderPlan::build(enc, sample.rig);
  const auto labels = training_labels(config, sample);
  const bool need_points = uses(config.routing, head::PredictionSource::Point);
  const bool need_voxels = uses(config.routing, head::PredictionSource::Voxel);
  const auto& o = config.optim;

  // Momentum (SGD) or first/second moments (Adam); SGD leaves `second` unused.
  std::vector<std::vector<float>> first, second;
  for (const auto& p : model.params.items()) {
    first.emplace_back(static_cast<std::size_t>(p.tensor.numel()), 0.0f);
    second.emplace_back(static_cast<std::size_t>(p.tensor.numel()), 0.0f);
  }

  std::vector<StepRecord> log;
  for (int step = 0; step < o.steps; ++step) {
    Tape<float> tape;
    const auto planes = encoder::encode(tape, model.params, enc, plan, sample.images);
    head::LossInputs<float> in;
    if (need_points) {
      const auto pf = triplane::query_points(planes, enc.grid, std::span<const geometry::Vec3>(sample.points.positions));
      in.point_logits = head::mlp_head(tape, model.params, kHeadPrefix, head_cfg, pf);
      in.point_labels = &labels.points;
    }
    if (need_voxels) {
      const auto vf = triplane::voxel_features(planes, enc.grid);
      in.voxel_logits = head::mlp_head(tape, model.params, kHeadPrefix, head_cfg, vf);
      in.voxel_labels = &labels.voxels;
    }
    const auto terms = head::composite_loss(in, config.routing);
    auto grads = tape.backward(terms.total, model.params);

    StepRecord rec;
    rec.step = step;
    rec.loss = terms.total.value().item();
    rec.ce = terms.ce.value().item();
    rec.lovasz = terms.lovasz.value().item();
    rec.rate = learning_rate(o, step);
    double sq = 0.0;
    for (const auto& [name, g] : grads) {
      for (float v : g.data()) sq += static_cast<double>(v) * v;
    }
    rec.grad_norm = std::sqrt(sq);
    if (!std::isfinite(rec.loss) || !std::isfinite(rec.grad_norm)) {
      std::ostringstream msg;
      msg << "non-finite training state at step " << step << ": loss=" << rec.loss << " ce=" << rec.ce
          << " lovasz=" << rec.lovasz << " grad_norm=" << rec.grad_norm << " rate=" << rec.rate;
      throw NumericError(msg.str());
    }
    const double clip = o.grad_clip > 0.0 && rec.grad_norm > o.grad_clip ? o.grad_clip / rec.grad_norm : 1.0;
    auto& items = model.params.items();
    const double bc1 = 1.0 - std::pow(o.beta1, step + 1), bc2 = 1.0 - std::pow(o.beta2, step + 1);
    for (std::size_t i = 0; i < items.size(); ++i) {
      auto& theta = items[i].tensor.storage();
      const auto& g = grads.at(items[i].name).storage();
      auto& m1 = first[i];
      auto& m2 = second[i];
      for (std::size_t k = 0; k < theta.size(); ++k) {
        const double gk = clip * g[k];
        double dir = 0.0;
        if (o.kind == OptimizerKind::Sgd) {
          m1[k] = static_cast<float>(o.momentum * m1[k] + gk);
          dir = m1[k];
        } else {
          m1[k] = static_cast<float>(o.beta1 * m1[k] + (1.0 - o.beta1) * gk);
          m2[k] = static_cast<float>(o.beta2 * m2[k] + (1.0 - o.beta2) * gk * gk);
          dir = (m1[k] / bc1) / (std::sqrt(m2[k] / bc2) + kAdamEps);
        }
        theta[k] -= static_cast<float>(rec.rate * (dir + o.weight_decay * theta[k]));
      }
    }
    log.push_back(rec);
    if (on_step) on_step(rec);
  }
  return log;
}

namespace {

int argmax(const float* row, int count) {
  int best = 0;
  for (int k = 1; k < count; ++k) {
    if (row[k] > row[best]) best = k;
  }
  return best;
}

Tensor head_logits(const Model& model, Tensor features) {
  Tape<float> tape;
  features.set_requires_grad(false);
  auto out = head::mlp_head(tape, model.params, kHeadPrefix, model.config.head_config(), tape.constant(std::move(features)));
  return out.value();
}

}  // namespace

Prediction decode(const Model& model, const triplane::TpvPlanes& planes, const data::LabeledPointSet& points) {
  const auto K = data::kNumClasses + 1;
  const auto& g = planes.spec;
  const auto C = planes.channels();
  Prediction p;
  p.planes = planes;

  const auto point_logits = head_logits(model, triplane::query_points(planes, points.positions));
  for (std::size_t i = 0; i < points.size(); ++i) p.points.push_back(argmax(&point_logits[i * K], data::kNumClasses));

  auto vf = triplane::voxel_features(planes);
  const auto V = g.H * g.W * g.D;
  const auto voxel_logits = head_logits(model, std::move(vf).reshaped({V, C}));
  p.voxels = data::VoxelLabelGrid::filled(g, data::kEmptyClass);
  for (std::int64_t v = 0; v < V; ++v) p.voxels.labels[v] = static_cast<std::uint8_t>(argmax(&voxel_logits[v * K], K));

  for (std::size_t i = 0; i < points.size(); ++i) {
    std::int64_t h = 0, w = 0, d = 0;
    if (data::locate_voxel(g, points.positions[i], h, w, d)) {
      p.points_from_voxels.push_back(argmax(&voxel_logits[p.voxels.index(h, w, d) * K], data::kNumClasses));
    } else {
      p.points_from_voxels.push_back(p.points[i]);
    }
  }
  return p;
}

Prediction predict(const Model& model, const Sample& sample) {
  check_grid(model.config, sample);
  const auto enc = model.config.encoder_config();
  const auto plan = encoder::EncoderPlan::build(enc, sample.rig);
  auto planes = encoder::encode_planes(model.params, enc, plan, sample.images);
  planes.spec = sample.scene.grid;
  return decode(model, planes, sample.points);
}

Scores score(const Prediction& p, const Sample& sample) {
  Scores s;
  const int K = data::kNumClasses + 1;
  const std::set<int> empty = {data::kEmptyClass};
  s.point_miou = eval::miou(p.points, sample.points.labels, K, {}, empty).mean;
  s.point_miou_from_voxels = eval::miou(p.points_from_voxels, sample.points.labels, K, {}, empty).mean;
  if (p.voxels.spec.H == sample.truth.spec.H && p.voxels.spec.W == sample.truth.spec.W &&
      p.voxels.spec.D == sample.truth.spec.D) {
    s.sc_iou = eval::sc_iou(p.voxels, sample.truth);
    s.ssc_miou = eval::ssc_miou(p.voxels, sample.truth).mean;
  } else {
    s.sc_iou = s.ssc_miou = std::nan("");
  }
  return s;
}

}  // namespace tpv::pipeline
