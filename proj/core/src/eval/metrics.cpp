#include "tpv/eval/metrics.hpp"

#include <string>

#include "tpv/errors.hpp"

namespace tpv::eval {

ConfusionMatrix::ConfusionMatrix(int classes) : classes_(classes) {
  if (classes < 1) throw ConfigError("confusion matrix needs at least one class");
  counts_.assign(static_cast<std::size_t>(classes) * classes, 0);
}

void ConfusionMatrix::add(int pred, int truth) {
  if (pred < 0 || pred >= classes_ || truth < 0 || truth >= classes_) {
    throw ContractError("label pair (" + std::to_string(pred) + ", " + std::to_string(truth) + ") outside [0, " +
                        std::to_string(classes_) + ")");
  }
  ++counts_[pred * classes_ + truth];
  ++total_;
}

void ConfusionMatrix::add(std::span<const int> pred, std::span<const int> truth, const std::set<int>& ignore) {
  if (pred.size() != truth.size()) {
    throw DimensionError(std::to_string(pred.size()) + " predictions for " + std::to_string(truth.size()) + " labels");
  }
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (ignore.count(truth[i])) continue;
    add(pred[i], truth[i]);
  }
}

std::int64_t ConfusionMatrix::false_positives(int k) const {
  std::int64_t n = 0;
  for (int t = 0; t < classes_; ++t) n += t == k ? 0 : at(k, t);
  return n;
}

std::int64_t ConfusionMatrix::false_negatives(int k) const {
  std::int64_t n = 0;
  for (int p = 0; p < classes_; ++p) n += p == k ? 0 : at(p, k);
  return n;
}

std::optional<double> ConfusionMatrix::iou(int k) const {
  const auto tp = true_positives(k);
  const auto uni = tp + false_positives(k) + false_negatives(k);
  if (uni == 0) return std::nullopt;
  return static_cast<double>(tp) / static_cast<double>(uni);
}

IouReport summarize(const ConfusionMatrix& cm, const std::set<int>& exclude_from_mean) {
  IouReport r;
  double sum = 0.0;
  for (int k = 0; k < cm.classes(); ++k) {
    r.per_class.push_back(cm.iou(k));
    if (!r.per_class.back() || exclude_from_mean.count(k)) continue;
    sum += *r.per_class.back();
    ++r.counted;
  }
  if (r.counted == 0) throw ContractError("mIoU undefined: no class present in prediction or truth");
  r.mean = sum / r.counted;
  return r;
}

IouReport miou(std::span<const int> pred, std::span<const int> truth, int classes, const std::set<int>& ignore,
               const std::set<int>& exclude_from_mean) {
  ConfusionMatrix cm(classes);
  cm.add(pred, truth, ignore);
  return summarize(cm, exclude_from_mean);
}

namespace {

void check_same_grid(const data::VoxelLabelGrid& a, const data::VoxelLabelGrid& b) {
  a.validate();
  b.validate();
  if (a.spec.H != b.spec.H || a.spec.W != b.spec.W || a.spec.D != b.spec.D) {
    throw DimensionError("voxel grids differ in extents");
  }
}

}  // namespace

double sc_iou(const data::VoxelLabelGrid& pred, const data::VoxelLabelGrid& truth) {
  check_same_grid(pred, truth);
  std::int64_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.labels.size(); ++i) {
    const bool p = pred.labels[i] != data::kEmptyClass, t = truth.labels[i] != data::kEmptyClass;
    inter += p && t;
    uni += p || t;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

IouReport ssc_miou(const data::VoxelLabelGrid& pred, const data::VoxelLabelGrid& truth) {
  check_same_grid(pred, truth);
  ConfusionMatrix cm(data::kNumClasses + 1);
  for (std::size_t i = 0; i < pred.labels.size(); ++i) cm.add(pred.labels[i], truth.labels[i]);
  return summarize(cm, {data::kEmptyClass});
}

}  // namespace tpv::eval
