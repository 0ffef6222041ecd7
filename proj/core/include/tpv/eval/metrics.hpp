#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "tpv/data/types.hpp"

namespace tpv::eval {

// K x K counts indexed (prediction, truth).
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int classes);

  // Entries whose truth is in `ignore` are skipped. Throws DimensionError on
  // a length mismatch and ContractError on a label outside [0, K).
  void add(std::span<const int> pred, std::span<const int> truth, const std::set<int>& ignore = {});
  void add(int pred, int truth);

  int classes() const { return classes_; }
  std::int64_t at(int pred, int truth) const { return counts_[pred * classes_ + truth]; }
  std::int64_t total() const { return total_; }
  std::int64_t true_positives(int k) const { return at(k, k); }
  std::int64_t false_positives(int k) const;
  std::int64_t false_negatives(int k) const;
  // TP / (TP + FP + FN); nullopt when the class is absent from both sides.
  std::optional<double> iou(int k) const;

 private:
  int classes_;
  std::vector<std::int64_t> counts_;
  std::int64_t total_ = 0;
};

struct IouReport {
  std::vector<std::optional<double>> per_class;
  double mean = 0.0;
  int counted = 0;  // classes contributing to the mean
};

// Mean over classes that appear in the prediction or the truth, leaving out
// `exclude_from_mean`. Throws ContractError when no class qualifies.
IouReport summarize(const ConfusionMatrix& cm, const std::set<int>& exclude_from_mean = {});

IouReport miou(std::span<const int> pred, std::span<const int> truth, int classes, const std::set<int>& ignore = {},
               const std::set<int>& exclude_from_mean = {});

// IoU of occupied voxels (label != empty). Two empty grids score 1.
double sc_iou(const data::VoxelLabelGrid& pred, const data::VoxelLabelGrid& truth);

// mIoU over the semantic classes of two voxel grids; empty is excluded from
// the mean but its confusions still count as false positives/negatives.
IouReport ssc_miou(const data::VoxelLabelGrid& pred, const data::VoxelLabelGrid& truth);

}  // namespace tpv::eval
