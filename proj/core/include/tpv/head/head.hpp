#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "tpv/data/types.hpp"
#include "tpv/numeric/tape.hpp"

namespace tpv::head {

using numeric::BasicTensor;
using numeric::ParameterStore;
using numeric::Tape;
using numeric::Var;

enum class Activation { Gelu, Relu };

std::string activation_name(Activation a);
Activation parse_activation(const std::string& name);

struct HeadConfig {
  std::int64_t in_channels = 32;
  std::int64_t hidden = 32;
  std::int64_t classes = data::kNumClasses + 1;
  Activation activation = Activation::Gelu;

  void validate() const;
};

// Adds "<prefix>.fc1.weight" [in x hidden], "<prefix>.fc1.bias", "<prefix>.fc2.weight"
// [hidden x classes] and "<prefix>.fc2.bias". Weights are uniform in +-1/sqrt(fan_in),
// biases zero.
template <typename T>
void init_head(ParameterStore<T>& store, const std::string& prefix, const HeadConfig& config, std::mt19937_64& rng);

// linear -> activation -> linear over the last axis of features [..., C].
template <typename T>
Var<T> mlp_head(Tape<T>& tape, const ParameterStore<T>& store, const std::string& prefix, const HeadConfig& config,
                Var<T> features);

inline constexpr int kIgnoreLabel = -1;

// Mean negative log-softmax of logits [N x K] at the labels, skipping entries
// equal to `ignore_index`. Throws UndefinedLossError when every entry is skipped
// and ContractError for labels outside [0, K).
template <typename T>
Var<T> cross_entropy(Var<T> logits, const std::vector<int>& labels, int ignore_index = kIgnoreLabel);

// Lovasz-softmax of probabilities [N x K]. By default the mean runs over the
// classes present in the (non-ignored) labels; `classes` overrides the set.
// Throws UndefinedLossError when no entry is labeled or the class set is empty.
template <typename T>
Var<T> lovasz_softmax(Var<T> probabilities, const std::vector<int>& labels, int ignore_index = kIgnoreLabel,
                      const std::optional<std::vector<int>>& classes = std::nullopt);

// Gradient of the Jaccard loss's Lovasz extension for ground-truth indicators
// sorted by decreasing error.
std::vector<double> lovasz_grad(const std::vector<int>& sorted_foreground);

// Voxel labels from labeled points: majority vote per voxel (ties to the
// lowest class id); voxels without points get data::kEmptyClass. Points outside
// the volume are dropped.
data::VoxelLabelGrid pseudo_voxel_labels(const data::LabeledPointSet& points, const data::TpvGridSpec& spec);

enum class PredictionSource { Point, Voxel };

std::string source_name(PredictionSource s);
PredictionSource parse_source(const std::string& name);

struct LossRouting {
  PredictionSource ce_input = PredictionSource::Voxel;
  PredictionSource lovasz_input = PredictionSource::Point;
};

template <typename T>
struct LossInputs {
  std::optional<Var<T>> point_logits;  // [N x K]
  std::optional<Var<T>> voxel_logits;  // [V x K]
  const std::vector<int>* point_labels = nullptr;
  const std::vector<int>* voxel_labels = nullptr;
  int ignore_index = kIgnoreLabel;
};

template <typename T>
struct LossTerms {
  Var<T> total;
  Var<T> ce;
  Var<T> lovasz;
};

// cross_entropy(routing.ce_input) + lovasz_softmax(softmax(routing.lovasz_input)),
// unit weights. Throws RoutingError when the routed logits or labels are missing.
template <typename T>
LossTerms<T> composite_loss(const LossInputs<T>& inputs, const LossRouting& routing);

}  // namespace tpv::head
