#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "tpv/geometry/grid.hpp"
#include "tpv/geometry/reference_points.hpp"

namespace tpv::encoder {

using geometry::TpvGridSpec;
using geometry::View;

struct BackboneConfig {
  // Output channels of each stride-2 3x3 convolution stage.
  std::vector<std::int64_t> stage_channels = {16, 32};
  // Number of trailing stages exposed as feature scales (1 or 2).
  int scales = 1;

  void validate() const;
};

struct EncoderConfig {
  TpvGridSpec grid;
  std::int64_t channels = 32;
  int hcab_blocks = 2;  // N1
  int hab_blocks = 1;   // N2
  int heads = 2;
  int points_per_head = 4;
  // Image cross-attention reference points per query, indexed by View. Zero
  // picks the default: min(4, D) for the top plane, min(8, extent) otherwise.
  std::array<std::int64_t, 3> ica_refs = {0, 0, 0};
  // Hybrid-attention neighbourhood. Zero cross counts default to ica_refs.
  double cvha_radius = 2.0;
  std::int64_t cvha_same = 4;
  std::array<std::int64_t, 3> cvha_cross = {0, 0, 0};
  std::int64_t ffn_expansion = 2;
  BackboneConfig backbone;
  // Only the top plane: no side/front queries, queries ignore height.
  bool bev = false;
  // Test mode: every LayerNorm returns its input.
  bool bypass_norm = false;
  std::uint64_t seed = 0;

  // Throws ConfigError on any violated invariant.
  void validate() const;
  // Resolved reference counts (defaults filled in).
  std::int64_t ica_ref_count(View v) const;
  std::int64_t cvha_cross_count(View v) const;
  geometry::CvhaOptions cvha_options() const;
  int blocks() const { return hcab_blocks + hab_blocks; }
  std::vector<View> views() const;
};

}  // namespace tpv::encoder
