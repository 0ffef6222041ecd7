#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tpv/numeric/tape.hpp"

namespace tpv::encoder {

using numeric::BasicTensor;
using numeric::ParameterStore;
using numeric::Tape;
using numeric::Var;

// One value map read by deformable attention and the reference points of every
// query on it.
template <typename T>
struct DaSource {
  Var<T> value;                  // [A x B x C]
  std::vector<double> refs;      // [N x R x 2] sample coordinates, row-major
  std::int64_t refs_per_query = 0;
  // Optional [N x R] flags; references flagged 0 get zero attention weight.
  // Every query needs at least one live reference across all sources.
  std::vector<std::uint8_t> live;
};

// Per-query projections producing sampling offsets [G*K*2] and attention
// logits [G*K], where K = points * (total references over all sources).
template <typename T>
struct DaProjections {
  Var<T> offset_weight;
  Var<T> offset_bias;
  Var<T> weight_weight;
  Var<T> weight_bias;
};

// Multi-head deformable sampling before the output projection: [N x C].
// For each head, the K logits are normalized jointly across all sources, so
// the weights of one head sum to 1. Offsets are in cells of the value map.
// Throws ContractError when a query has no reference.
template <typename T>
Var<T> deformable_aggregate(Var<T> queries, const std::vector<DaSource<T>>& sources, const DaProjections<T>& proj,
                            int heads, int points);

// deformable_aggregate followed by the output projection.
template <typename T>
Var<T> deformable_attention(Var<T> queries, const std::vector<DaSource<T>>& sources, const DaProjections<T>& proj,
                            int heads, int points, Var<T> out_weight, Var<T> out_bias);

// Initial offset bias: point p of head g starts one cell away from its
// reference, at angle 2*pi*(g*P + p)/(G*P). Layout [G x K x 2].
template <typename T>
BasicTensor<T> ring_offset_bias(int heads, int points, std::int64_t refs);

}  // namespace tpv::encoder
