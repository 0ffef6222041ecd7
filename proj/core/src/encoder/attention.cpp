#include "tpv/encoder/attention.hpp"

#include <cmath>
#include <numbers>

#include "tpv/errors.hpp"
#include "tpv/numeric/ops.hpp"

namespace tpv::encoder {

namespace {

constexpr double kMaskedLogit = -1e9;

}  // namespace

template <typename T>
Var<T> deformable_aggregate(Var<T> queries, const std::vector<DaSource<T>>& sources, const DaProjections<T>& proj,
                            int heads, int points) {
  using numeric::reshape;
  using numeric::slice_cols;
  if (queries.shape().size() != 2) throw DimensionError("deformable attention expects queries [N x C]");
  const std::int64_t N = queries.dim(0), G = heads, P = points;
  std::int64_t total_refs = 0;
  bool masked = false;
  for (const auto& s : sources) {
    if (s.refs_per_query < 0 || static_cast<std::int64_t>(s.refs.size()) != N * s.refs_per_query * 2) {
      throw DimensionError("deformable attention: reference array does not match " + std::to_string(N) + " queries");
    }
    if (!s.live.empty() && static_cast<std::int64_t>(s.live.size()) != N * s.refs_per_query) {
      throw DimensionError("deformable attention: live flags do not match the references");
    }
    total_refs += s.refs_per_query;
    masked = masked || !s.live.empty();
  }
  if (total_refs == 0) throw ContractError("deformable attention needs at least one reference point per query");
  const std::int64_t K = total_refs * P;

  auto offsets = numeric::linear(queries, proj.offset_weight, proj.offset_bias);
  auto logits = numeric::linear(queries, proj.weight_weight, proj.weight_bias);
  if (offsets.dim(1) != G * K * 2 || logits.dim(1) != G * K) {
    throw DimensionError("deformable attention: projections produce " + std::to_string(offsets.dim(1)) + " offsets and " +
                         std::to_string(logits.dim(1)) + " weights, expected " + std::to_string(G * K * 2) + " and " +
                         std::to_string(G * K));
  }
  if (masked) {
    BasicTensor<T> mask({N, G * K});
    for (std::int64_t n = 0; n < N; ++n) {
      std::int64_t r0 = 0;
      bool any = false;
      for (const auto& s : sources) {
        for (std::int64_t r = 0; r < s.refs_per_query; ++r) {
          const bool live = s.live.empty() || s.live[n * s.refs_per_query + r] != 0;
          any = any || live;
          if (live) continue;
          for (std::int64_t g = 0; g < G; ++g) {
            for (std::int64_t p = 0; p < P; ++p) mask[n * G * K + g * K + (r0 + r) * P + p] = static_cast<T>(kMaskedLogit);
          }
        }
        r0 += s.refs_per_query;
      }
      if (!any) throw ContractError("deformable attention: query " + std::to_string(n) + " has no live reference");
    }
    logits = numeric::add(logits, queries.tape().constant(std::move(mask)));
  }
  auto weights = numeric::softmax(reshape(logits, {N * G, K}), 1);
  offsets = reshape(offsets, {N * G, K * 2});

  std::vector<Var<T>> parts;
  std::int64_t k0 = 0;
  for (const auto& s : sources) {
    const std::int64_t R = s.refs_per_query, Ks = R * P;
    if (R == 0) continue;
    BasicTensor<T> base({N, G, Ks, 2});
    for (std::int64_t n = 0; n < N; ++n) {
      for (std::int64_t g = 0; g < G; ++g) {
        for (std::int64_t r = 0; r < R; ++r) {
          for (std::int64_t p = 0; p < P; ++p) {
            const auto at = ((n * G + g) * Ks + r * P + p) * 2;
            base[at] = static_cast<T>(s.refs[(n * R + r) * 2]);
            base[at + 1] = static_cast<T>(s.refs[(n * R + r) * 2 + 1]);
          }
        }
      }
    }
    const bool whole = Ks == K;
    auto w = whole ? weights : slice_cols(weights, k0, k0 + Ks);
    auto off = whole ? offsets : slice_cols(offsets, k0 * 2, (k0 + Ks) * 2);
    auto coords = numeric::add(queries.tape().constant(std::move(base)), reshape(off, {N, G, Ks, 2}));
    parts.push_back(numeric::deformable_sample(s.value, coords, reshape(w, {N, G, Ks})));
    k0 += Ks;
  }
  return parts.size() == 1 ? parts.front() : numeric::add_n(parts);
}

template <typename T>
Var<T> deformable_attention(Var<T> queries, const std::vector<DaSource<T>>& sources, const DaProjections<T>& proj,
                            int heads, int points, Var<T> out_weight, Var<T> out_bias) {
  return numeric::linear(deformable_aggregate(queries, sources, proj, heads, points), out_weight, out_bias);
}

template <typename T>
BasicTensor<T> ring_offset_bias(int heads, int points, std::int64_t refs) {
  const std::int64_t G = heads, P = points, K = refs * P;
  BasicTensor<T> bias({G * K * 2});
  for (std::int64_t g = 0; g < G; ++g) {
    for (std::int64_t k = 0; k < K; ++k) {
      const std::int64_t p = k % P;
      const double angle = 2.0 * std::numbers::pi * static_cast<double>(g * P + p) / static_cast<double>(G * P);
      bias[(g * K + k) * 2] = static_cast<T>(std::cos(angle));
      bias[(g * K + k) * 2 + 1] = static_cast<T>(std::sin(angle));
    }
  }
  return bias;
}

#define TPV_INSTANTIATE_ATTENTION(T)                                                                             \
  template Var<T> deformable_aggregate<T>(Var<T>, const std::vector<DaSource<T>>&, const DaProjections<T>&, int, \
                                          int);                                                                  \
  template Var<T> deformable_attention<T>(Var<T>, const std::vector<DaSource<T>>&, const DaProjections<T>&, int, \
                                          int, Var<T>, Var<T>);                                                  \
  template BasicTensor<T> ring_offset_bias<T>(int, int, std::int64_t);

TPV_INSTANTIATE_ATTENTION(float)
TPV_INSTANTIATE_ATTENTION(double)

}  // namespace tpv::encoder
