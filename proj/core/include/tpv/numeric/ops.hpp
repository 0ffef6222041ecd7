#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "tpv/numeric/tape.hpp"

// Differentiable operations recorded on a Tape. Only the set the encoder,
// head and losses need; no general broadcasting.
namespace tpv::numeric {

template <typename T> Var<T> add(Var<T> a, Var<T> b);
template <typename T> Var<T> sub(Var<T> a, Var<T> b);
template <typename T> Var<T> mul(Var<T> a, Var<T> b);
template <typename T> Var<T> scale(Var<T> a, T factor);
// Sum of several same-shaped values.
template <typename T> Var<T> add_n(const std::vector<Var<T>>& terms);

// x [..., K] + b [K] broadcast over leading axes.
template <typename T> Var<T> add_row_bias(Var<T> x, Var<T> bias);

// a [m x k] times b [k x n].
template <typename T> Var<T> matmul(Var<T> a, Var<T> b);
// x [..., in] * w [in x out] + b [out]; leading axes are preserved.
template <typename T> Var<T> linear(Var<T> x, Var<T> weight, Var<T> bias);

template <typename T> Var<T> relu(Var<T> x);
// tanh approximation of GELU.
template <typename T> Var<T> gelu(Var<T> x);

template <typename T> Var<T> softmax(Var<T> x, std::size_t axis);

inline constexpr double kLayerNormEps = 1e-5;
// Normalizes over the last axis then applies gamma/beta. Last extent must be >= 2.
template <typename T> Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, T eps = static_cast<T>(kLayerNormEps));

template <typename T> Var<T> reshape(Var<T> x, Shape shape);
template <typename T> Var<T> sum(Var<T> x);
template <typename T> Var<T> mean(Var<T> x);

// Row/column slicing and index routing on rank-2 values.
template <typename T> Var<T> slice_cols(Var<T> x, std::int64_t begin, std::int64_t end);
template <typename T> Var<T> slice_rows(Var<T> x, std::int64_t begin, std::int64_t end);
template <typename T> Var<T> concat_rows(const std::vector<Var<T>>& parts);
template <typename T> Var<T> gather_rows(Var<T> x, std::vector<std::int64_t> rows);
template <typename T> Var<T> scatter_add_rows(Var<T> x, std::vector<std::int64_t> rows, std::int64_t out_rows);
// Multiplies row i by the constant factors[i].
template <typename T> Var<T> scale_rows(Var<T> x, std::vector<T> factors);

// Bilinear sampling of plane [A x B x C] at coords [N x 2] (axis-0, axis-1
// positions). Integer positions address cell centers; positions outside the
// grid clamp to the border cell. Differentiable in plane values and coords.
template <typename T> Var<T> bilinear_sample(Var<T> plane, Var<T> coords);

// Fused multi-head sample-and-weight used by deformable attention.
// plane [A x B x C], coords [N x G x K x 2], weights [N x G x K];
// head g reads channels [g*C/G, (g+1)*C/G). Returns [N x C] with
// out[n, g*C/G + c] = sum_k weights[n,g,k] * sample(plane, coords[n,g,k])[g*C/G + c].
template <typename T> Var<T> deformable_sample(Var<T> plane, Var<T> coords, Var<T> weights);

// 2D convolution on a channels-last image x [H x W x Ci] with weight
// [k x k x Ci x Co] and bias [Co]. Zero padding.
template <typename T> Var<T> conv2d(Var<T> x, Var<T> weight, Var<T> bias, int stride, int pad);

// Tensor-level versions that skip the tape.
template <typename T> BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T> BasicTensor<T> softmax(const BasicTensor<T>& x, std::size_t axis);
template <typename T>
BasicTensor<T> layer_norm(const BasicTensor<T>& x, const BasicTensor<T>& gamma, const BasicTensor<T>& beta);
template <typename T> BasicTensor<T> bilinear_sample(const BasicTensor<T>& plane, const BasicTensor<T>& coords);

namespace detail {

// Interpolation footprint along one axis for the clamped cell-center rule.
// `live` marks where the derivative with respect to the coordinate is nonzero:
// [0, extent-1). At exact cell boundaries the right-limit cell pair is used.
struct AxisTap {
  std::int64_t lo = 0;
  std::int64_t hi = 0;
  double frac = 0.0;
  bool live = false;
};

inline AxisTap axis_tap(double pos, std::int64_t extent) {
  AxisTap tap;
  if (extent <= 1) return tap;
  const double last = static_cast<double>(extent - 1);
  tap.live = pos >= 0.0 && pos < last;
  const double c = pos < 0.0 ? 0.0 : (pos > last ? last : pos);
  std::int64_t lo = static_cast<std::int64_t>(std::floor(c));
  if (lo > extent - 2) lo = extent - 2;
  tap.lo = lo;
  tap.hi = lo + 1;
  tap.frac = c - static_cast<double>(lo);
  return tap;
}

}  // namespace detail

}  // namespace tpv::numeric
