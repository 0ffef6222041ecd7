#include "tpv/numeric/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "tpv/errors.hpp"

namespace tpv::numeric {

namespace {

template <typename T>
void require_same_shape(const char* op, const Var<T>& a, const Var<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                         " differ");
  }
}

template <typename T>
void require_rank(const char* op, const Var<T>& a, std::size_t rank) {
  if (a.value().rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(a.shape()));
  }
}

// C[m x n] (+)= A[m x k] * B[k x n]
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k, std::int64_t n) {
  for (std::int64_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    const T* arow = a + i * k;
    for (std::int64_t p = 0; p < k; ++p) {
      const T av = arow[p];
      if (av == T{0}) continue;
      const T* brow = b + p * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m x k] += G[m x n] * B[k x n]^T
template <typename T>
void gemm_nt(const T* g, const T* b, T* c, std::int64_t m, std::int64_t n, std::int64_t k) {
  for (std::int64_t i = 0; i < m; ++i) {
    const T* grow = g + i * n;
    T* crow = c + i * k;
    for (std::int64_t p = 0; p < k; ++p) {
      const T* brow = b + p * n;
      T acc{0};
      for (std::int64_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
      crow[p] += acc;
    }
  }
}

// C[k x n] += A[m x k]^T * G[m x n]
template <typename T>
void gemm_tn(const T* a, const T* g, T* c, std::int64_t m, std::int64_t k, std::int64_t n) {
  for (std::int64_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    const T* grow = g + i * n;
    for (std::int64_t p = 0; p < k; ++p) {
      const T av = arow[p];
      if (av == T{0}) continue;
      T* crow = c + p * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += av * grow[j];
    }
  }
}

template <typename T>
struct Tap2 {
  std::int64_t i00, i01, i10, i11;  // flat cell offsets (times C)
  T w00, w01, w10, w11;
  T tb;
  T ta;
  bool live_a, live_b;
};

template <typename T>
Tap2<T> plane_tap(double a, double b, std::int64_t A, std::int64_t B, std::int64_t C) {
  const auto ta = detail::axis_tap(a, A);
  const auto tb = detail::axis_tap(b, B);
  Tap2<T> t;
  t.i00 = (ta.lo * B + tb.lo) * C;
  t.i01 = (ta.lo * B + tb.hi) * C;
  t.i10 = (ta.hi * B + tb.lo) * C;
  t.i11 = (ta.hi * B + tb.hi) * C;
  const T fa = static_cast<T>(ta.frac);
  const T fb = static_cast<T>(tb.frac);
  t.w00 = (T{1} - fa) * (T{1} - fb);
  t.w01 = (T{1} - fa) * fb;
  t.w10 = fa * (T{1} - fb);
  t.w11 = fa * fb;
  t.ta = fa;
  t.tb = fb;
  t.live_a = ta.live;
  t.live_b = tb.live;
  return t;
}

std::int64_t leading_rows(const Shape& s) {
  std::int64_t rows = 1;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) rows *= s[i];
  return rows;
}

}  // namespace

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same_shape("add", a, b);
  BasicTensor<T> out(a.shape());
  auto x = a.value().data(), y = b.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](const BasicTensor<T>&, const BasicTensor<T>& g, Tape<T>& t) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  require_same_shape("sub", a, b);
  BasicTensor<T> out(a.shape());
  auto x = a.value().data(), y = b.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] - y[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](const BasicTensor<T>&, const BasicTensor<T>& g, Tape<T>& t) {
    t.accumulate(a, g);
    if (b.requires_grad()) {
      auto& buf = t.grad_buffer(b);
      auto d = buf.data();
      auto s = g.data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= s[i];
    }
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_same_shape("mul", a, b);
  BasicTensor<T> out(a.shape());
  auto x = a.value().data(), y = b.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](const BasicTensor<T>&, const BasicTensor<T>& g, Tape<T>& t) {
    auto s = g.data();
    if (a.requires_grad()) {
      auto d = t.grad_buffer(a).data();
      auto y = b.value().data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i] * y[i];
    }
    if (b.requires_grad()) {
      auto d = t.grad_buffer(b).data();
      auto x = a.value().data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i] * x[i];
    }
  });
}

template <typename T>
Var<T> scale(Var<T> a, T factor) {
  BasicTensor<T> out(a.shape());
  auto x = a.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * factor;
  return a.tape().record(std::move(out), {a}, [a, factor](const BasicTensor<T>&, const BasicTensor<T>& g, Tape<T>& t) {
    auto d = t.grad_buffer(a).data();
    auto s = g.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i] * factor;
  });
}

template <typename T>
Var<T> add_n(const std::vector<Var<T>>& terms) {
  if (terms.empty()) throw ContractError("add_n: no terms");
  for (const auto& v : terms) require_same_shape("add_n", terms.front(), v);
  BasicTensor<T> out = terms.front().value();
  out.set_requires_grad(false);
  auto o = out.data();
  for (std::size_t k = 1; k < terms.size(); ++k) {
    auto x = terms[k].value().data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += x[i];
  }
  return terms.front().tape().record(std::move(out), terms, [terms](const BasicTensor<T>&, const BasicTensor<T>& g, Tape<T>& t) {
    for (const auto& v : terms) t.accumulate(v, g);
  });
}

template <typename T>
Var<T> add_row_bias(Var<T> x, Var<T> bias) {
  const auto& xs = x.shape();
  if (xs.empty() || bias.value().rank() != 1 || bias.dim(0) != xs.back()) {
    throw DimensionError("add_row_bias: value " + shape_str(xs) + " vs bias " + shape_str(bias.shape()));
  }
  const std::int64_t k = xs.back();
  const std::int64_t rows = x.value().numel() / k;
  BasicTensor<T> out = x.value();
  out.set_requires_grad(false);
  auto o = out.data();
  auto bv = bias.value().data();
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t j = 0; j < k; ++j) o[r * k + j] += bv[j];
  return x.tape().record(std::move(out), {x, bias}, [x, bias, rows, k](const BasicTensor<T>&, const BasicTensor<T>& g, Tape<T>& t) {
    t.accumulate(x, g);
    if (bias.requires_grad()) {
      auto d = t.grad_buffer(bias).data();
      auto s = g.data();
      for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t j = 0; j < k; ++j) d[j] += s[r * k + j];
    }
  });
}

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner extents differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  BasicTensor<T> out({m, n});
  gemm_nn(a.value().data().data(), b.value().data().data(), out.data().data(), m, k, n);
  return a.tape().record(std::move(out), {a, b}, [a, b, m, k, n](const BasicTensor<T>&, const BasicTensor<T>& g, Tape<T>& t) {
    if (a.requires_grad()) gemm_nt(g.data().data(), b.value().data().data(), t.grad_buffer(a).data().data(), m, n, k);
    if (b.requires_grad()) gemm_tn(a.value().data().data(), g.data().data(), t.grad_buffer(b).data().data(), m, k, n);
  });
}

template <typename T>
Var<T> linear(Var<T> x, Var<T> weight, Var<T> bias) {
  const auto& xs = x.shape();
  require_rank("linear(weight)", weight, 2);
  if (xs.empty() || xs.back() != weight.dim(0)) {
    throw DimensionError("linear: input " + shape_str(xs) + " does not match weight " + shape_str(weight.shape()));
  }
  const std::int64_t in = weight.dim(0), outc = weight.dim(1);
  if (bias.value().rank() != 1 || bias.dim(0) != outc) {
    throw DimensionError("linear: bias " + shape_str(bias.shape()) + " does not match weight " +
                         shape_str(weight.shape()));
  }
  const std::int64_t rows = leading_rows(xs);
  Shape os = xs;
  os.back() = outc;
  BasicTensor<T> out(os);
  auto o = out.data();
  auto bv = bias.value().data();
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t j = 0; j < outc; ++j) o[r * outc + j] = bv[j];
  gemm_nn(x.value().data().data(), weight.value().data().data(), o.data(), rows, in, outc);
  return x.tape().record(std::move(out), {x, weight, bias},
                         [x, weight, bias, rows, in, outc](const BasicTensor<T>&, const BasicTensor<T>& g, Tape<T>& t) {
                           const T* gd = g.data().data();
                           if (x.requires_grad())
                             gemm_nt(gd, weight.value().data().data(), t.grad_buffer(x).data().data(), rows, outc, in);
                           if (weight.requires_grad())
                             gemm_tn(x.value().data().data(), gd, t.grad_buffer(weight).data().data(), rows, in, outc);
                           if (bias.requires_grad()) {
                             auto d = t.grad_buffer(bias).data();
                             for (std::int64_t r = 0; r < rows; ++r)
                               for (std::int64_t j = 0; j < outc; ++j) d[j] += gd[r * outc + j];
                           }
                         });
}

template <typename T>
Var<T> relu(Var<T> x) {
  BasicTensor<T> out(x.shape());
  auto xi = x.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = xi[i] > T{0} ? xi[i] : T{0};
  return x.tape().record(std::move(out), {x}, [x](const BasicTensor<T>&, const BasicTensor<T>& g, Tape<T>& t) {
    auto d = t.grad_buffer(x).data();
    auto xi = x.value().data();
    auto s = g.data();
    for (std::size_t i = 0; i < d.size(); ++i)
      if (xi[i] > T{0}) d[i] += s[i];
  });
}

template <typename T>
Var<T> gelu(Var<T> x) {
  constexpr T kC = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
  constexpr T kA = static_cast<T>(0.044715);
  BasicTensor<T> out(x.shape());
  auto xi = x.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    const T v = xi[i];
    o[i] = T{0.5} * v * (T{1} + std::tanh(kC * (v + kA * v * v * v)));
  }
  return x.tape().record(std::move(out), {x}, [x](const BasicTensor<T>&, const BasicTensor<T>& g, Tape<T>& t) {
    auto d = t.grad_buffer(x).data();
    auto xi = x.value().data();
    auto s = g.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      const T v = xi[i];
      const T th = std::tanh(kC * (v + kA * v * v * v));
      const T dth = (T{1} - th * th) * kC * (T{1} + T{3} * kA * v * v);
      d[i] += s[i] * (T{0.5} * (T{1} + th) + T{0.5} * v * dth);
    }
  });
}

template <typename T>
Var<T> softmax(Var<T> x, std::size_t axis) {
  const auto& s = x.shape();
  if (axis >= s.size()) throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for " + shape_str(s));
  std::int64_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::int64_t n = s[axis];
  BasicTensor<T> out(s);
  auto xi = x.value().data();
  auto o = out.data();
  for (std::int64_t a = 0; a < outer; ++a) {
    for (std::int64_t c = 0; c < inner; ++c) {
      const std::int64_t base = a * n * inner + c;
      T mx = xi[base];
      for (std::int64_t j = 1; j < n; ++j) mx = std::max(mx, xi[base + j * inner]);
      T total{0};
      for (std::int64_t j = 0; j < n; ++j) {
        const T e = std::exp(xi[base + j * inner] - mx);
        o[base + j * inner] = e;
        total += e;
      }
      const T inv = T{1} / total;
      for (std::int64_t j = 0; j < n; ++j) o[base + j * inner] *= inv;
    }
  }
  return x.tape().record(std::move(out), {x}, [x, outer, inner, n](const BasicTensor<T>& out_value,
                                                                   const BasicTensor<T>& g, Tape<T>& t) {
    auto y = out_value.data();
    auto gs = g.data();
    auto d = t.grad_buffer(x).data();
    for (std::int64_t a = 0; a < outer; ++a) {
      for (std::int64_t c = 0; c < inner; ++c) {
        const std::int64_t base = a * n * inner + c;
        T dot{0};
        for (std::int64_t j = 0; j < n; ++j) dot += gs[base + j * inner] * y[base + j * inner];
        for (std::int64_t j = 0; j < n; ++j) {
          const auto idx = base + j * inner;
          d[idx] += y[idx] * (gs[idx] - dot);
        }
      }
    }
  });
}


template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, T eps) {
  const auto& s = x.shape();
  if (s.empty() || s.back() < 2) {
    throw ContractError("layer_norm: channel extent must be >= 2, got shape " + shape_str(s));
  }
  const std::int64_t c = s.back();
  if (gamma.value().rank() != 1 || gamma.dim(0) != c || beta.value().rank() != 1 || beta.dim(0) != c) {
    throw DimensionError("layer_norm: affine parameters do not match " + shape_str(s));
  }
  const std::int64_t rows = x.value().numel() / c;
  BasicTensor<T> out(s);
  // Normalized values and inverse std per row are kept for backward.
  auto xhat = std::make_shared<std::vector<T>>(static_cast<std::size_t>(rows * c));
  auto inv_std = std::make_shared<std::vector<T>>(static_cast<std::size_t>(rows));
  auto xi = x.value().data();
  auto gv = gamma.value().data();
  auto bv = beta.value().data();
  auto o = out.data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* row = xi.data() + r * c;
    T mu{0};
    for (std::int64_t j = 0; j < c; ++j) mu += row[j];
    mu /= static_cast<T>(c);
    T var{0};
    for (std::int64_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<T>(c);
    const T is = T{1} / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::int64_t j = 0; j < c; ++j) {
      const T h = (row[j] - mu) * is;
      (*xhat)[r * c + j] = h;
      o[r * c + j] = h * gv[j] + bv[j];
    }
  }
  return x.tape().record(std::move(out), {x, gamma, beta},
                         [x, gamma, beta, xhat, inv_std, rows, c](const BasicTensor<T>&, const BasicTensor<T>& g,
                                                                  Tape<T>& t) {
                           auto gs = g.data();
                           if (gamma.requires_grad()) {
                             auto d = t.grad_buffer(gamma).data();
                             for (std::int64_t r = 0; r < rows; ++r)
                               for (std::int64_t j = 0; j < c; ++j) d[j] += gs[r * c + j] * (*xhat)[r * c + j];
                           }
                           if (beta.requires_grad()) {
                             auto d = t.grad_buffer(beta).data();
                             for (std::int64_t r = 0; r < rows; ++r)
                               for (std::int64_t j = 0; j < c; ++j) d[j] += gs[r * c + j];
                           }
                           if (x.requires_grad()) {
                             auto d = t.grad_buffer(x).data();
                             auto gv = gamma.value().data();
                             const T inv_c = T{1} / static_cast<T>(c);
                             for (std::int64_t r = 0; r < rows; ++r) {
                               T sum_dh{0}, sum_dh_h{0};
                               for (std::int64_t j = 0; j < c; ++j) {
                                 const T dh = gs[r * c + j] * gv[j];
                                 sum_dh += dh;
                                 sum_dh_h += dh * (*xhat)[r * c + j];
                               }
                               const T is = (*inv_std)[r];
                               for (std::int64_t j = 0; j < c; ++j) {
                                 const T dh = gs[r * c + j] * gv[j];
                                 d[r * c + j] += is * (dh - inv_c * sum_dh - (*xhat)[r * c + j] * inv_c * sum_dh_h);
                               }
                             }
                           }
                         });
}

template <typename T>
Var<T> reshape(Var<T> x, Shape shape) {
  BasicTensor<T> out = x.value().reshaped(std::move(shape));
  out.set_requires_grad(false);
  return x.tape().record(std::move(out), {x}, [x](const BasicTensor<T>&, const BasicTensor<T>& g, Tape<T>& t) {
    t.accumulate(x, g);
  });
}

template <typename T>
Var<T> sum(Var<T> x) {
  T total{0};
  for (T v : x.value().data()) total += v;
  return x.tape().record(BasicTensor<T>::scalar(total), {x},
                         [x](const BasicTensor<T>&, const BasicTensor<T>& g, Tape<T>& t) {
                           const T gv = g[0];
                           for (auto& d : t.grad_buffer(x).data()) d += gv;
                         });
}

template <typename T>
Var<T> mean(Var<T> x) {
  return scale(sum(x), T{1} / static_cast<T>(x.value().numel()));
}

template <typename T>
Var<T> slice_cols(Var<T> x, std::int64_t begin, std::int64_t end) {
  require_rank("slice_cols", x, 2);
  const std::int64_t n = x.dim(0), k = x.dim(1);
  if (begin < 0 || end > k || begin >= end) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + "," + std::to_string(end) + ") outside " +
                         shape_str(x.shape()));
  }
  const std::int64_t w = end - begin;
  BasicTensor<T> out({n, w});
  auto xi = x.value().data();
  auto o = out.data();
  for (std::int64_t r = 0; r < n; ++r)
    std::copy_n(xi.data() + r * k + begin, w, o.data() + r * w);
  return x.tape().record(std::move(out), {x}, [x, n, k, w, begin](const BasicTensor<T>&, const BasicTensor<T>& g, Tape<T>& t) {
    auto d = t.grad_buffer(x).data();
    auto s = g.data();
    for (std::int64_t r = 0; r < n; ++r)
      for (std::int64_t j = 0; j < w; ++j) d[r * k + begin + j] += s[r * w + j];
  });
}

template <typename T>
Var<T> slice_rows(Var<T> x, std::int64_t begin, std::int64_t end) {
  require_rank("slice_rows", x, 2);
  const std::int64_t n = x.dim(0), k = x.dim(1);
  if (begin < 0 || end > n || begin >= end) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + "," + std::to_string(end) + ") outside " +
                         shape_str(x.shape()));
  }
  auto xi = x.value().data();
  std::vector<T> data(xi.begin() + begin * k, xi.begin() + end * k);
  return x.tape().record(BasicTensor<T>({end - begin, k}, std::move(data)), {x},
                         [x, k, begin](const BasicTensor<T>&, const BasicTensor<T>& g, Tape<T>& t) {
                           auto d = t.grad_buffer(x).data();
                           auto s = g.data();
                           for (std::size_t i = 0; i < s.size(); ++i) d[begin * k + static_cast<std::int64_t>(i)] += s[i];
                         });
}

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: no parts");
  const std::int64_t k = parts.front().value().rank() == 2 ? parts.front().dim(1) : -1;
  std::int64_t rows = 0;
  for (const auto& p : parts) {
    require_rank("concat_rows", p, 2);
    if (p.dim(1) != k) throw DimensionError("concat_rows: column extents differ");
    rows += p.dim(0);
  }
  std::vector<T> data;
  data.reserve(static_cast<std::size_t>(rows * k));
  for (const auto& p : parts) data.insert(data.end(), p.value().data().begin(), p.value().data().end());
  return parts.front().tape().record(BasicTensor<T>({rows, k}, std::move(data)), parts,
                                     [parts](const BasicTensor<T>&, const BasicTensor<T>& g, Tape<T>& t) {
                                       std::int64_t offset = 0;
                                       auto s = g.data();
                                       for (const auto& p : parts) {
                                         const auto n = p.value().numel();
                                         if (p.requires_grad()) {
                                           auto d = t.grad_buffer(p).data();
                                           for (std::int64_t i = 0; i < n; ++i) d[i] += s[offset + i];
                                         }
                                         offset += n;
                                       }
                                     });
}

template <typename T>
Var<T> gather_rows(Var<T> x, std::vector<std::int64_t> rows) {
  require_rank("gather_rows", x, 2);
  const std::int64_t n = x.dim(0), k = x.dim(1);
  const auto m = static_cast<std::int64_t>(rows.size());
  if (m == 0) throw ContractError("gather_rows: empty row list");
  BasicTensor<T> out({m, k});
  auto xi = x.value().data();
  auto o = out.data();
  for (std::int64_t i = 0; i < m; ++i) {
    const auto r = rows[static_cast<std::size_t>(i)];
    if (r < 0 || r >= n) throw DimensionError("gather_rows: row index out of range");
    std::copy_n(xi.data() + r * k, k, o.data() + i * k);
  }
  return x.tape().record(std::move(out), {x}, [x, rows = std::move(rows), k](const BasicTensor<T>&, const BasicTensor<T>& g, Tape<T>& t) {
    auto d = t.grad_buffer(x).data();
    auto s = g.data();
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::int64_t j = 0; j < k; ++j) d[rows[i] * k + j] += s[static_cast<std::int64_t>(i) * k + j];
  });
}

template <typename T>
Var<T> scatter_add_rows(Var<T> x, std::vector<std::int64_t> rows, std::int64_t out_rows) {
  require_rank("scatter_add_rows", x, 2);
  const std::int64_t m = x.dim(0), k = x.dim(1);
  if (static_cast<std::int64_t>(rows.size()) != m) throw DimensionError("scatter_add_rows: index count mismatch");
  BasicTensor<T> out({out_rows, k});
  auto xi = x.value().data();
  auto o = out.data();
  for (std::int64_t i = 0; i < m; ++i) {
    const auto r = rows[static_cast<std::size_t>(i)];
    if (r < 0 || r >= out_rows) throw DimensionError("scatter_add_rows: row index out of range");
    for (std::int64_t j = 0; j < k; ++j) o[r * k + j] += xi[i * k + j];
  }
  return x.tape().record(std::move(out), {x}, [x, rows = std::move(rows), k](const BasicTensor<T>&, const BasicTensor<T>& g, Tape<T>& t) {
    auto d = t.grad_buffer(x).data();
    auto s = g.data();
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::int64_t j = 0; j < k; ++j) d[static_cast<std::int64_t>(i) * k + j] += s[rows[i] * k + j];
  });
}

template <typename T>
Var<T> scale_rows(Var<T> x, std::vector<T> factors) {
  require_rank("scale_rows", x, 2);
  const std::int64_t n = x.dim(0), k = x.dim(1);
  if (static_cast<std::int64_t>(factors.size()) != n) throw DimensionError("scale_rows: factor count mismatch");
  BasicTensor<T> out({n, k});
  auto xi = x.value().data();
  auto o = out.data();
  for (std::int64_t r = 0; r < n; ++r)
    for (std::int64_t j = 0; j < k; ++j) o[r * k + j] = xi[r * k + j] * factors[static_cast<std::size_t>(r)];
  return x.tape().record(std::move(out), {x}, [x, factors = std::move(factors), n, k](const BasicTensor<T>&, const BasicTensor<T>& g, Tape<T>& t) {
    auto d = t.grad_buffer(x).data();
    auto s = g.data();
    for (std::int64_t r = 0; r < n; ++r)
      for (std::int64_t j = 0; j < k; ++j) d[r * k + j] += s[r * k + j] * factors[static_cast<std::size_t>(r)];
  });
}

template <typename T>
Var<T> bilinear_sample(Var<T> plane, Var<T> coords) {
  require_rank("bilinear_sample(plane)", plane, 3);
  const auto& cs = coords.shape();
  if (cs.size() != 2 || cs[1] != 2) {
    throw DimensionError("bilinear_sample: coords must be [N x 2], got " + shape_str(cs));
  }
  const std::int64_t A = plane.dim(0), B = plane.dim(1), C = plane.dim(2);
  const std::int64_t n = cs[0];
  BasicTensor<T> out({n, C});
  auto pv = plane.value().data();
  auto cv = coords.value().data();
  auto o = out.data();
  for (std::int64_t i = 0; i < n; ++i) {
    const auto tap = plane_tap<T>(cv[2 * i], cv[2 * i + 1], A, B, C);
    T* orow = o.data() + i * C;
    for (std::int64_t c = 0; c < C; ++c) {
      orow[c] = tap.w00 * pv[tap.i00 + c] + tap.w01 * pv[tap.i01 + c] + tap.w10 * pv[tap.i10 + c] +
                tap.w11 * pv[tap.i11 + c];
    }
  }
  return plane.tape().record(
      std::move(out), {plane, coords},
      [plane, coords, A, B, C, n](const BasicTensor<T>&, const BasicTensor<T>& g, Tape<T>& t) {
        auto pv = plane.value().data();
        auto cv = coords.value().data();
        auto gs = g.data();
        T* dp = plane.requires_grad() ? t.grad_buffer(plane).data().data() : nullptr;
        T* dc = coords.requires_grad() ? t.grad_buffer(coords).data().data() : nullptr;
        for (std::int64_t i = 0; i < n; ++i) {
          const auto tap = plane_tap<T>(cv[2 * i], cv[2 * i + 1], A, B, C);
          const T* grow = gs.data() + i * C;
          if (dp) {
            for (std::int64_t c = 0; c < C; ++c) {
              dp[tap.i00 + c] += tap.w00 * grow[c];
              dp[tap.i01 + c] += tap.w01 * grow[c];
              dp[tap.i10 + c] += tap.w10 * grow[c];
              dp[tap.i11 + c] += tap.w11 * grow[c];
            }
          }
          if (dc) {
            T da{0}, db{0};
            for (std::int64_t c = 0; c < C; ++c) {
              const T v00 = pv[tap.i00 + c], v01 = pv[tap.i01 + c], v10 = pv[tap.i10 + c], v11 = pv[tap.i11 + c];
              da += grow[c] * ((T{1} - tap.tb) * (v10 - v00) + tap.tb * (v11 - v01));
              db += grow[c] * ((T{1} - tap.ta) * (v01 - v00) + tap.ta * (v11 - v10));
            }
            if (tap.live_a) dc[2 * i] += da;
            if (tap.live_b) dc[2 * i + 1] += db;
          }
        }
      });
}

template <typename T>
Var<T> deformable_sample(Var<T> plane, Var<T> coords, Var<T> weights) {
  require_rank("deformable_sample(plane)", plane, 3);
  const auto& cs = coords.shape();
  const auto& ws = weights.shape();
  if (cs.size() != 4 || cs[3] != 2 || ws.size() != 3 || ws[0] != cs[0] || ws[1] != cs[1] || ws[2] != cs[2]) {
    throw DimensionError("deformable_sample: coords " + shape_str(cs) + " and weights " + shape_str(ws) +
                         " must be [N x G x K x 2] and [N x G x K]");
  }
  const std::int64_t A = plane.dim(0), B = plane.dim(1), C = plane.dim(2);
  const std::int64_t n = cs[0], G = cs[1], K = cs[2];
  if (C % G != 0) throw DimensionError("deformable_sample: channels " + std::to_string(C) + " not divisible by heads");
  const std::int64_t cg = C / G;
  BasicTensor<T> out({n, C});
  auto pv = plane.value().data();
  auto cv = coords.value().data();
  auto wv = weights.value().data();
  auto o = out.data();
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t g = 0; g < G; ++g) {
      T* orow = o.data() + i * C + g * cg;
      for (std::int64_t k = 0; k < K; ++k) {
        const std::int64_t s = (i * G + g) * K + k;
        const auto tap = plane_tap<T>(cv[2 * s], cv[2 * s + 1], A, B, C);
        const T w = wv[s];
        const T* p00 = pv.data() + tap.i00 + g * cg;
        const T* p01 = pv.data() + tap.i01 + g * cg;
        const T* p10 = pv.data() + tap.i10 + g * cg;
        const T* p11 = pv.data() + tap.i11 + g * cg;
        const T w00 = w * tap.w00, w01 = w * tap.w01, w10 = w * tap.w10, w11 = w * tap.w11;
        for (std::int64_t c = 0; c < cg; ++c) orow[c] += w00 * p00[c] + w01 * p01[c] + w10 * p10[c] + w11 * p11[c];
      }
    }
  }
  return plane.tape().record(
      std::move(out), {plane, coords, weights},
      [plane, coords, weights, A, B, C, n, G, K, cg](const BasicTensor<T>&, const BasicTensor<T>& grad, Tape<T>& t) {
        auto pv = plane.value().data();
        auto cv = coords.value().data();
        auto wv = weights.value().data();
        auto gs = grad.data();
        T* dp = plane.requires_grad() ? t.grad_buffer(plane).data().data() : nullptr;
        T* dc = coords.requires_grad() ? t.grad_buffer(coords).data().data() : nullptr;
        T* dw = weights.requires_grad() ? t.grad_buffer(weights).data().data() : nullptr;
        for (std::int64_t i = 0; i < n; ++i) {
          for (std::int64_t g = 0; g < G; ++g) {
            const T* grow = gs.data() + i * C + g * cg;
            for (std::int64_t k = 0; k < K; ++k) {
              const std::int64_t s = (i * G + g) * K + k;
              const auto tap = plane_tap<T>(cv[2 * s], cv[2 * s + 1], A, B, C);
              const T w = wv[s];
              const std::int64_t off = g * cg;
              const T* p00 = pv.data() + tap.i00 + off;
              const T* p01 = pv.data() + tap.i01 + off;
              const T* p10 = pv.data() + tap.i10 + off;
              const T* p11 = pv.data() + tap.i11 + off;
              if (dp) {
                const T w00 = w * tap.w00, w01 = w * tap.w01, w10 = w * tap.w10, w11 = w * tap.w11;
                T* d00 = dp + tap.i00 + off;
                T* d01 = dp + tap.i01 + off;
                T* d10 = dp + tap.i10 + off;
                T* d11 = dp + tap.i11 + off;
                for (std::int64_t c = 0; c < cg; ++c) {
                  d00[c] += w00 * grow[c];
                  d01[c] += w01 * grow[c];
                  d10[c] += w10 * grow[c];
                  d11[c] += w11 * grow[c];
                }
              }
              if (dw || dc) {
                T sw{0}, da{0}, db{0};
                const T ua = T{1} - tap.ta, ub = T{1} - tap.tb;
                for (std::int64_t c = 0; c < cg; ++c) {
                  const T v00 = p00[c], v01 = p01[c], v10 = p10[c], v11 = p11[c];
                  sw += grow[c] * (tap.w00 * v00 + tap.w01 * v01 + tap.w10 * v10 + tap.w11 * v11);
                  da += grow[c] * (ub * (v10 - v00) + tap.tb * (v11 - v01));
                  db += grow[c] * (ua * (v01 - v00) + tap.ta * (v11 - v10));
                }
                if (dw) dw[s] += sw;
                if (dc) {
                  if (tap.live_a) dc[2 * s] += w * da;
                  if (tap.live_b) dc[2 * s + 1] += w * db;
                }
              }
            }
          }
        }
      });
}

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> weight, Var<T> bias, int stride, int pad) {
  require_rank("conv2d(input)", x, 3);
  require_rank("conv2d(weight)", weight, 4);
  const std::int64_t H = x.dim(0), W = x.dim(1), ci = x.dim(2);
  const std::int64_t k = weight.dim(0), co = weight.dim(3);
  if (weight.dim(1) != k || weight.dim(2) != ci || bias.value().rank() != 1 || bias.dim(0) != co) {
    throw DimensionError("conv2d: input " + shape_str(x.shape()) + " weight " + shape_str(weight.shape()) + " bias " +
                         shape_str(bias.shape()));
  }
  if (stride < 1 || pad < 0) throw ContractError("conv2d: stride must be >= 1 and pad >= 0");
  const std::int64_t ho = (H + 2 * pad - k) / stride + 1;
  const std::int64_t wo = (W + 2 * pad - k) / stride + 1;
  if (ho < 1 || wo < 1) throw DimensionError("conv2d: kernel larger than padded input");
  BasicTensor<T> out({ho, wo, co});
  auto xi = x.value().data();
  auto wv = weight.value().data();
  auto bv = bias.value().data();
  auto o = out.data();
  for (std::int64_t oy = 0; oy < ho; ++oy) {
    for (std::int64_t ox = 0; ox < wo; ++ox) {
      T* orow = o.data() + (oy * wo + ox) * co;
      for (std::int64_t c = 0; c < co; ++c) orow[c] = bv[c];
      for (std::int64_t ky = 0; ky < k; ++ky) {
        const std::int64_t iy = oy * stride + ky - pad;
        if (iy < 0 || iy >= H) continue;
        for (std::int64_t kx = 0; kx < k; ++kx) {
          const std::int64_t ix = ox * stride + kx - pad;
          if (ix < 0 || ix >= W) continue;
          const T* xin = xi.data() + (iy * W + ix) * ci;
          const T* wk = wv.data() + (ky * k + kx) * ci * co;
          for (std::int64_t c = 0; c < ci; ++c) {
            const T xv = xin[c];
            const T* wr = wk + c * co;
            for (std::int64_t d = 0; d < co; ++d) orow[d] += xv * wr[d];
          }
        }
      }
    }
  }
  return x.tape().record(
      std::move(out), {x, weight, bias},
      [x, weight, bias, H, W, ci, k, co, ho, wo, stride, pad](const BasicTensor<T>&, const BasicTensor<T>& g,
                                                              Tape<T>& t) {
        auto xi = x.value().data();
        auto wv = weight.value().data();
        auto gs = g.data();
        T* dx = x.requires_grad() ? t.grad_buffer(x).data().data() : nullptr;
        T* dw = weight.requires_grad() ? t.grad_buffer(weight).data().data() : nullptr;
        T* db = bias.requires_grad() ? t.grad_buffer(bias).data().data() : nullptr;
        for (std::int64_t oy = 0; oy < ho; ++oy) {
          for (std::int64_t ox = 0; ox < wo; ++ox) {
            const T* grow = gs.data() + (oy * wo + ox) * co;
            if (db)
              for (std::int64_t d = 0; d < co; ++d) db[d] += grow[d];
            for (std::int64_t ky = 0; ky < k; ++ky) {
              const std::int64_t iy = oy * stride + ky - pad;
              if (iy < 0 || iy >= H) continue;
              for (std::int64_t kx = 0; kx < k; ++kx) {
                const std::int64_t ix = ox * stride + kx - pad;
                if (ix < 0 || ix >= W) continue;
                const std::int64_t xoff = (iy * W + ix) * ci;
                const std::int64_t woff = (ky * k + kx) * ci * co;
                for (std::int64_t c = 0; c < ci; ++c) {
                  const T* wr = wv.data() + woff + c * co;
                  if (dx) {
                    T acc{0};
                    for (std::int64_t d = 0; d < co; ++d) acc += grow[d] * wr[d];
                    dx[xoff + c] += acc;
                  }
                  if (dw) {
                    const T xv = xi[xoff + c];
                    T* dwr = dw + woff + c * co;
                    for (std::int64_t d = 0; d < co; ++d) dwr[d] += xv * grow[d];
                  }
                }
              }
            }
          }
        }
      });
}

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  Tape<T> tape;
  return matmul(tape.constant(a), tape.constant(b)).value();
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& x, std::size_t axis) {
  Tape<T> tape;
  return softmax(tape.constant(x), axis).value();
}

template <typename T>
BasicTensor<T> layer_norm(const BasicTensor<T>& x, const BasicTensor<T>& gamma, const BasicTensor<T>& beta) {
  Tape<T> tape;
  return layer_norm(tape.constant(x), tape.constant(gamma), tape.constant(beta)).value();
}

template <typename T>
BasicTensor<T> bilinear_sample(const BasicTensor<T>& plane, const BasicTensor<T>& coords) {
  Tape<T> tape;
  return bilinear_sample(tape.constant(plane), tape.constant(coords)).value();
}

#define TPV_INSTANTIATE_OPS(T)                                                                     \
  template Var<T> add(Var<T>, Var<T>);                                                             \
  template Var<T> sub(Var<T>, Var<T>);                                                             \
  template Var<T> mul(Var<T>, Var<T>);                                                             \
  template Var<T> scale(Var<T>, T);                                                                \
  template Var<T> add_n(const std::vector<Var<T>>&);                                               \
  template Var<T> add_row_bias(Var<T>, Var<T>);                                                    \
  template Var<T> matmul(Var<T>, Var<T>);                                                          \
  template Var<T> linear(Var<T>, Var<T>, Var<T>);                                                  \
  template Var<T> relu(Var<T>);                                                                    \
  template Var<T> gelu(Var<T>);                                                                    \
  template Var<T> softmax(Var<T>, std::size_t);                                                    \
  template Var<T> layer_norm(Var<T>, Var<T>, Var<T>, T);                                           \
  template Var<T> reshape(Var<T>, Shape);                                                          \
  template Var<T> sum(Var<T>);                                                                     \
  template Var<T> mean(Var<T>);                                                                    \
  template Var<T> slice_cols(Var<T>, std::int64_t, std::int64_t);                                  \
  template Var<T> slice_rows(Var<T>, std::int64_t, std::int64_t);                                  \
  template Var<T> concat_rows(const std::vector<Var<T>>&);                                         \
  template Var<T> gather_rows(Var<T>, std::vector<std::int64_t>);                                  \
  template Var<T> scatter_add_rows(Var<T>, std::vector<std::int64_t>, std::int64_t);               \
  template Var<T> scale_rows(Var<T>, std::vector<T>);                                              \
  template Var<T> bilinear_sample(Var<T>, Var<T>);                                                 \
  template Var<T> deformable_sample(Var<T>, Var<T>, Var<T>);                                       \
  template Var<T> conv2d(Var<T>, Var<T>, Var<T>, int, int);                                        \
  template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);                    \
  template BasicTensor<T> softmax(const BasicTensor<T>&, std::size_t);                             \
  template BasicTensor<T> layer_norm(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&); \
  template BasicTensor<T> bilinear_sample(const BasicTensor<T>&, const BasicTensor<T>&);

TPV_INSTANTIATE_OPS(float)
TPV_INSTANTIATE_OPS(double)

#undef TPV_INSTANTIATE_OPS


}  // namespace tpv::numeric
