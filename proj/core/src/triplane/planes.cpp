#include "tpv/triplane/planes.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <string>

#include "tpv/errors.hpp"
#include "tpv/numeric/ops.hpp"
#include "tpv/numeric/snapshot.hpp"

namespace tpv::triplane {

namespace {

using numeric::Shape;
using numeric::Tape;
using numeric::detail::axis_tap;

double snap(double x) {
  const double r = std::round(x);
  return std::abs(x - r) < 1e-9 ? r : x;
}

std::array<double, 2> sample_position(const TpvGridSpec& spec, View view, const Vec3& p) {
  const auto g = geometry::world_to_plane(spec, view, p);
  return {snap(geometry::to_sample(g.a)), snap(geometry::to_sample(g.b))};
}

// acc[c] += bilinear(plane, a, b)[c], weights and accumulation in double.
template <typename T>
void sample_into(const BasicTensor<T>& plane, double a, double b, double* acc) {
  const std::int64_t A = plane.dim(0), B = plane.dim(1), C = plane.dim(2);
  const auto ta = axis_tap(a, A);
  const auto tb = axis_tap(b, B);
  const T* base = plane.data().data();
  const T* v00 = base + (ta.lo * B + tb.lo) * C;
  const T* v01 = base + (ta.lo * B + tb.hi) * C;
  const T* v10 = base + (ta.hi * B + tb.lo) * C;
  const T* v11 = base + (ta.hi * B + tb.hi) * C;
  const double w00 = (1.0 - ta.frac) * (1.0 - tb.frac), w01 = (1.0 - ta.frac) * tb.frac;
  const double w10 = ta.frac * (1.0 - tb.frac), w11 = ta.frac * tb.frac;
  for (std::int64_t c = 0; c < C; ++c) {
    acc[c] += w00 * v00[c] + w01 * v01[c] + w10 * v10[c] + w11 * v11[c];
  }
}

}  // namespace

template <typename T>
BasicPlanes<T> BasicPlanes<T>::zeros(const TpvGridSpec& spec, std::int64_t channels) {
  spec.validate();
  if (channels < 1) throw ConfigError("plane channel count must be >= 1");
  BasicPlanes p;
  p.spec = spec;
  p.hw = BasicTensor<T>({spec.H, spec.W, channels});
  p.dh = BasicTensor<T>({spec.D, spec.H, channels});
  p.wd = BasicTensor<T>({spec.W, spec.D, channels});
  return p;
}

template <typename T>
const BasicTensor<T>& BasicPlanes<T>::plane(View v) const {
  return v == View::Top ? hw : (v == View::Side ? dh : wd);
}

template <typename T>
BasicTensor<T>& BasicPlanes<T>::plane(View v) {
  return v == View::Top ? hw : (v == View::Side ? dh : wd);
}

template <typename T>
void BasicPlanes<T>::validate() const {
  spec.validate();
  const std::int64_t C = channels();
  for (View v : geometry::kViews) {
    const auto& t = plane(v);
    const auto e = spec.plane_extent(v);
    if (t.rank() != 3 || t.dim(0) != e[0] || t.dim(1) != e[1] || t.dim(2) != C || C < 1) {
      throw DimensionError(std::string(geometry::view_name(v)) + " plane has shape " + numeric::shape_str(t.shape()) +
                           ", expected [" + std::to_string(e[0]) + ", " + std::to_string(e[1]) + ", " +
                           std::to_string(C) + "]");
    }
  }
}

template struct BasicPlanes<float>;
template struct BasicPlanes<double>;

template <typename T>
BasicTensor<T> plane_sample_coords(const TpvGridSpec& spec, View view, std::span<const Vec3> points) {
  BasicTensor<T> out({static_cast<std::int64_t>(points.size()), 2});
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto s = sample_position(spec, view, points[i]);
    out[2 * i] = static_cast<T>(s[0]);
    out[2 * i + 1] = static_cast<T>(s[1]);
  }
  return out;
}

template BasicTensor<float> plane_sample_coords<float>(const TpvGridSpec&, View, std::span<const Vec3>);
template BasicTensor<double> plane_sample_coords<double>(const TpvGridSpec&, View, std::span<const Vec3>);

Tensor query_points(const TpvPlanes& planes, std::span<const Vec3> points) {
  planes.validate();
  const std::int64_t C = planes.channels();
  const std::int64_t N = static_cast<std::int64_t>(points.size());
  Tensor out({N, C});
  std::vector<double> acc(static_cast<std::size_t>(C));
  for (std::int64_t n = 0; n < N; ++n) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (View v : geometry::kViews) {
      if (planes.bev && v != View::Top) continue;
      const auto s = sample_position(planes.spec, v, points[n]);
      sample_into(planes.plane(v), s[0], s[1], acc.data());
    }
    for (std::int64_t c = 0; c < C; ++c) out[n * C + c] = static_cast<float>(acc[c]);
  }
  return out;
}

template <typename T>
Var<T> query_points(const PlaneVars<T>& planes, const TpvGridSpec& spec, std::span<const Vec3> points) {
  Tape<T>& tape = planes.hw.tape();
  auto sample = [&](View v) {
    return numeric::bilinear_sample(planes.plane(v), tape.constant(plane_sample_coords<T>(spec, v, points)));
  };
  Var<T> out = sample(View::Top);
  if (planes.bev) return out;
  return numeric::add(numeric::add(out, sample(View::Side)), sample(View::Front));
}

template Var<float> query_points<float>(const PlaneVars<float>&, const TpvGridSpec&, std::span<const Vec3>);
template Var<double> query_points<double>(const PlaneVars<double>&, const TpvGridSpec&, std::span<const Vec3>);

namespace {

void check_budget(const TpvGridSpec& spec, std::int64_t C, std::int64_t budget_bytes, std::size_t elem) {
  const double bytes = static_cast<double>(spec.H) * spec.W * spec.D * C * static_cast<double>(elem);
  if (bytes > static_cast<double>(budget_bytes)) {
    throw ResourceError("dense voxel features need " + std::to_string(static_cast<long long>(bytes)) +
                        " bytes, over the budget of " + std::to_string(budget_bytes) +
                        "; query points instead of materialising the volume");
  }
}

}  // namespace

Tensor voxel_features(const TpvPlanes& planes, std::int64_t budget_bytes) {
  planes.validate();
  const auto& g = planes.spec;
  const std::int64_t C = planes.channels();
  check_budget(g, C, budget_bytes, sizeof(float));
  Tensor out({g.H, g.W, g.D, C});
  const float* hw = planes.hw.data().data();
  const float* dh = planes.dh.data().data();
  const float* wd = planes.wd.data().data();
  float* o = out.data().data();
  for (std::int64_t h = 0; h < g.H; ++h)
    for (std::int64_t w = 0; w < g.W; ++w)
      for (std::int64_t d = 0; d < g.D; ++d) {
        const float* a = hw + (h * g.W + w) * C;
        const float* b = dh + (d * g.H + h) * C;
        const float* c = wd + (w * g.D + d) * C;
        float* dst = o + ((h * g.W + w) * g.D + d) * C;
        for (std::int64_t k = 0; k < C; ++k) {
          // Same double accumulation as query_points so the two agree bitwise.
          double acc = 0.0;
          acc += static_cast<double>(a[k]);
          if (!planes.bev) {
            acc += static_cast<double>(b[k]);
            acc += static_cast<double>(c[k]);
          }
          dst[k] = static_cast<float>(acc);
        }
      }
  return out;
}

template <typename T>
Var<T> voxel_features(const PlaneVars<T>& planes, const TpvGridSpec& g, std::int64_t budget_bytes) {
  const std::int64_t C = planes.hw.dim(2);
  check_budget(g, C, budget_bytes, sizeof(T));
  const bool bev = planes.bev;
  BasicTensor<T> out({g.H * g.W * g.D, C});
  const T* hw = planes.hw.value().data().data();
  const T* dh = planes.dh.value().data().data();
  const T* wd = planes.wd.value().data().data();
  T* o = out.data().data();
  for (std::int64_t h = 0; h < g.H; ++h)
    for (std::int64_t w = 0; w < g.W; ++w)
      for (std::int64_t d = 0; d < g.D; ++d) {
        const T* a = hw + (h * g.W + w) * C;
        const T* b = dh + (d * g.H + h) * C;
        const T* c = wd + (w * g.D + d) * C;
        T* dst = o + ((h * g.W + w) * g.D + d) * C;
        for (std::int64_t k = 0; k < C; ++k) dst[k] = bev ? a[k] : (a[k] + b[k]) + c[k];
      }
  const Var<T> vhw = planes.hw, vdh = planes.dh, vwd = planes.wd;
  std::vector<Var<T>> inputs = {vhw};
  if (!bev) inputs = {vhw, vdh, vwd};
  return vhw.tape().record(std::move(out), inputs,
                           [=](const BasicTensor<T>&, const BasicTensor<T>& gr, Tape<T>& t) {
                             const T* go = gr.data().data();
                             auto* ghw = vhw.requires_grad() ? t.grad_buffer(vhw).data().data() : nullptr;
                             T* gdh = !bev && vdh.requires_grad() ? t.grad_buffer(vdh).data().data() : nullptr;
                             T* gwd = !bev && vwd.requires_grad() ? t.grad_buffer(vwd).data().data() : nullptr;
                             for (std::int64_t h = 0; h < g.H; ++h)
                               for (std::int64_t w = 0; w < g.W; ++w)
                                 for (std::int64_t d = 0; d < g.D; ++d) {
                                   const T* src = go + ((h * g.W + w) * g.D + d) * C;
                                   if (ghw) {
                                     T* dst = ghw + (h * g.W + w) * C;
                                     for (std::int64_t k = 0; k < C; ++k) dst[k] += src[k];
                                   }
                                   if (gdh) {
                                     T* dst = gdh + (d * g.H + h) * C;
                                     for (std::int64_t k = 0; k < C; ++k) dst[k] += src[k];
                                   }
                                   if (gwd) {
                                     T* dst = gwd + (w * g.D + d) * C;
                                     for (std::int64_t k = 0; k < C; ++k) dst[k] += src[k];
                                   }
                                 }
                           });
}

template Var<float> voxel_features<float>(const PlaneVars<float>&, const TpvGridSpec&, std::int64_t);
template Var<double> voxel_features<double>(const PlaneVars<double>&, const TpvGridSpec&, std::int64_t);

namespace {

// Old sample position of each new sample along one axis.
std::vector<double> resample_positions(std::int64_t n_old, double s_old, double o_old, std::int64_t n_new,
                                       double s_new, double o_new) {
  std::vector<double> out(static_cast<std::size_t>(n_new));
  for (std::int64_t j = 0; j < n_new; ++j) {
    const double world = (static_cast<double>(j) + 0.5 - static_cast<double>(n_new) / 2.0) * s_new + o_new;
    out[j] = snap((world - o_old) / s_old + static_cast<double>(n_old) / 2.0 - 0.5);
  }
  return out;
}

Tensor resample_plane(const Tensor& plane, const std::vector<double>& pa, const std::vector<double>& pb) {
  const std::int64_t C = plane.dim(2);
  const std::int64_t A = static_cast<std::int64_t>(pa.size()), B = static_cast<std::int64_t>(pb.size());
  Tensor out({A, B, C});
  std::vector<double> acc(static_cast<std::size_t>(C));
  for (std::int64_t i = 0; i < A; ++i)
    for (std::int64_t j = 0; j < B; ++j) {
      std::fill(acc.begin(), acc.end(), 0.0);
      sample_into(plane, pa[i], pb[j], acc.data());
      for (std::int64_t c = 0; c < C; ++c) out[(i * B + j) * C + c] = static_cast<float>(acc[c]);
    }
  return out;
}

}  // namespace

TpvPlanes resize_planes(const TpvPlanes& planes, double factor) {
  planes.validate();
  if (!(factor > 0.0) || !std::isfinite(factor)) throw ConfigError("resize factor must be positive");
  const auto& g = planes.spec;
  TpvGridSpec ng = g;
  ng.H = static_cast<std::int64_t>(std::llround(static_cast<double>(g.H) * factor));
  ng.W = static_cast<std::int64_t>(std::llround(static_cast<double>(g.W) * factor));
  ng.D = static_cast<std::int64_t>(std::llround(static_cast<double>(g.D) * factor));
  if (ng.H < 1 || ng.W < 1 || ng.D < 1) {
    throw ConfigError("resize by " + std::to_string(factor) + " leaves an extent below one cell");
  }
  if (factor == 1.0) return planes;
  ng.cell_size = g.cell_size / factor;
  const double k = std::round(factor);
  if (k == factor && static_cast<std::int64_t>(k) % 2 == 0) {
    ng.origin = g.origin - Vec3::Constant(0.5 * ng.cell_size);
  }

  const auto ph = resample_positions(g.H, g.cell_size, g.origin.x(), ng.H, ng.cell_size, ng.origin.x());
  const auto pw = resample_positions(g.W, g.cell_size, g.origin.y(), ng.W, ng.cell_size, ng.origin.y());
  const auto pd = resample_positions(g.D, g.cell_size, g.origin.z(), ng.D, ng.cell_size, ng.origin.z());
  TpvPlanes out;
  out.spec = ng;
  out.bev = planes.bev;
  out.hw = resample_plane(planes.hw, ph, pw);
  out.dh = resample_plane(planes.dh, pd, ph);
  out.wd = resample_plane(planes.wd, pw, pd);
  return out;
}

TpvPlanes resize_planes(const TpvPlanes& planes, std::array<std::int64_t, 3> extents) {
  const auto& g = planes.spec;
  for (auto e : extents) {
    if (e < 1) throw ConfigError("resize target extents must be >= 1");
  }
  const double f = static_cast<double>(extents[0]) / static_cast<double>(g.H);
  const double fw = static_cast<double>(extents[1]) / static_cast<double>(g.W);
  const double fd = static_cast<double>(extents[2]) / static_cast<double>(g.D);
  if (std::abs(fw - f) > 1e-12 * f || std::abs(fd - f) > 1e-12 * f) {
    throw ConfigError("resize target " + std::to_string(extents[0]) + "x" + std::to_string(extents[1]) + "x" +
                      std::to_string(extents[2]) + " needs one scale factor across all axes");
  }
  return resize_planes(planes, f);
}

TpvPlanes bev_mode(const TpvPlanes& planes) {
  planes.validate();
  TpvPlanes out = planes;
  std::fill(out.dh.storage().begin(), out.dh.storage().end(), 0.0f);
  std::fill(out.wd.storage().begin(), out.wd.storage().end(), 0.0f);
  out.bev = true;
  return out;
}

MemoryAccount memory_account(const TpvGridSpec& spec, std::int64_t channels) {
  MemoryAccount m;
  m.plane_values = channels * (spec.H * spec.W + spec.D * spec.H + spec.W * spec.D);
  m.voxel_values = channels * spec.H * spec.W * spec.D;
  return m;
}

namespace {

std::filesystem::path with_suffix(const std::filesystem::path& prefix, const char* suffix) {
  return std::filesystem::path(prefix.string() + suffix);
}

}  // namespace

void save_planes(const std::filesystem::path& prefix, const TpvPlanes& planes) {
  planes.validate();
  numeric::save_tensor(with_suffix(prefix, ".hw.tpvt"), planes.hw);
  numeric::save_tensor(with_suffix(prefix, ".dh.tpvt"), planes.dh);
  numeric::save_tensor(with_suffix(prefix, ".wd.tpvt"), planes.wd);
  std::ofstream out(with_suffix(prefix, ".grid"));
  if (!out) throw DataError("cannot write " + with_suffix(prefix, ".grid").string());
  const auto& g = planes.spec;
  out << std::setprecision(std::numeric_limits<double>::max_digits10) << "TPVGRID1 " << g.H << ' ' << g.W << ' '
      << g.D << ' ' << g.cell_size << ' ' << g.origin.x() << ' ' << g.origin.y() << ' ' << g.origin.z() << ' '
      << (planes.bev ? 1 : 0) << '\n';
}

TpvPlanes load_planes(const std::filesystem::path& prefix) {
  const auto grid_path = with_suffix(prefix, ".grid");
  std::ifstream in(grid_path);
  if (!in) throw DataError("cannot open " + grid_path.string());
  std::string magic;
  TpvPlanes p;
  int bev = 0;
  in >> magic >> p.spec.H >> p.spec.W >> p.spec.D >> p.spec.cell_size >> p.spec.origin.x() >> p.spec.origin.y() >>
      p.spec.origin.z() >> bev;
  if (!in || magic != "TPVGRID1") throw DataError("malformed grid sidecar " + grid_path.string());
  p.bev = bev != 0;
  p.hw = numeric::load_tensor(with_suffix(prefix, ".hw.tpvt"));
  p.dh = numeric::load_tensor(with_suffix(prefix, ".dh.tpvt"));
  p.wd = numeric::load_tensor(with_suffix(prefix, ".wd.tpvt"));
  try {
    p.validate();
  } catch (const Error& e) {
    throw DataError(std::string("plane snapshot ") + prefix.string() + ": " + e.what());
  }
  return p;
}

}  // namespace tpv::triplane
