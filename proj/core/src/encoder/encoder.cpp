#include "tpv/encoder/encoder.hpp"

#include <cmath>
#include <random>

#include "tpv/errors.hpp"
#include "tpv/geometry/reference_points.hpp"
#include "tpv/numeric/ops.hpp"

namespace tpv::encoder {

using geometry::kViews;
using geometry::view_name;
using numeric::Shape;

namespace {

int vi(View v) { return static_cast<int>(v); }

std::string block_name(int block) { return std::string(kEncoderPrefix) + ".block" + std::to_string(block); }

std::string view_str(View v) { return std::string(view_name(v)); }

Shape plane_shape(const TpvGridSpec& g, View v, std::int64_t C) {
  const auto [a, b] = g.plane_extent(v);
  return {a, b, C};
}

// CVHA references per query of `view`, summed over the planes present.
std::int64_t cvha_refs(const EncoderConfig& c, View v) {
  if (c.bev) return c.cvha_same;
  return c.cvha_same + 2 * c.cvha_cross_count(v);
}

template <typename T>
class Init {
 public:
  Init(ParameterStore<T>& store, std::uint64_t seed) : store_(store), rng_(seed) {}

  // Variance 1/fan_in.
  void dense(const std::string& name, Shape shape, std::int64_t fan_in) {
    BasicTensor<T> t(std::move(shape));
    const double bound = std::sqrt(3.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (auto& v : t.storage()) v = static_cast<T>(u(rng_));
    store_.add(name, std::move(t));
  }
  void uniform(const std::string& name, Shape shape, double bound) {
    BasicTensor<T> t(std::move(shape));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (auto& v : t.storage()) v = static_cast<T>(u(rng_));
    store_.add(name, std::move(t));
  }
  void zeros(const std::string& name, Shape shape) { store_.add(name, BasicTensor<T>(std::move(shape))); }
  void fill(const std::string& name, Shape shape, T value) { store_.add(name, BasicTensor<T>::full(std::move(shape), value)); }
  void tensor(const std::string& name, BasicTensor<T> t) { store_.add(name, std::move(t)); }

  void linear(const std::string& name, std::int64_t in, std::int64_t out) {
    dense(name + ".weight", {in, out}, in);
    zeros(name + ".bias", {out});
  }
  void norm(const std::string& name, std::int64_t C) {
    fill(name + ".gamma", {C}, T(1));
    zeros(name + ".beta", {C});
  }
  void offsets(const std::string& name, std::int64_t C, int heads, int points, std::int64_t refs) {
    zeros(name + ".weight", {C, heads * points * refs * 2});
    tensor(name + ".bias", ring_offset_bias<T>(heads, points, refs));
  }

 private:
  ParameterStore<T>& store_;
  std::mt19937_64 rng_;
};

template <typename T>
Var<T> param(Tape<T>& tape, const ParameterStore<T>& store, const std::string& name) {
  return tape.parameter(store, name);
}

template <typename T>
Var<T> linear_named(Tape<T>& tape, const ParameterStore<T>& store, const std::string& name, Var<T> x) {
  return numeric::linear(x, param(tape, store, name + ".weight"), param(tape, store, name + ".bias"));
}

template <typename T>
Var<T> norm_named(Tape<T>& tape, const ParameterStore<T>& store, const EncoderConfig& c, const std::string& name,
                  Var<T> x) {
  if (c.bypass_norm) return x;
  return numeric::layer_norm(x, param(tape, store, name + ".gamma"), param(tape, store, name + ".beta"));
}

template <typename T>
DaProjections<T> projections(Tape<T>& tape, const ParameterStore<T>& store, const std::string& name) {
  return {param(tape, store, name + ".offset_proj.weight"), param(tape, store, name + ".offset_proj.bias"),
          param(tape, store, name + ".weight_proj.weight"), param(tape, store, name + ".weight_proj.bias")};
}

template <typename T>
QueryVars<T> feed_forward(Tape<T>& tape, const ParameterStore<T>& store, const EncoderConfig& c, int block,
                          const QueryVars<T>& x) {
  const auto b = block_name(block);
  QueryVars<T> out = x;
  for (View v : c.views()) {
    auto h = norm_named(tape, store, c, b + ".ffn_norm", x[vi(v)]);
    h = numeric::gelu(linear_named(tape, store, b + ".ffn.fc1", h));
    out[vi(v)] = numeric::add(x[vi(v)], linear_named(tape, store, b + ".ffn.fc2", h));
  }
  return out;
}

}  // namespace

std::vector<ScaleGeometry> feature_geometry(const BackboneConfig& backbone, std::int64_t image_height,
                                            std::int64_t image_width) {
  backbone.validate();
  std::vector<ScaleGeometry> stages;
  std::int64_t h = image_height, w = image_width;
  for (std::size_t i = 0; i < backbone.stage_channels.size(); ++i) {
    h = (h - 1) / 2 + 1;
    w = (w - 1) / 2 + 1;
    if (h < 1 || w < 1) throw DimensionError("images too small for the backbone stages");
    stages.push_back({h, w, static_cast<double>(h) / static_cast<double>(image_height),
                      static_cast<double>(w) / static_cast<double>(image_width)});
  }
  return {stages.end() - backbone.scales, stages.end()};
}

EncoderPlan EncoderPlan::build(const EncoderConfig& config, const CameraRig& rig) {
  config.validate();
  rig.validate();
  EncoderPlan plan;
  plan.cameras = rig.size();
  plan.image_width = rig.cameras.front().width;
  plan.image_height = rig.cameras.front().height;
  for (const auto& cam : rig.cameras) {
    if (cam.width != plan.image_width || cam.height != plan.image_height) {
      throw DimensionError("all cameras must share image extents");
    }
  }
  plan.scales = feature_geometry(config.backbone, plan.image_height, plan.image_width);
  const auto& g = config.grid;
  const std::size_t L = plan.scales.size();

  for (View v : config.views()) {
    auto& vp = plan.ica[vi(v)];
    const auto [A, B] = g.plane_extent(v);
    const auto R = config.ica_ref_count(v);
    vp.refs = R;
    vp.inv_valid.assign(static_cast<std::size_t>(A * B), 0.0);
    vp.seen.assign(static_cast<std::size_t>(A * B), 0.0);
    std::vector<IcaBatch> per_camera(rig.size());
    for (std::size_t c = 0; c < rig.size(); ++c) {
      per_camera[c].camera = static_cast<int>(c);
      per_camera[c].refs.resize(L);
    }
    for (std::int64_t i = 0; i < A; ++i) {
      for (std::int64_t j = 0; j < B; ++j) {
        const auto row = i * B + j;
        const auto pts = geometry::ica_reference_points(v, i, j, g, R);
        const auto proj = geometry::project_to_pixels(pts, rig);
        const auto valid = geometry::valid_camera_set(proj);
        if (valid.empty()) continue;
        vp.inv_valid[row] = 1.0 / static_cast<double>(valid.size());
        vp.seen[row] = 1.0;
        for (int c : valid) {
          auto& batch = per_camera[c];
          batch.rows.push_back(row);
          for (std::int64_t r = 0; r < R; ++r) {
            const auto& px = proj[c][r];
            batch.live.push_back(px.valid ? 1 : 0);
            for (std::size_t s = 0; s < L; ++s) {
              const auto& sg = plan.scales[s];
              batch.refs[s].push_back(px.valid ? px.v * sg.row_scale - 0.5 : 0.0);
              batch.refs[s].push_back(px.valid ? px.u * sg.col_scale - 0.5 : 0.0);
            }
          }
        }
      }
    }
    for (auto& batch : per_camera) {
      if (!batch.rows.empty()) vp.batches.push_back(std::move(batch));
    }
  }

  const auto options = config.cvha_options();
  plan.cvha.resize(static_cast<std::size_t>(config.blocks()));
  for (int b = 0; b < config.blocks(); ++b) {
    const auto seed = geometry::mix_seed(config.seed, {static_cast<std::uint64_t>(b)});
    for (View v : config.views()) {
      auto& cp = plan.cvha[b][vi(v)];
      const auto [A, B] = g.plane_extent(v);
      for (std::int64_t i = 0; i < A; ++i) {
        for (std::int64_t j = 0; j < B; ++j) {
          const auto refs = geometry::cvha_reference_points(v, i, j, g, options, seed);
          for (View q : config.views()) {
            const auto& pts = refs.on(q);
            cp.counts[vi(q)] = static_cast<std::int64_t>(pts.size());
            for (const auto& p : pts) {
              cp.refs[vi(q)].push_back(geometry::to_sample(p.a));
              cp.refs[vi(q)].push_back(geometry::to_sample(p.b));
            }
          }
        }
      }
    }
  }
  return plan;
}

template <typename T>
void init_encoder(ParameterStore<T>& store, const EncoderConfig& c) {
  c.validate();
  Init<T> init(store, geometry::mix_seed(c.seed, {0x696e6974ULL}));
  const std::string p = kEncoderPrefix;
  const auto C = c.channels;
  for (View v : c.views()) init.uniform(p + ".query." + view_str(v), plane_shape(c.grid, v, C), 0.5);
  for (View v : c.views()) init.zeros(p + ".pos." + view_str(v), plane_shape(c.grid, v, C));

  std::int64_t in = 3;
  for (std::size_t i = 0; i < c.backbone.stage_channels.size(); ++i) {
    const auto out = c.backbone.stage_channels[i];
    const auto name = p + ".backbone.stage" + std::to_string(i);
    init.dense(name + ".weight", {3, 3, in, out}, 9 * in);
    init.zeros(name + ".bias", {out});
    in = out;
  }
  const auto n_stages = static_cast<int>(c.backbone.stage_channels.size());
  for (int s = 0; s < c.backbone.scales; ++s) {
    const auto stage = n_stages - c.backbone.scales + s;
    init.linear(p + ".backbone.proj" + std::to_string(s), c.backbone.stage_channels[stage], C);
  }

  for (int b = 0; b < c.blocks(); ++b) {
    const auto name = block_name(b);
    const bool hcab = b < c.hcab_blocks;
    init.norm(name + ".cvha_norm", C);
    init.linear(name + ".cvha.value_proj", C, C);
    init.linear(name + ".cvha.output_proj", C, C);
    for (View v : c.views()) {
      const auto refs = cvha_refs(c, v);
      init.offsets(name + ".cvha." + view_str(v) + ".offset_proj", C, c.heads, c.points_per_head, refs);
      init.zeros(name + ".cvha." + view_str(v) + ".weight_proj.weight", {C, c.heads * c.points_per_head * refs});
      init.zeros(name + ".cvha." + view_str(v) + ".weight_proj.bias", {c.heads * c.points_per_head * refs});
    }
    if (hcab) {
      init.norm(name + ".ica_norm", C);
      init.linear(name + ".ica.value_proj", C, C);
      init.linear(name + ".ica.output_proj", C, C);
      for (View v : c.views()) {
        const auto refs = c.ica_ref_count(v) * c.backbone.scales;
        init.offsets(name + ".ica." + view_str(v) + ".offset_proj", C, c.heads, c.points_per_head, refs);
        init.zeros(name + ".ica." + view_str(v) + ".weight_proj.weight", {C, c.heads * c.points_per_head * refs});
        init.zeros(name + ".ica." + view_str(v) + ".weight_proj.bias", {c.heads * c.points_per_head * refs});
      }
    }
    init.norm(name + ".ffn_norm", C);
    init.linear(name + ".ffn.fc1", C, C * c.ffn_expansion);
    init.linear(name + ".ffn.fc2", C * c.ffn_expansion, C);
  }
  init.norm(p + ".final_norm", C);
}

template <typename T>
void zero_residual_branches(ParameterStore<T>& store, const EncoderConfig& c) {
  auto zero = [&](const std::string& name) {
    for (auto& v : store.at(name).tensor.storage()) v = T(0);
  };
  for (int b = 0; b < c.blocks(); ++b) {
    const auto name = block_name(b);
    for (const char* lin : {".cvha.output_proj", ".ffn.fc2"}) {
      zero(name + lin + ".weight");
      zero(name + lin + ".bias");
    }
    if (b < c.hcab_blocks) {
      zero(name + ".ica.output_proj.weight");
      zero(name + ".ica.output_proj.bias");
    }
  }
}

template <typename T>
ImageFeatures<T> backbone(Tape<T>& tape, const ParameterStore<T>& store, const EncoderConfig& c,
                          const std::vector<BasicTensor<T>>& images) {
  if (images.empty()) throw DimensionError("backbone needs at least one image");
  const auto& first = images.front();
  if (first.rank() != 3 || first.dim(2) != 3) throw DimensionError("images must be [H x W x 3]");
  for (const auto& img : images) {
    if (img.shape() != first.shape()) {
      throw DimensionError("image extents differ: " + numeric::shape_str(img.shape()) + " vs " +
                           numeric::shape_str(first.shape()));
    }
  }
  const std::string p = std::string(kEncoderPrefix) + ".backbone";
  const auto n_stages = static_cast<int>(c.backbone.stage_channels.size());
  ImageFeatures<T> feats;
  for (const auto& img : images) {
    auto x = tape.constant(img);
    std::vector<Var<T>> stages;
    for (int i = 0; i < n_stages; ++i) {
      const auto name = p + ".stage" + std::to_string(i);
      x = numeric::gelu(numeric::conv2d(x, param(tape, store, name + ".weight"), param(tape, store, name + ".bias"), 2, 1));
      stages.push_back(x);
    }
    std::vector<Var<T>> maps;
    for (int s = 0; s < c.backbone.scales; ++s) {
      maps.push_back(linear_named(tape, store, p + ".proj" + std::to_string(s), stages[n_stages - c.backbone.scales + s]));
    }
    feats.maps.push_back(std::move(maps));
  }
  return feats;
}

template <typename T>
QueryVars<T> initial_queries(Tape<T>& tape, const ParameterStore<T>& store, const EncoderConfig& c) {
  QueryVars<T> q;
  const std::string p = kEncoderPrefix;
  for (View v : c.views()) {
    const auto [A, B] = c.grid.plane_extent(v);
    auto sum = numeric::add(param(tape, store, p + ".query." + view_str(v)), param(tape, store, p + ".pos." + view_str(v)));
    q[vi(v)] = numeric::reshape(sum, {A * B, c.channels});
  }
  return q;
}

template <typename T>
QueryVars<T> cross_view_hybrid_attention(Tape<T>& tape, const ParameterStore<T>& store, const EncoderConfig& c,
                                         const EncoderPlan& plan, int block, const QueryVars<T>& x) {
  const auto name = block_name(block);
  const auto& bp = plan.cvha.at(static_cast<std::size_t>(block));
  QueryVars<T> xn, values, out = x;
  for (View v : c.views()) {
    xn[vi(v)] = norm_named(tape, store, c, name + ".cvha_norm", x[vi(v)]);
    values[vi(v)] = numeric::reshape(linear_named(tape, store, name + ".cvha.value_proj", xn[vi(v)]),
                                     plane_shape(c.grid, v, c.channels));
  }
  auto out_w = param(tape, store, name + ".cvha.output_proj.weight");
  auto out_b = param(tape, store, name + ".cvha.output_proj.bias");
  for (View v : c.views()) {
    const auto& vp = bp[vi(v)];
    std::vector<DaSource<T>> sources;
    for (View q : c.views()) {
      if (vp.counts[vi(q)] == 0) continue;
      sources.push_back({values[vi(q)], vp.refs[vi(q)], vp.counts[vi(q)], {}});
    }
    auto upd = deformable_attention(xn[vi(v)], sources, projections(tape, store, name + ".cvha." + view_str(v)),
                                    c.heads, c.points_per_head, out_w, out_b);
    out[vi(v)] = numeric::add(x[vi(v)], upd);
  }
  return out;
}

template <typename T>
QueryVars<T> image_cross_attention(Tape<T>& tape, const ParameterStore<T>& store, const EncoderConfig& c,
                                   const EncoderPlan& plan, int block, const QueryVars<T>& x,
                                   const ImageFeatures<T>& feats) {
  if (feats.maps.size() != plan.cameras) {
    throw DimensionError("image features cover " + std::to_string(feats.maps.size()) + " cameras, the plan " +
                         std::to_string(plan.cameras));
  }
  const auto name = block_name(block);
  std::vector<std::vector<Var<T>>> values(feats.maps.size());
  for (std::size_t cam = 0; cam < feats.maps.size(); ++cam) {
    for (const auto& map : feats.maps[cam]) values[cam].push_back(linear_named(tape, store, name + ".ica.value_proj", map));
  }
  auto out_w = param(tape, store, name + ".ica.output_proj.weight");
  auto out_b = param(tape, store, name + ".ica.output_proj.bias");
  QueryVars<T> out = x;
  for (View v : c.views()) {
    const auto& vp = plan.ica[vi(v)];
    if (vp.batches.empty()) continue;
    auto xn = norm_named(tape, store, c, name + ".ica_norm", x[vi(v)]);
    const auto proj = projections(tape, store, name + ".ica." + view_str(v));
    const auto N = x[vi(v)].dim(0);
    std::vector<Var<T>> parts;
    for (const auto& batch : vp.batches) {
      std::vector<DaSource<T>> sources;
      for (std::size_t s = 0; s < values[batch.camera].size(); ++s) {
        sources.push_back({values[batch.camera][s], batch.refs[s], vp.refs, batch.live});
      }
      auto agg = deformable_aggregate(numeric::gather_rows(xn, batch.rows), sources, proj, c.heads, c.points_per_head);
      std::vector<T> inv;
      inv.reserve(batch.rows.size());
      for (auto r : batch.rows) inv.push_back(static_cast<T>(vp.inv_valid[r]));
      parts.push_back(numeric::scatter_add_rows(numeric::scale_rows(agg, std::move(inv)), batch.rows, N));
    }
    auto mean = parts.size() == 1 ? parts.front() : numeric::add_n(parts);
    std::vector<T> seen(vp.seen.begin(), vp.seen.end());
    auto upd = numeric::scale_rows(numeric::linear(mean, out_w, out_b), std::move(seen));
    out[vi(v)] = numeric::add(x[vi(v)], upd);
  }
  return out;
}

template <typename T>
QueryVars<T> hcab_block(Tape<T>& tape, const ParameterStore<T>& store, const EncoderConfig& c,
                        const EncoderPlan& plan, int block, const QueryVars<T>& queries,
                        const ImageFeatures<T>& features) {
  auto x = cross_view_hybrid_attention(tape, store, c, plan, block, queries);
  x = image_cross_attention(tape, store, c, plan, block, x, features);
  return feed_forward(tape, store, c, block, x);
}

template <typename T>
QueryVars<T> hab_block(Tape<T>& tape, const ParameterStore<T>& store, const EncoderConfig& c,
                       const EncoderPlan& plan, int block, const QueryVars<T>& queries) {
  return feed_forward(tape, store, c, block, cross_view_hybrid_attention(tape, store, c, plan, block, queries));
}

template <typename T>
PlaneVars<T> encode(Tape<T>& tape, const ParameterStore<T>& store, const EncoderConfig& c, const EncoderPlan& plan,
                    const std::vector<BasicTensor<T>>& images) {
  if (images.size() != plan.cameras) {
    throw DimensionError(std::to_string(images.size()) + " images for a rig of " + std::to_string(plan.cameras) +
                         " cameras");
  }
  for (const auto& img : images) {
    if (img.rank() != 3 || img.dim(0) != plan.image_height || img.dim(1) != plan.image_width) {
      throw DimensionError("image of shape " + numeric::shape_str(img.shape()) + " does not match the rig's " +
                           std::to_string(plan.image_height) + "x" + std::to_string(plan.image_width));
    }
  }
  const auto feats = backbone(tape, store, c, images);
  auto x = initial_queries(tape, store, c);
  for (int b = 0; b < c.hcab_blocks; ++b) x = hcab_block(tape, store, c, plan, b, x, feats);
  for (int b = c.hcab_blocks; b < c.blocks(); ++b) x = hab_block(tape, store, c, plan, b, x);

  PlaneVars<T> planes;
  planes.bev = c.bev;
  const std::string p = kEncoderPrefix;
  for (View v : c.views()) {
    auto y = norm_named(tape, store, c, p + ".final_norm", x[vi(v)]);
    y = numeric::reshape(y, plane_shape(c.grid, v, c.channels));
    (v == View::Top ? planes.hw : (v == View::Side ? planes.dh : planes.wd)) = y;
  }
  if (c.bev) {
    planes.dh = tape.constant(BasicTensor<T>(plane_shape(c.grid, View::Side, c.channels)));
    planes.wd = tape.constant(BasicTensor<T>(plane_shape(c.grid, View::Front, c.channels)));
  }
  return planes;
}

TpvPlanes encode_planes(const ParameterStore<float>& store, const EncoderConfig& config, const EncoderPlan& plan,
                        const std::vector<numeric::Tensor>& images) {
  Tape<float> tape;
  const auto vars = encode(tape, store, config, plan, images);
  TpvPlanes planes;
  planes.spec = config.grid;
  planes.bev = config.bev;
  planes.hw = vars.hw.value();
  planes.dh = vars.dh.value();
  planes.wd = vars.wd.value();
  for (auto* t : {&planes.hw, &planes.dh, &planes.wd}) t->set_requires_grad(false);
  return planes;
}

#define TPV_INSTANTIATE_ENCODER(T)                                                                                  \
  template void init_encoder<T>(ParameterStore<T>&, const EncoderConfig&);                                          \
  template void zero_residual_branches<T>(ParameterStore<T>&, const EncoderConfig&);                                \
  template ImageFeatures<T> backbone<T>(Tape<T>&, const ParameterStore<T>&, const EncoderConfig&,                   \
                                        const std::vector<BasicTensor<T>>&);                                        \
  template QueryVars<T> initial_queries<T>(Tape<T>&, const ParameterStore<T>&, const EncoderConfig&);               \
  template QueryVars<T> cross_view_hybrid_attention<T>(Tape<T>&, const ParameterStore<T>&, const EncoderConfig&,    \
                                                       const EncoderPlan&, int, const QueryVars<T>&);               \
  template QueryVars<T> image_cross_attention<T>(Tape<T>&, const ParameterStore<T>&, const EncoderConfig&,          \
                                                 const EncoderPlan&, int, const QueryVars<T>&,                      \
                                                 const ImageFeatures<T>&);                                          \
  template QueryVars<T> hcab_block<T>(Tape<T>&, const ParameterStore<T>&, const EncoderConfig&, const EncoderPlan&, \
                                      int, const QueryVars<T>&, const ImageFeatures<T>&);                           \
  template QueryVars<T> hab_block<T>(Tape<T>&, const ParameterStore<T>&, const EncoderConfig&, const EncoderPlan&,  \
                                     int, const QueryVars<T>&);                                                     \
  template PlaneVars<T> encode<T>(Tape<T>&, const ParameterStore<T>&, const EncoderConfig&, const EncoderPlan&,     \
                                  const std::vector<BasicTensor<T>>&);

TPV_INSTANTIATE_ENCODER(float)
TPV_INSTANTIATE_ENCODER(double)

}  // namespace tpv::encoder
