#include "tpv/data/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "tpv/errors.hpp"
#include "tpv/geometry/reference_points.hpp"

namespace tpv::data {

std::string class_name(int cls) {
  static const char* names[] = {"ground", "vehicle", "wall", "trunk", "foliage", "roof"};
  if (cls == kEmptyClass) return "empty";
  if (cls < 0 || cls > kNumClasses) return "class" + std::to_string(cls);
  return names[cls];
}

bool Box::contains(const Vec3& p) const {
  return p.x() >= lower.x() && p.x() < upper.x() && p.y() >= lower.y() && p.y() < upper.y() && p.z() >= lower.z() &&
         p.z() < upper.z();
}

std::string difficulty_name(Difficulty d) {
  switch (d) {
    case Difficulty::Empty:
      return "empty";
    case Difficulty::Easy:
      return "easy";
    case Difficulty::Standard:
      return "standard";
    case Difficulty::Stacked:
      return "stacked";
  }
  return "?";
}

Difficulty parse_difficulty(const std::string& name) {
  if (name == "empty") return Difficulty::Empty;
  if (name == "easy") return Difficulty::Easy;
  if (name == "standard") return Difficulty::Standard;
  if (name == "stacked") return Difficulty::Stacked;
  throw ConfigError("unknown difficulty '" + name + "' (expected empty, easy, standard or stacked)");
}

void SyntheticScene::validate() const {
  grid.validate();
  const Vec3 lo = grid.lower(), hi = grid.upper();
  const double eps = 1e-9 * grid.cell_size;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const auto& b = boxes[i];
    if (b.cls < 0 || b.cls >= kNumClasses) throw DataError("box " + std::to_string(i) + " has invalid class");
    if ((b.lower.array() < lo.array() - eps).any() || (b.upper.array() > hi.array() + eps).any()) {
      throw DataError("box " + std::to_string(i) + " leaves the volume");
    }
    if ((b.upper.array() <= b.lower.array()).any()) throw DataError("box " + std::to_string(i) + " is degenerate");
    for (std::size_t j = 0; j < i; ++j) {
      const auto& o = boxes[j];
      const Vec3 a = b.lower.cwiseMax(o.lower), z = b.upper.cwiseMin(o.upper);
      if ((z.array() - a.array() > eps).all()) {
        throw DataError("boxes " + std::to_string(j) + " and " + std::to_string(i) + " overlap");
      }
    }
  }
}

TpvGridSpec SceneOptions::default_grid() {
  TpvGridSpec g;
  g.H = 50;
  g.W = 50;
  g.D = 4;
  g.cell_size = 0.4;
  return g;
}

namespace {

// Cell-index box [h0, h1) x [w0, w1) x [d0, d1).
struct CellBox {
  std::int64_t h0, h1, w0, w1, d0, d1;
};

Box to_world(const TpvGridSpec& g, const CellBox& c, int cls) {
  const Vec3 lo = g.lower();
  Box b;
  b.cls = cls;
  b.lower = lo + g.cell_size * Vec3(static_cast<double>(c.h0), static_cast<double>(c.w0), static_cast<double>(c.d0));
  b.upper = lo + g.cell_size * Vec3(static_cast<double>(c.h1), static_cast<double>(c.w1), static_cast<double>(c.d1));
  return b;
}

class Placer {
 public:
  Placer(const TpvGridSpec& g, std::int64_t clear, std::mt19937_64& rng)
      : g_(g), rng_(rng), taken_(static_cast<std::size_t>(g.H * g.W), false) {
    const std::int64_t ch = g.H / 2, cw = g.W / 2;
    for (std::int64_t h = std::max<std::int64_t>(0, ch - clear); h < std::min(g.H, ch + clear); ++h)
      for (std::int64_t w = std::max<std::int64_t>(0, cw - clear); w < std::min(g.W, cw + clear); ++w)
        taken_[h * g.W + w] = true;
  }

  std::int64_t uniform(std::int64_t lo, std::int64_t hi) {  // inclusive
    return std::uniform_int_distribution<std::int64_t>(lo, std::max(lo, hi))(rng_);
  }

  // Finds a free footprint of the given size with a one-cell gap to other footprints.
  bool place(std::int64_t sh, std::int64_t sw, std::int64_t& h0, std::int64_t& w0) {
    if (sh > g_.H || sw > g_.W) return false;
    for (int attempt = 0; attempt < 200; ++attempt) {
      h0 = uniform(0, g_.H - sh);
      w0 = uniform(0, g_.W - sw);
      bool free = true;
      for (std::int64_t h = std::max<std::int64_t>(0, h0 - 1); free && h < std::min(g_.H, h0 + sh + 1); ++h)
        for (std::int64_t w = std::max<std::int64_t>(0, w0 - 1); w < std::min(g_.W, w0 + sw + 1); ++w)
          if (taken_[h * g_.W + w]) {
            free = false;
            break;
          }
      if (!free) continue;
      for (std::int64_t h = h0; h < h0 + sh; ++h)
        for (std::int64_t w = w0; w < w0 + sw; ++w) taken_[h * g_.W + w] = true;
      return true;
    }
    return false;
  }

 private:
  const TpvGridSpec& g_;
  std::mt19937_64& rng_;
  std::vector<bool> taken_;
};

}  // namespace

GeneratedScene generate_scene(std::uint64_t seed, Difficulty difficulty, const SceneOptions& options) {
  const auto& g = options.grid;
  g.validate();
  SyntheticScene scene;
  scene.grid = g;
  scene.seed = seed;
  scene.difficulty = difficulty;
  scene.boxes.push_back(to_world(g, {0, g.H, 0, g.W, 0, 1}, Ground));

  std::mt19937_64 rng(geometry::mix_seed(seed, {static_cast<std::uint64_t>(difficulty)}));
  Placer placer(g, options.clear_radius_cells, rng);
  const std::int64_t top = g.D;  // boxes stand on layer 1 and reach at most layer D - 1
  const std::int64_t small = std::max<std::int64_t>(1, std::min(g.H, g.W) / 25);
  const std::int64_t large = std::max<std::int64_t>(small + 1, std::min(g.H, g.W) / 8);

  auto plain_box = [&](int cls, std::int64_t max_height) {
    const std::int64_t sh = placer.uniform(small, large), sw = placer.uniform(small, large);
    std::int64_t h0, w0;
    if (top < 2 || !placer.place(sh, sw, h0, w0)) return;
    const std::int64_t height = placer.uniform(1, std::min(max_height, top - 1));
    scene.boxes.push_back(to_world(g, {h0, h0 + sh, w0, w0 + sw, 1, 1 + height}, cls));
  };

  switch (difficulty) {
    case Difficulty::Empty:
      break;
    case Difficulty::Easy: {
      const std::int64_t n = placer.uniform(3, 4);
      const int classes[] = {Vehicle, Wall, Foliage};
      for (std::int64_t i = 0; i < n; ++i) plain_box(classes[i % 3], top);
      break;
    }
    case Difficulty::Standard: {
      const std::int64_t n = placer.uniform(8, 12);
      for (std::int64_t i = 0; i < n; ++i) plain_box(1 + static_cast<int>(i % (kNumClasses - 1)), top);
      break;
    }
    case Difficulty::Stacked: {
      if (top < 3) break;
      // Trees: a thin trunk under a wider foliage block.
      const std::int64_t trees = placer.uniform(3, 5);
      for (std::int64_t i = 0; i < trees; ++i) {
        const std::int64_t crown = placer.uniform(small + 2, large + 1);
        std::int64_t h0, w0;
        if (!placer.place(crown, crown, h0, w0)) continue;
        const std::int64_t trunk = std::max<std::int64_t>(1, crown / 3);
        const std::int64_t th0 = h0 + (crown - trunk) / 2, tw0 = w0 + (crown - trunk) / 2;
        const std::int64_t split = placer.uniform(2, top - 1);  // first foliage layer
        scene.boxes.push_back(to_world(g, {th0, th0 + trunk, tw0, tw0 + trunk, 1, split}, Trunk));
        scene.boxes.push_back(to_world(g, {h0, h0 + crown, w0, w0 + crown, split, top}, Foliage));
      }
      // Houses: walls under a roof layer of the same footprint.
      const std::int64_t houses = placer.uniform(2, 3);
      for (std::int64_t i = 0; i < houses; ++i) {
        const std::int64_t sh = placer.uniform(small + 1, large + 1), sw = placer.uniform(small + 1, large + 1);
        std::int64_t h0, w0;
        if (!placer.place(sh, sw, h0, w0)) continue;
        const std::int64_t split = placer.uniform(2, top - 1);
        scene.boxes.push_back(to_world(g, {h0, h0 + sh, w0, w0 + sw, 1, split}, Wall));
        scene.boxes.push_back(to_world(g, {h0, h0 + sh, w0, w0 + sw, split, split + 1}, Roof));
      }
      const std::int64_t cars = placer.uniform(2, 4);
      for (std::int64_t i = 0; i < cars; ++i) plain_box(Vehicle, 1);
      break;
    }
  }
  scene.validate();
  GeneratedScene out{scene, voxelize(scene)};
  return out;
}

VoxelLabelGrid voxelize(const SyntheticScene& scene) {
  const auto& g = scene.grid;
  auto grid = VoxelLabelGrid::filled(g, kEmptyClass);
  for (std::int64_t h = 0; h < g.H; ++h)
    for (std::int64_t w = 0; w < g.W; ++w)
      for (std::int64_t d = 0; d < g.D; ++d) {
        const Vec3 c = g.voxel_center(h, w, d);
        for (const auto& b : scene.boxes) {
          if (b.contains(c)) {
            grid.set(h, w, d, b.cls);
            break;
          }
        }
      }
  return grid;
}

std::optional<RayHit> cast_ray(const SyntheticScene& scene, const Vec3& origin, const Vec3& dir) {
  std::optional<RayHit> best;
  for (std::size_t i = 0; i < scene.boxes.size(); ++i) {
    const auto& b = scene.boxes[i];
    double t_near = -std::numeric_limits<double>::infinity(), t_far = std::numeric_limits<double>::infinity();
    int axis = 0;
    bool miss = false;
    for (int a = 0; a < 3; ++a) {
      if (dir[a] == 0.0) {
        if (origin[a] < b.lower[a] || origin[a] > b.upper[a]) miss = true;
        continue;
      }
      double t0 = (b.lower[a] - origin[a]) / dir[a], t1 = (b.upper[a] - origin[a]) / dir[a];
      if (t0 > t1) std::swap(t0, t1);
      if (t0 > t_near) {
        t_near = t0;
        axis = a;
      }
      t_far = std::min(t_far, t1);
    }
    if (miss || t_near > t_far || t_near <= 0.0) continue;
    if (!best || t_near < best->t) best = RayHit{t_near, static_cast<int>(i), axis, dir[axis] > 0.0 ? -1 : 1};
  }
  return best;
}

std::array<float, 3> class_color(int cls) {
  switch (cls) {
    case Ground:
      return {0.35f, 0.35f, 0.38f};
    case Vehicle:
      return {0.85f, 0.15f, 0.15f};
    case Wall:
      return {0.85f, 0.75f, 0.5f};
    case Trunk:
      return {0.45f, 0.28f, 0.1f};
    case Foliage:
      return {0.15f, 0.7f, 0.2f};
    case Roof:
      return {0.25f, 0.3f, 0.85f};
    default:
      return kBackgroundColor;
  }
}

namespace {

float face_brightness(int axis, int side) {
  if (axis == 2) return side > 0 ? 1.0f : 0.45f;
  if (axis == 0) return side > 0 ? 0.8f : 0.7f;
  return side > 0 ? 0.6f : 0.55f;
}

}  // namespace

std::vector<numeric::Tensor> render_cameras(const SyntheticScene& scene, const geometry::CameraRig& rig) {
  rig.validate();
  std::vector<numeric::Tensor> images;
  images.reserve(rig.size());
  for (const auto& cam : rig.cameras) {
    numeric::Tensor img({cam.height, cam.width, 3});
    const Vec3 origin = cam.center();
    for (int v = 0; v < cam.height; ++v)
      for (int u = 0; u < cam.width; ++u) {
        const Vec3 dir = cam.ray_direction(u + 0.5, v + 0.5);
        const auto hit = cast_ray(scene, origin, dir);
        std::array<float, 3> rgb = kBackgroundColor;
        if (hit) {
          const auto base = class_color(scene.boxes[hit->box].cls);
          const float k = face_brightness(hit->axis, hit->side);
          for (int c = 0; c < 3; ++c) rgb[c] = base[c] * k;
        }
        float* px = img.data().data() + (static_cast<std::int64_t>(v) * cam.width + u) * 3;
        for (int c = 0; c < 3; ++c) px[c] = rgb[c];
      }
    images.push_back(std::move(img));
  }
  return images;
}

LabeledPointSet sample_lidar(const SyntheticScene& scene, const LidarOptions& options, std::uint64_t seed) {
  if (options.rays < 0) throw ConfigError("lidar ray count must be >= 0");
  const auto& g = scene.grid;
  LabeledPointSet out;
  std::mt19937_64 rng(geometry::mix_seed(seed, {0x11da7ULL}));
  const Vec3 lo = g.lower(), hi = g.upper();
  const double floor_z = scene.has_ground ? lo.z() + g.cell_size : lo.z();
  std::uniform_real_distribution<double> ux(lo.x(), hi.x()), uy(lo.y(), hi.y()), uz(floor_z, hi.z());
  const double inset = 1e-5;
  for (std::int64_t r = 0; r < options.rays; ++r) {
    const Vec3 target(ux(rng), uy(rng), uz(rng));
    const Vec3 dir = (target - options.origin).normalized();
    if (!dir.allFinite()) continue;
    const auto hit = cast_ray(scene, options.origin, dir);
    if (!hit) continue;
    const auto& b = scene.boxes[hit->box];
    Vec3 p = options.origin + (hit->t + inset) * dir;
    // Keep the point strictly inside its box so voxel lookups land in a cell of the box.
    for (int a = 0; a < 3; ++a) p[a] = std::clamp(p[a], b.lower[a] + inset, b.upper[a] - inset);
    out.positions.push_back(p);
    out.labels.push_back(b.cls);
  }
  return out;
}

}  // namespace tpv::data
