#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tpv/data/types.hpp"
#include "tpv/geometry/camera.hpp"
#include "tpv/numeric/tensor.hpp"

namespace tpv::data {

// Class ids of the synthetic world.
enum SemanticClass : int { Ground = 0, Vehicle = 1, Wall = 2, Trunk = 3, Foliage = 4, Roof = 5 };

std::string class_name(int cls);

// Axis-aligned box [lower, upper) carrying one class.
struct Box {
  int cls = Vehicle;
  Vec3 lower = Vec3::Zero();
  Vec3 upper = Vec3::Zero();

  Vec3 center() const { return 0.5 * (lower + upper); }
  Vec3 extents() const { return upper - lower; }
  bool contains(const Vec3& p) const;
};

enum class Difficulty { Empty, Easy, Standard, Stacked };

std::string difficulty_name(Difficulty d);
Difficulty parse_difficulty(const std::string& name);

// Boxes are pairwise disjoint and aligned to grid cells. The ground is the
// bottom cell layer of the volume, stored as boxes[0] when present.
struct SyntheticScene {
  TpvGridSpec grid;
  std::vector<Box> boxes;
  bool has_ground = true;
  std::uint64_t seed = 0;
  Difficulty difficulty = Difficulty::Standard;

  // Throws DataError for boxes outside the volume, bad classes or overlaps.
  void validate() const;
};

struct SceneOptions {
  TpvGridSpec grid = default_grid();
  // Boxes keep this many cells of clearance around the ego position.
  std::int64_t clear_radius_cells = 3;

  static TpvGridSpec default_grid();
};

struct GeneratedScene {
  SyntheticScene scene;
  VoxelLabelGrid truth;
};

// Deterministic per (seed, difficulty, options). Empty yields the ground only;
// Easy a few single-class boxes; Standard more boxes of every class; Stacked
// adds trees (trunk under foliage) and houses (wall under roof) so class varies
// along z.
GeneratedScene generate_scene(std::uint64_t seed, Difficulty difficulty, const SceneOptions& options = {});

// Class of the box containing each voxel center, kEmptyClass elsewhere.
VoxelLabelGrid voxelize(const SyntheticScene& scene);

struct RayHit {
  double t = 0.0;
  int box = -1;
  int axis = 0;     // axis of the face normal
  int side = 0;     // -1 lower face, +1 upper face
};

// Nearest box intersection with t > 0 along origin + t * dir.
std::optional<RayHit> cast_ray(const SyntheticScene& scene, const Vec3& origin, const Vec3& dir);

std::array<float, 3> class_color(int cls);
inline constexpr std::array<float, 3> kBackgroundColor = {0.55f, 0.7f, 0.9f};

// Flat class-colored shading with per-face brightness; one ray per pixel
// center. Returns one [height x width x 3] tensor per camera, values in [0, 1].
std::vector<numeric::Tensor> render_cameras(const SyntheticScene& scene, const geometry::CameraRig& rig);

struct LidarOptions {
  std::int64_t rays = 20000;
  Vec3 origin = Vec3::Zero();
};

// Rays from `origin` toward targets drawn uniformly inside the volume above the
// ground. The first box hit gives a point (nudged 1e-5 along the ray into the
// box) labeled with the box class; misses are dropped.
LabeledPointSet sample_lidar(const SyntheticScene& scene, const LidarOptions& options, std::uint64_t seed);

}  // namespace tpv::data
