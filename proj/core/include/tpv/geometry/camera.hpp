#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "tpv/geometry/grid.hpp"

namespace tpv::geometry {

// Pinhole camera. `extrinsics` maps homogeneous world points into the camera
// frame (x right, y down, z forward). Pixel (i, j) covers [i, i+1) x [j, j+1).
struct Camera {
  Eigen::Matrix3d intrinsics = Eigen::Matrix3d::Identity();
  Eigen::Matrix4d extrinsics = Eigen::Matrix4d::Identity();
  int width = 1;
  int height = 1;

  // Throws ConfigError for a non-positive focal length, a malformed
  // intrinsic matrix, a non-rigid extrinsic or an empty image.
  void validate() const;

  Vec3 world_to_camera(const Vec3& p) const;
  Vec3 center() const;
  // World direction of the ray through continuous pixel (u, v).
  Vec3 ray_direction(double u, double v) const;
};

struct CameraRig {
  std::vector<Camera> cameras;

  void validate() const;
  std::size_t size() const { return cameras.size(); }
};

inline constexpr double kMinDepth = 1e-6;

struct PixelRef {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
  bool valid = false;
};

// Projects points into one camera. A projection is valid when depth exceeds
// kMinDepth and 0 <= u < width, 0 <= v < height.
std::vector<PixelRef> project_to_pixels(std::span<const Vec3> points, const Camera& camera);
// Result indexed [camera][point].
std::vector<std::vector<PixelRef>> project_to_pixels(std::span<const Vec3> points, const CameraRig& rig);

// Cameras with at least one valid projection among the points' projections.
// `per_camera` is indexed [camera][point].
std::vector<int> valid_camera_set(const std::vector<std::vector<PixelRef>>& per_camera);

struct SurroundRigOptions {
  int count = 6;
  int width = 96;
  int height = 48;
  double horizontal_fov_deg = 70.0;
  double mount_height = 0.0;
  double yaw0_deg = 0.0;
  Vec3 position = Vec3::Zero();
};

// Cameras evenly spaced in yaw around `position`, looking horizontally. Camera
// k looks along yaw0 + k * 360 / count degrees, measured from +x towards +y.
CameraRig make_surround_rig(const SurroundRigOptions& options = {});

void write_rig(std::ostream& out, const CameraRig& rig);
CameraRig read_rig(std::istream& in);
void save_rig(const std::filesystem::path& path, const CameraRig& rig);
CameraRig load_rig(const std::filesystem::path& path);

}  // namespace tpv::geometry
