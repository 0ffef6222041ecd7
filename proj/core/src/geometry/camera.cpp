#include "tpv/geometry/camera.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "tpv/errors.hpp"

namespace tpv::geometry {

void Camera::validate() const {
  const auto& K = intrinsics;
  if (!K.allFinite() || !extrinsics.allFinite()) throw ConfigError("camera matrices must be finite");
  if (!(K(0, 0) > 0.0) || !(K(1, 1) > 0.0)) throw ConfigError("camera focal lengths must be positive");
  if (K(1, 0) != 0.0 || K(2, 0) != 0.0 || K(2, 1) != 0.0 || K(2, 2) != 1.0) {
    throw ConfigError("intrinsic matrix must be upper triangular with K[2][2] = 1");
  }
  const Eigen::Matrix3d R = extrinsics.topLeftCorner<3, 3>();
  if ((R * R.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-6 || R.determinant() < 0.0) {
    throw ConfigError("extrinsic rotation must be a proper rotation");
  }
  if (extrinsics.row(3) != Eigen::RowVector4d(0, 0, 0, 1)) throw ConfigError("extrinsic last row must be 0 0 0 1");
  if (width < 1 || height < 1) throw ConfigError("camera image must be at least 1x1");
}

Vec3 Camera::world_to_camera(const Vec3& p) const {
  return extrinsics.topLeftCorner<3, 3>() * p + extrinsics.topRightCorner<3, 1>();
}

Vec3 Camera::center() const {
  const Eigen::Matrix3d R = extrinsics.topLeftCorner<3, 3>();
  return -R.transpose() * extrinsics.topRightCorner<3, 1>();
}

Vec3 Camera::ray_direction(double u, double v) const {
  const Vec3 cam = intrinsics.triangularView<Eigen::Upper>().solve(Vec3(u, v, 1.0));
  return (extrinsics.topLeftCorner<3, 3>().transpose() * cam).normalized();
}

void CameraRig::validate() const {
  if (cameras.empty()) throw ConfigError("camera rig is empty");
  for (std::size_t i = 0; i < cameras.size(); ++i) {
    try {
      cameras[i].validate();
    } catch (const ConfigError& e) {
      throw ConfigError("camera " + std::to_string(i) + ": " + e.what());
    }
  }
}

std::vector<PixelRef> project_to_pixels(std::span<const Vec3> points, const Camera& camera) {
  std::vector<PixelRef> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vec3 c = camera.world_to_camera(points[i]);
    PixelRef& r = out[i];
    r.depth = c.z();
    if (!(c.z() > kMinDepth)) continue;
    const Vec3 uvw = camera.intrinsics * c;
    r.u = uvw.x() / uvw.z();
    r.v = uvw.y() / uvw.z();
    r.valid = r.u >= 0.0 && r.u < camera.width && r.v >= 0.0 && r.v < camera.height;
  }
  return out;
}

std::vector<std::vector<PixelRef>> project_to_pixels(std::span<const Vec3> points, const CameraRig& rig) {
  std::vector<std::vector<PixelRef>> out;
  out.reserve(rig.size());
  for (const auto& cam : rig.cameras) out.push_back(project_to_pixels(points, cam));
  return out;
}

std::vector<int> valid_camera_set(const std::vector<std::vector<PixelRef>>& per_camera) {
  std::vector<int> out;
  for (std::size_t c = 0; c < per_camera.size(); ++c) {
    for (const auto& r : per_camera[c]) {
      if (r.valid) {
        out.push_back(static_cast<int>(c));
        break;
      }
    }
  }
  return out;
}

CameraRig make_surround_rig(const SurroundRigOptions& o) {
  if (o.count < 1) throw ConfigError("surround rig needs at least one camera");
  if (!(o.horizontal_fov_deg > 0.0 && o.horizontal_fov_deg < 180.0)) {
    throw ConfigError("horizontal field of view must lie in (0, 180) degrees");
  }
  const double deg = std::numbers::pi / 180.0;
  const double f = 0.5 * o.width / std::tan(0.5 * o.horizontal_fov_deg * deg);
  CameraRig rig;
  for (int k = 0; k < o.count; ++k) {
    const double yaw = (o.yaw0_deg + 360.0 * k / o.count) * deg;
    const Vec3 forward(std::cos(yaw), std::sin(yaw), 0.0);
    const Vec3 right(std::sin(yaw), -std::cos(yaw), 0.0);
    const Vec3 down(0.0, 0.0, -1.0);
    Eigen::Matrix3d R;
    R.row(0) = right.transpose();
    R.row(1) = down.transpose();
    R.row(2) = forward.transpose();
    const Vec3 center = o.position + Vec3(0.0, 0.0, o.mount_height);
    Camera cam;
    cam.width = o.width;
    cam.height = o.height;
    cam.intrinsics << f, 0.0, 0.5 * o.width, 0.0, f, 0.5 * o.height, 0.0, 0.0, 1.0;
    cam.extrinsics.setIdentity();
    cam.extrinsics.topLeftCorner<3, 3>() = R;
    cam.extrinsics.topRightCorner<3, 1>() = -R * center;
    rig.cameras.push_back(cam);
  }
  return rig;
}

void write_rig(std::ostream& out, const CameraRig& rig) {
  out << "TPVRIG1\n" << rig.size() << "\n" << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& cam : rig.cameras) {
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) out << cam.intrinsics(r, c) << ' ';
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) out << cam.extrinsics(r, c) << ' ';
    out << cam.width << ' ' << cam.height << '\n';
  }
}

CameraRig read_rig(std::istream& in) {
  std::string magic;
  std::size_t count = 0;
  if (!(in >> magic) || magic != "TPVRIG1") throw DataError("camera rig: bad magic '" + magic + "'");
  if (!(in >> count)) throw DataError("camera rig: missing camera count");
  CameraRig rig;
  rig.cameras.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    auto& cam = rig.cameras[i];
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) in >> cam.intrinsics(r, c);
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) in >> cam.extrinsics(r, c);
    in >> cam.width >> cam.height;
    if (!in) throw DataError("camera rig: truncated record for camera " + std::to_string(i));
  }
  try {
    rig.validate();
  } catch (const ConfigError& e) {
    throw DataError(std::string("camera rig: ") + e.what());
  }
  return rig;
}

void save_rig(const std::filesystem::path& path, const CameraRig& rig) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  write_rig(out, rig);
}

CameraRig load_rig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return read_rig(in);
}

}  // namespace tpv::geometry
