#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "tpv/errors.hpp"
#include "tpv/geometry/camera.hpp"
#include "tpv/geometry/grid.hpp"
#include "tpv/geometry/reference_points.hpp"

using namespace tpv;
using namespace tpv::geometry;

namespace {

TpvGridSpec grid(std::int64_t H, std::int64_t W, std::int64_t D, double s) {
  TpvGridSpec g;
  g.H = H;
  g.W = W;
  g.D = D;
  g.cell_size = s;
  return g;
}

// Writes a plane's world pair back into the matching axes of `p`.
Vec3 embed(View v, std::array<double, 2> pair, Vec3 p) {
  switch (v) {
    case View::Top:
      return {pair[0], pair[1], p.z()};
    case View::Side:
      return {pair[1], p.y(), pair[0]};
    case View::Front:
      return {p.x(), pair[0], pair[1]};
  }
  return p;
}

}  // namespace

TEST(PlaneToWorld, TopPlaneCentering) {
  const auto g = grid(200, 200, 16, 0.5);
  auto p = plane_to_world(g, View::Top, {100, 100});
  EXPECT_DOUBLE_EQ(p[0], 0.0);
  EXPECT_DOUBLE_EQ(p[1], 0.0);
  p = plane_to_world(g, View::Top, {0, 0});
  EXPECT_DOUBLE_EQ(p[0], -50.0);
  EXPECT_DOUBLE_EQ(p[1], -50.0);
  p = plane_to_world(g, View::Top, {150, 50});
  EXPECT_DOUBLE_EQ(p[0], 25.0);
  EXPECT_DOUBLE_EQ(p[1], -25.0);
}

TEST(PlaneToWorld, SideAndFrontAxisPairs) {
  const auto g = grid(10, 20, 4, 0.5);
  // side = (d, h) -> (z, x)
  auto p = plane_to_world(g, View::Side, {0, 0});
  EXPECT_DOUBLE_EQ(p[0], -1.0);
  EXPECT_DOUBLE_EQ(p[1], -2.5);
  // front = (w, d) -> (y, z)
  p = plane_to_world(g, View::Front, {20, 4});
  EXPECT_DOUBLE_EQ(p[0], 5.0);
  EXPECT_DOUBLE_EQ(p[1], 1.0);
}

TEST(ParseView, UnknownTagIsConfigError) {
  EXPECT_EQ(parse_view("top"), View::Top);
  EXPECT_EQ(parse_view("side"), View::Side);
  EXPECT_EQ(parse_view("front"), View::Front);
  EXPECT_THROW(parse_view("bottom"), ConfigError);
}

TEST(WorldToPlane, OriginMapsToCenter) {
  const auto g = grid(50, 40, 4, 0.4);
  const auto c = world_to_plane(g, View::Top, Vec3::Zero());
  EXPECT_DOUBLE_EQ(c.a, 25.0);
  EXPECT_DOUBLE_EQ(c.b, 20.0);
}

TEST(WorldToPlane, RoundTripAllViews) {
  auto g = grid(37, 21, 5, 0.37);
  g.origin = Vec3(0.3, -1.2, 0.25);
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  for (int n = 0; n < 200; ++n) {
    const Vec3 p(u(rng), u(rng), u(rng));
    for (View v : kViews) {
      const auto gc = world_to_plane(g, v, p);
      const auto back = plane_to_world(g, v, gc);
      const auto again = world_to_plane(g, v, embed(v, back, p));
      EXPECT_NEAR(again.a, gc.a, 1e-9);
      EXPECT_NEAR(again.b, gc.b, 1e-9);
    }
    // float32 round trip through the plane mapping
    const auto gc = world_to_plane(g, View::Top, p);
    const auto back = plane_to_world(g, View::Top, {static_cast<float>(gc.a), static_cast<float>(gc.b)});
    EXPECT_NEAR(back[0], p.x(), 1e-5);
    EXPECT_NEAR(back[1], p.y(), 1e-5);
  }
}

TEST(WorldToPlane, TopIgnoresHeight) {
  const auto g = grid(20, 20, 4, 0.5);
  const auto a = world_to_plane(g, View::Top, Vec3(1.3, -2.1, -0.9));
  const auto b = world_to_plane(g, View::Top, Vec3(1.3, -2.1, 0.7));
  EXPECT_EQ(a.a, b.a);
  EXPECT_EQ(a.b, b.b);
}

TEST(IcaReferencePoints, TopViewUniformCellCenters) {
  const auto g = grid(8, 8, 4, 0.5);
  const auto pts = ica_reference_points(View::Top, 3, 5, g, 4);
  ASSERT_EQ(pts.size(), 4u);
  const auto xy = plane_to_world(g, View::Top, query_center(3, 5));
  const double expected_z[] = {-0.75, -0.25, 0.25, 0.75};
  for (int k = 0; k < 4; ++k) {
    EXPECT_DOUBLE_EQ(pts[k].x(), xy[0]);
    EXPECT_DOUBLE_EQ(pts[k].y(), xy[1]);
    EXPECT_DOUBLE_EQ(pts[k].z(), expected_z[k]);
  }
}

TEST(IcaReferencePoints, SingleCountIsMidHeight) {
  const auto g = grid(8, 8, 4, 0.5);
  const auto pts = ica_reference_points(View::Top, 0, 0, g, 1);
  ASSERT_EQ(pts.size(), 1u);
  EXPECT_DOUBLE_EQ(pts[0].z(), 0.0);
}

TEST(IcaReferencePoints, SideAndFrontShareInPlaneCoordinates) {
  const auto g = grid(6, 10, 4, 0.25);
  for (View v : {View::Side, View::Front}) {
    const auto pts = ica_reference_points(v, 1, 2, g, 3);
    ASSERT_EQ(pts.size(), 3u);
    for (const auto& p : pts) {
      const auto gc = world_to_plane(g, v, p);
      EXPECT_NEAR(gc.a, 1.5, 1e-12);
      EXPECT_NEAR(gc.b, 2.5, 1e-12);
      EXPECT_TRUE(g.contains(p));
    }
  }
}

TEST(IcaReferencePoints, CountBeyondExtentIsConfigError) {
  const auto g = grid(8, 8, 4, 0.5);
  EXPECT_THROW(ica_reference_points(View::Top, 0, 0, g, 5), ConfigError);
  EXPECT_THROW(ica_reference_points(View::Top, 0, 0, g, 0), ConfigError);
  EXPECT_NO_THROW(ica_reference_points(View::Side, 0, 0, g, 8));
}

TEST(IcaReferencePoints, TopQueriesDifferOnlyInZ) {
  const auto g = grid(12, 9, 6, 0.3);
  for (std::int64_t h = 0; h < g.H; ++h) {
    for (std::int64_t w = 0; w < g.W; ++w) {
      const auto pts = ica_reference_points(View::Top, h, w, g, 6);
      const auto c = query_center(h, w);
      std::set<double> zs;
      for (const auto& p : pts) {
        const auto gc = world_to_plane(g, View::Top, p);
        EXPECT_NEAR(gc.a, c.a, 1e-12);
        EXPECT_NEAR(gc.b, c.b, 1e-12);
        zs.insert(p.z());
      }
      EXPECT_EQ(zs.size(), pts.size());
    }
  }
}

namespace {

Camera test_camera() {
  Camera c;
  c.intrinsics << 100, 0, 50, 0, 100, 50, 0, 0, 1;
  c.width = 100;
  c.height = 100;
  return c;
}

}  // namespace

TEST(ProjectToPixels, PinholeExample) {
  const Camera c = test_camera();
  const std::vector<Vec3> pts = {Vec3(0, 0, 1), Vec3(0, 0, -1), Vec3(0.5, 0, 1), Vec3(0.4999, 0, 1)};
  const auto refs = project_to_pixels(pts, c);
  EXPECT_DOUBLE_EQ(refs[0].u, 50.0);
  EXPECT_DOUBLE_EQ(refs[0].v, 50.0);
  EXPECT_TRUE(refs[0].valid);
  EXPECT_FALSE(refs[1].valid);
  EXPECT_DOUBLE_EQ(refs[2].u, 100.0);
  EXPECT_FALSE(refs[2].valid);
  EXPECT_TRUE(refs[3].valid);
}

TEST(ProjectToPixels, TinyDepthIsInvalid) {
  const Camera c = test_camera();
  const std::vector<Vec3> pts = {Vec3(0, 0, 1e-7), Vec3(0, 0, 0)};
  for (const auto& r : project_to_pixels(pts, c)) EXPECT_FALSE(r.valid);
}

TEST(ProjectToPixels, OpticalAxisHitsPrincipalPoint) {
  const auto rig = make_surround_rig({.count = 6, .width = 96, .height = 48, .mount_height = 0.3});
  for (const auto& cam : rig.cameras) {
    const Vec3 p = cam.center() + 3.7 * cam.ray_direction(cam.intrinsics(0, 2), cam.intrinsics(1, 2));
    const auto r = project_to_pixels(std::span<const Vec3>(&p, 1), cam)[0];
    EXPECT_TRUE(r.valid);
    EXPECT_NEAR(r.u, cam.intrinsics(0, 2), 1e-9);
    EXPECT_NEAR(r.v, cam.intrinsics(1, 2), 1e-9);
    EXPECT_NEAR(r.depth, 3.7, 1e-9);
  }
}

TEST(ProjectToPixels, RayDirectionInvertsProjection) {
  const auto rig = make_surround_rig();
  const auto& cam = rig.cameras[2];
  const Vec3 p = cam.center() + 2.0 * cam.ray_direction(10.5, 30.25);
  const auto r = project_to_pixels(std::span<const Vec3>(&p, 1), cam)[0];
  EXPECT_NEAR(r.u, 10.5, 1e-9);
  EXPECT_NEAR(r.v, 30.25, 1e-9);
}

TEST(ValidCameraSet, SelectsCamerasWithAnyValidRef) {
  std::vector<std::vector<PixelRef>> refs(3, std::vector<PixelRef>(2));
  refs[0][1].valid = true;
  EXPECT_EQ(valid_camera_set(refs), (std::vector<int>{0}));
  for (auto& cam : refs)
    for (auto& r : cam) r.valid = true;
  EXPECT_EQ(valid_camera_set(refs), (std::vector<int>{0, 1, 2}));
}

TEST(ValidCameraSet, SurroundRigMatchesAngularOracle) {
  SurroundRigOptions o;
  const auto rig = make_surround_rig(o);
  const double half_fov = 0.5 * o.horizontal_fov_deg;
  for (double yaw = -180.0; yaw < 180.0; yaw += 7.3) {
    const double rad = yaw * std::numbers::pi / 180.0;
    const Vec3 p(4.0 * std::cos(rad), 4.0 * std::sin(rad), 0.1);
    std::vector<int> expected;
    for (int k = 0; k < o.count; ++k) {
      double diff = std::fmod(yaw - 60.0 * k + 540.0, 360.0) - 180.0;
      if (std::abs(diff) < half_fov) expected.push_back(k);
    }
    EXPECT_EQ(valid_camera_set(project_to_pixels(std::span<const Vec3>(&p, 1), rig)), expected) << "yaw " << yaw;
  }
  // straight ahead of the ego only the forward camera sees the point
  const Vec3 ahead(5.0, 0.0, 0.0);
  EXPECT_EQ(valid_camera_set(project_to_pixels(std::span<const Vec3>(&ahead, 1), rig)), (std::vector<int>{0}));
}

TEST(CameraRig, ValidationRejectsBadCameras) {
  Camera c = test_camera();
  EXPECT_NO_THROW(c.validate());
  c.intrinsics(0, 0) = -1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = test_camera();
  c.intrinsics(1, 0) = 0.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = test_camera();
  c.extrinsics(0, 0) = 1.1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = test_camera();
  c.width = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(CameraRig{}.validate(), ConfigError);
}

TEST(CameraRig, TextRoundTripIsExact) {
  const auto rig = make_surround_rig({.count = 6, .yaw0_deg = 13.0});
  std::stringstream ss;
  write_rig(ss, rig);
  const auto back = read_rig(ss);
  ASSERT_EQ(back.size(), rig.size());
  for (std::size_t i = 0; i < rig.size(); ++i) {
    EXPECT_EQ(back.cameras[i].intrinsics, rig.cameras[i].intrinsics);
    EXPECT_EQ(back.cameras[i].extrinsics, rig.cameras[i].extrinsics);
    EXPECT_EQ(back.cameras[i].width, rig.cameras[i].width);
    EXPECT_EQ(back.cameras[i].height, rig.cameras[i].height);
  }
}

TEST(CameraRig, TruncatedDocumentIsDataError) {
  std::stringstream ss("TPVRIG1\n2\n1 0 0 0 1 0 0 0 1\n");
  EXPECT_THROW(read_rig(ss), DataError);
  std::stringstream bad("NOTARIG\n");
  EXPECT_THROW(read_rig(bad), DataError);
}

TEST(CvhaReferencePoints, TopQueryCrossPlaneSets) {
  const auto g = grid(10, 10, 4, 0.5);
  CvhaOptions o;
  const auto refs = cvha_reference_points(View::Top, 3, 7, g, o, 1);
  const auto& side = refs.on(View::Side);
  const auto& front = refs.on(View::Front);
  ASSERT_EQ(side.size(), 4u);
  ASSERT_EQ(front.size(), 4u);
  for (int k = 0; k < 4; ++k) {
    EXPECT_DOUBLE_EQ(side[k].a, k + 0.5);
    EXPECT_DOUBLE_EQ(side[k].b, 3.5);
    EXPECT_DOUBLE_EQ(front[k].a, 7.5);
    EXPECT_DOUBLE_EQ(front[k].b, k + 0.5);
  }
}

TEST(CvhaReferencePoints, SideAndFrontQueriesShareTheirAxes) {
  const auto g = grid(6, 8, 4, 0.5);
  CvhaOptions o;
  o.cross_count = {4, 8, 6};
  // side query (d, h) = (1, 2): top refs keep h, front refs keep d
  auto refs = cvha_reference_points(View::Side, 1, 2, g, o, 3);
  ASSERT_EQ(refs.on(View::Top).size(), 8u);
  for (const auto& c : refs.on(View::Top)) EXPECT_DOUBLE_EQ(c.a, 2.5);
  for (const auto& c : refs.on(View::Front)) EXPECT_DOUBLE_EQ(c.b, 1.5);
  // front query (w, d) = (5, 3): top refs keep w, side refs keep d
  refs = cvha_reference_points(View::Front, 5, 3, g, o, 3);
  ASSERT_EQ(refs.on(View::Side).size(), 6u);
  for (const auto& c : refs.on(View::Top)) EXPECT_DOUBLE_EQ(c.b, 5.5);
  for (const auto& c : refs.on(View::Side)) EXPECT_DOUBLE_EQ(c.a, 3.5);
}

TEST(CvhaReferencePoints, SamePlaneWithinRadiusAndSeeded) {
  const auto g = grid(10, 10, 4, 0.5);
  CvhaOptions o;
  o.same_count = 16;
  for (View v : kViews) {
    const auto a = cvha_reference_points(v, 2, 1, g, o, 42);
    const auto b = cvha_reference_points(v, 2, 1, g, o, 42);
    const auto c = cvha_reference_points(v, 2, 1, g, o, 43);
    const auto& same = a.on(v);
    ASSERT_EQ(same.size(), 16u);
    bool differs = false;
    for (std::size_t k = 0; k < same.size(); ++k) {
      EXPECT_LE(std::hypot(same[k].a - 2.5, same[k].b - 1.5), o.radius + 1e-12);
      EXPECT_EQ(same[k].a, b.on(v)[k].a);
      EXPECT_EQ(same[k].b, b.on(v)[k].b);
      differs = differs || same[k].a != c.on(v)[k].a;
    }
    EXPECT_TRUE(differs);
  }
}

TEST(CvhaReferencePoints, SubsetsDisjointAsPlaneCoordinatePairs) {
  const auto g = grid(5, 6, 3, 0.5);
  for (View v : kViews) {
    const auto refs = cvha_reference_points(v, 1, 1, g, CvhaOptions{}, 9);
    int nonempty = 0;
    for (View p : kViews) nonempty += refs.on(p).empty() ? 0 : 1;
    EXPECT_EQ(nonempty, 3);
    // each plane's points come from exactly one subset, so (plane, coord)
    // pairs from different subsets can never coincide.
    std::set<std::tuple<int, double, double>> seen;
    std::size_t total = 0;
    for (View p : kViews) {
      for (const auto& c : refs.on(p)) seen.insert({static_cast<int>(p), c.a, c.b}), ++total;
    }
    EXPECT_EQ(seen.size(), total);
  }
}

TEST(CvhaReferencePoints, RadiusBelowOneCellIsConfigError) {
  const auto g = grid(5, 5, 2, 0.5);
  CvhaOptions o;
  o.radius = 0.5;
  EXPECT_THROW(cvha_reference_points(View::Top, 0, 0, g, o, 0), ConfigError);
  o = {};
  o.cross_count[1] = 0;
  EXPECT_THROW(cvha_reference_points(View::Top, 0, 0, g, o, 0), ConfigError);
}

TEST(TpvGridSpec, ValidationAndBounds) {
  EXPECT_THROW(grid(0, 1, 1, 1.0).validate(), ConfigError);
  EXPECT_THROW(grid(1, 1, 1, 0.0).validate(), ConfigError);
  const auto g = grid(4, 6, 2, 0.5);
  EXPECT_TRUE(g.contains(Vec3(-1.0, -1.5, -0.5)));
  EXPECT_FALSE(g.contains(Vec3(1.0, 0, 0)));
  const Vec3 c = g.voxel_center(0, 0, 0);
  EXPECT_DOUBLE_EQ(c.x(), -0.75);
  EXPECT_DOUBLE_EQ(c.y(), -1.25);
  EXPECT_DOUBLE_EQ(c.z(), -0.25);
}
