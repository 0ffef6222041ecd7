#include <cmath>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "tpv/data/io.hpp"
#include "tpv/data/scene.hpp"
#include "tpv/errors.hpp"
#include "tpv/geometry/camera.hpp"
#include "tpv/head/head.hpp"

using namespace tpv;
using namespace tpv::data;

namespace {

double distance_to_surface(const Box& b, const Vec3& p) {
  // p is inside the box: distance to the nearest face
  double d = 1e300;
  for (int a = 0; a < 3; ++a) d = std::min({d, std::abs(p[a] - b.lower[a]), std::abs(b.upper[a] - p[a])});
  return d;
}

}  // namespace

TEST(GenerateScene, DeterministicPerSeed) {
  for (auto diff : {Difficulty::Easy, Difficulty::Standard, Difficulty::Stacked}) {
    const auto a = generate_scene(17, diff);
    const auto b = generate_scene(17, diff);
    const auto c = generate_scene(18, diff);
    ASSERT_EQ(a.scene.boxes.size(), b.scene.boxes.size());
    for (std::size_t i = 0; i < a.scene.boxes.size(); ++i) {
      EXPECT_EQ(a.scene.boxes[i].lower, b.scene.boxes[i].lower);
      EXPECT_EQ(a.scene.boxes[i].upper, b.scene.boxes[i].upper);
      EXPECT_EQ(a.scene.boxes[i].cls, b.scene.boxes[i].cls);
    }
    EXPECT_EQ(a.truth.labels, b.truth.labels);
    EXPECT_NE(a.truth.labels, c.truth.labels);
  }
}

TEST(GenerateScene, EmptyDifficultyIsGroundOnly) {
  const auto s = generate_scene(3, Difficulty::Empty);
  const auto& g = s.truth.spec;
  for (std::int64_t h = 0; h < g.H; ++h)
    for (std::int64_t w = 0; w < g.W; ++w)
      for (std::int64_t d = 0; d < g.D; ++d) EXPECT_EQ(s.truth.at(h, w, d), d == 0 ? Ground : kEmptyClass);
}

TEST(GenerateScene, VoxelizationMatchesPointInBoxOracle) {
  for (std::uint64_t seed : {1, 2, 3}) {
    for (auto diff : {Difficulty::Standard, Difficulty::Stacked}) {
      const auto s = generate_scene(seed, diff);
      const auto& g = s.scene.grid;
      for (std::int64_t h = 0; h < g.H; ++h)
        for (std::int64_t w = 0; w < g.W; ++w)
          for (std::int64_t d = 0; d < g.D; ++d) {
            const Vec3 c = g.lower() + g.cell_size * Vec3(h + 0.5, w + 0.5, d + 0.5);
            int label = kEmptyClass, hits = 0;
            for (const auto& b : s.scene.boxes) {
              if ((c.array() > b.lower.array()).all() && (c.array() < b.upper.array()).all()) {
                label = b.cls;
                ++hits;
              }
            }
            ASSERT_LE(hits, 1);
            ASSERT_EQ(s.truth.at(h, w, d), label);
          }
    }
  }
}

TEST(GenerateScene, StackedScenesVaryAlongHeight) {
  const auto s = generate_scene(5, Difficulty::Stacked);
  const auto& g = s.truth.spec;
  int columns = 0;
  for (std::int64_t h = 0; h < g.H; ++h)
    for (std::int64_t w = 0; w < g.W; ++w) {
      std::set<int> classes;
      for (std::int64_t d = 1; d < g.D; ++d)
        if (s.truth.at(h, w, d) != kEmptyClass) classes.insert(s.truth.at(h, w, d));
      columns += classes.size() >= 2;
    }
  EXPECT_GT(columns, 0);
}

TEST(GenerateScene, KeepsEgoClear) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto s = generate_scene(seed, Difficulty::Standard);
    for (std::size_t i = 1; i < s.scene.boxes.size(); ++i) EXPECT_FALSE(s.scene.boxes[i].contains(Vec3::Zero()));
  }
}

TEST(RenderCameras, EmptySceneIsBackground) {
  SyntheticScene scene;
  scene.grid = SceneOptions::default_grid();
  scene.has_ground = false;
  const auto images = render_cameras(scene, geometry::make_surround_rig());
  ASSERT_EQ(images.size(), 6u);
  for (const auto& img : images) {
    EXPECT_EQ(img.shape(), (numeric::Shape{48, 96, 3}));
    for (std::int64_t i = 0; i < img.numel(); ++i) ASSERT_EQ(img[i], kBackgroundColor[i % 3]);
  }
}

TEST(RenderCameras, BoxOnOpticalAxisIsCenteredOnPrincipalPoint) {
  SyntheticScene scene;
  scene.grid = SceneOptions::default_grid();
  scene.has_ground = false;
  scene.boxes.push_back({Vehicle, Vec3(5.0, -0.6, -0.4), Vec3(6.0, 0.6, 0.4)});
  const auto rig = geometry::make_surround_rig();
  const auto images = render_cameras(scene, rig);
  const auto& img = images[0];
  double su = 0, sv = 0;
  int n = 0;
  for (int v = 0; v < 48; ++v)
    for (int u = 0; u < 96; ++u)
      if (img[(v * 96 + u) * 3] != kBackgroundColor[0]) {
        su += u + 0.5;
        sv += v + 0.5;
        ++n;
      }
  ASSERT_GT(n, 0);
  EXPECT_NEAR(su / n, rig.cameras[0].intrinsics(0, 2), 1e-9);
  EXPECT_NEAR(sv / n, rig.cameras[0].intrinsics(1, 2), 1e-9);
  for (std::size_t k = 1; k < images.size(); ++k) {
    for (std::int64_t i = 0; i < images[k].numel(); ++i) ASSERT_EQ(images[k][i], kBackgroundColor[i % 3]);
  }
}

TEST(RenderCameras, SurroundRigSeesEveryBox) {
  const auto rig = geometry::make_surround_rig();
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto s = generate_scene(seed, Difficulty::Stacked);
    for (const auto& b : s.scene.boxes) {
      // probe points across the box's top face
      std::vector<Vec3> probes;
      for (int i = 0; i <= 4; ++i)
        for (int j = 0; j <= 4; ++j)
          probes.emplace_back(b.lower.x() + (b.upper.x() - b.lower.x()) * (0.1 + 0.2 * i),
                              b.lower.y() + (b.upper.y() - b.lower.y()) * (0.1 + 0.2 * j), b.upper.z() - 1e-6);
      const auto refs = geometry::project_to_pixels(probes, rig);
      EXPECT_FALSE(geometry::valid_camera_set(refs).empty());
    }
  }
}

TEST(RenderCameras, Deterministic) {
  const auto s = generate_scene(9, Difficulty::Standard);
  const auto rig = geometry::make_surround_rig();
  const auto a = render_cameras(s.scene, rig), b = render_cameras(s.scene, rig);
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(a[k], b[k]);
}

TEST(SampleLidar, ZeroRaysGiveEmptySet) {
  const auto s = generate_scene(1, Difficulty::Standard);
  EXPECT_EQ(sample_lidar(s.scene, {.rays = 0}, 1).size(), 0u);
  EXPECT_THROW(sample_lidar(s.scene, {.rays = -1}, 1), ConfigError);
}

TEST(SampleLidar, PointsLieOnSurfacesOfTheirBoxes) {
  const auto s = generate_scene(2, Difficulty::Stacked);
  const auto pts = sample_lidar(s.scene, {.rays = 5000}, 3);
  EXPECT_GT(pts.size(), 1000u);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    int containing = -1;
    for (std::size_t b = 0; b < s.scene.boxes.size(); ++b)
      if (s.scene.boxes[b].contains(pts.positions[i])) containing = static_cast<int>(b);
    ASSERT_GE(containing, 0);
    EXPECT_EQ(pts.labels[i], s.scene.boxes[containing].cls);
    EXPECT_LT(distance_to_surface(s.scene.boxes[containing], pts.positions[i]), 1e-4);
  }
}

TEST(SampleLidar, DeterministicAndSeeded) {
  const auto s = generate_scene(2, Difficulty::Standard);
  const auto a = sample_lidar(s.scene, {.rays = 500}, 3), b = sample_lidar(s.scene, {.rays = 500}, 3);
  const auto c = sample_lidar(s.scene, {.rays = 500}, 4);
  EXPECT_EQ(a.positions, b.positions);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_NE(a.positions, c.positions);
}

TEST(SampleLidar, PseudoLabelsAgreeWithDenseTruth) {
  for (auto diff : {Difficulty::Standard, Difficulty::Stacked}) {
    const auto s = generate_scene(6, diff);
    const auto pseudo = head::pseudo_voxel_labels(sample_lidar(s.scene, {.rays = 20000}, 7), s.scene.grid);
    int labeled = 0;
    for (std::int64_t i = 0; i < pseudo.size(); ++i) {
      if (pseudo.labels[i] == kEmptyClass) continue;
      ++labeled;
      ASSERT_EQ(pseudo.labels[i], s.truth.labels[i]);
    }
    EXPECT_GT(labeled, 100);
  }
}

TEST(FileFormats, PointsRoundTripExactly) {
  const auto s = generate_scene(1, Difficulty::Easy);
  const auto pts = sample_lidar(s.scene, {.rays = 300}, 2);
  std::stringstream ss;
  write_points(ss, pts);
  const auto back = read_points(ss);
  EXPECT_EQ(back.positions, pts.positions);
  EXPECT_EQ(back.labels, pts.labels);
  std::stringstream bad("TPVPTS1\ncount 3\nfields x y z class\n1 2 3 0\n");
  EXPECT_THROW(read_points(bad), DataError);
}

TEST(FileFormats, VoxelsRoundTripBitwise) {
  const auto s = generate_scene(4, Difficulty::Stacked);
  std::stringstream ss;
  write_voxels(ss, s.truth);
  const std::string bytes = ss.str();
  EXPECT_EQ(bytes.substr(0, 7), "TPVOCC1");
  EXPECT_EQ(bytes.size(), 7u + 12u + 50u * 50u * 4u);
  EXPECT_EQ(static_cast<unsigned char>(bytes[7]), 50);
  // h-major layout: voxel (0,0,1) is the second body byte
  EXPECT_EQ(static_cast<unsigned char>(bytes[19 + 1]), s.truth.at(0, 0, 1));
  const auto back = read_voxels(ss, s.truth.spec);
  EXPECT_EQ(back.labels, s.truth.labels);
  auto other = s.truth.spec;
  other.D = 5;
  std::stringstream again(bytes);
  EXPECT_THROW(read_voxels(again, other), DataError);
  std::stringstream truncated(bytes.substr(0, 100));
  EXPECT_THROW(read_voxels(truncated, s.truth.spec), DataError);
}

TEST(FileFormats, SceneRoundTripExactly) {
  const auto s = generate_scene(8, Difficulty::Stacked);
  std::stringstream ss;
  write_scene(ss, s.scene);
  const auto back = read_scene(ss);
  EXPECT_EQ(back.grid, s.scene.grid);
  EXPECT_EQ(back.seed, s.scene.seed);
  EXPECT_EQ(back.difficulty, s.scene.difficulty);
  ASSERT_EQ(back.boxes.size(), s.scene.boxes.size());
  for (std::size_t i = 0; i < back.boxes.size(); ++i) {
    EXPECT_EQ(back.boxes[i].lower, s.scene.boxes[i].lower);
    EXPECT_EQ(back.boxes[i].upper, s.scene.boxes[i].upper);
  }
  EXPECT_EQ(voxelize(back).labels, s.truth.labels);
  std::stringstream bad("TPVSCENE1\nseed 1\ndifficulty hard\n");
  EXPECT_THROW(read_scene(bad), DataError);
}

TEST(Parsing, Difficulty) {
  EXPECT_EQ(parse_difficulty("stacked"), Difficulty::Stacked);
  EXPECT_THROW(parse_difficulty("hard"), ConfigError);
}
