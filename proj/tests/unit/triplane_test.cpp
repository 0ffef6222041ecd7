#include <cmath>
#include <filesystem>
#include <future>
#include <random>

#include <gtest/gtest.h>

#include "tpv/errors.hpp"
#include "tpv/numeric/grad_check.hpp"
#include "tpv/numeric/ops.hpp"
#include "tpv/triplane/planes.hpp"

using namespace tpv;
using namespace tpv::triplane;
using tpv::numeric::ParameterStore;
using tpv::numeric::Tape;

namespace {

TpvGridSpec grid(std::int64_t H, std::int64_t W, std::int64_t D, double s) {
  TpvGridSpec g;
  g.H = H;
  g.W = W;
  g.D = D;
  g.cell_size = s;
  return g;
}

template <typename T>
void fill_random(BasicTensor<T>& t, std::mt19937& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& v : t.storage()) v = static_cast<T>(u(rng));
}

TpvPlanes random_planes(const TpvGridSpec& g, std::int64_t C, unsigned seed) {
  std::mt19937 rng(seed);
  auto p = TpvPlanes::zeros(g, C);
  fill_random(p.hw, rng);
  fill_random(p.dh, rng);
  fill_random(p.wd, rng);
  return p;
}

std::vector<Vec3> random_points(const TpvGridSpec& g, int n, unsigned seed, double margin = 0.0) {
  std::mt19937 rng(seed);
  const Vec3 lo = g.lower() - Vec3::Constant(margin), hi = g.upper() + Vec3::Constant(margin);
  std::vector<Vec3> pts;
  for (int i = 0; i < n; ++i) {
    Vec3 p;
    for (int a = 0; a < 3; ++a) p[a] = std::uniform_real_distribution<double>(lo[a], hi[a])(rng);
    pts.push_back(p);
  }
  return pts;
}

// Direct evaluation of the sum of three clamped bilinear samples.
double oracle_feature(const TpvPlanes& p, const Vec3& x, std::int64_t c) {
  auto sample = [&](const Tensor& plane, double a, double b) {
    const std::int64_t A = plane.dim(0), B = plane.dim(1), C = plane.dim(2);
    a = std::clamp(a, 0.0, static_cast<double>(A - 1));
    b = std::clamp(b, 0.0, static_cast<double>(B - 1));
    auto at = [&](std::int64_t i, std::int64_t j) { return static_cast<double>(plane[(i * B + j) * C + c]); };
    const auto i0 = static_cast<std::int64_t>(std::floor(a)), j0 = static_cast<std::int64_t>(std::floor(b));
    const auto i1 = std::min(i0 + 1, A - 1), j1 = std::min(j0 + 1, B - 1);
    const double fa = a - i0, fb = b - j0;
    return (1 - fa) * (1 - fb) * at(i0, j0) + (1 - fa) * fb * at(i0, j1) + fa * (1 - fb) * at(i1, j0) +
           fa * fb * at(i1, j1);
  };
  const auto& g = p.spec;
  const double gx = (x.x() - g.origin.x()) / g.cell_size + g.H / 2.0 - 0.5;
  const double gy = (x.y() - g.origin.y()) / g.cell_size + g.W / 2.0 - 0.5;
  const double gz = (x.z() - g.origin.z()) / g.cell_size + g.D / 2.0 - 0.5;
  return sample(p.hw, gx, gy) + sample(p.dh, gz, gx) + sample(p.wd, gy, gz);
}

}  // namespace

TEST(QueryPoints, ZeroPlanesGiveZeros) {
  const auto g = grid(6, 5, 3, 0.5);
  const auto p = TpvPlanes::zeros(g, 4);
  const auto out = query_points(p, random_points(g, 20, 1, 1.0));
  EXPECT_EQ(out.shape(), (numeric::Shape{20, 4}));
  for (float v : out.data()) EXPECT_EQ(v, 0.0f);
}

TEST(QueryPoints, ConstantPlanesSum) {
  const auto g = grid(6, 5, 3, 0.5);
  auto p = TpvPlanes::zeros(g, 2);
  std::fill(p.hw.storage().begin(), p.hw.storage().end(), 1.5f);
  std::fill(p.dh.storage().begin(), p.dh.storage().end(), -0.25f);
  std::fill(p.wd.storage().begin(), p.wd.storage().end(), 2.0f);
  const auto out = query_points(p, random_points(g, 30, 2, 2.0));
  for (float v : out.data()) EXPECT_FLOAT_EQ(v, 3.25f);
}

TEST(QueryPoints, MatchesDirectOracle) {
  auto g = grid(7, 5, 4, 0.3);
  g.origin = Vec3(0.1, -0.2, 0.05);
  const auto p = random_planes(g, 3, 3);
  const auto pts = random_points(g, 100, 4, 0.5);
  const auto out = query_points(p, pts);
  for (std::size_t n = 0; n < pts.size(); ++n)
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(out[n * 3 + c], oracle_feature(p, pts[n], c), 1e-5);
}

TEST(VoxelFeatures, OnesGiveThree) {
  auto p = TpvPlanes::zeros(grid(2, 2, 2, 1.0), 1);
  for (View v : geometry::kViews) std::fill(p.plane(v).storage().begin(), p.plane(v).storage().end(), 1.0f);
  const auto vox = voxel_features(p);
  EXPECT_EQ(vox.shape(), (numeric::Shape{2, 2, 2, 1}));
  for (float v : vox.data()) EXPECT_EQ(v, 3.0f);
}

TEST(VoxelFeatures, BroadcastEqualsQueryAtCentersExactly) {
  for (const auto& g : {grid(4, 4, 2, 1.0), grid(7, 5, 3, 0.37), grid(13, 9, 4, 0.4)}) {
    auto spec = g;
    spec.origin = Vec3(0.3, -0.7, 0.11);
    const auto p = random_planes(spec, 5, 11);
    const auto vox = voxel_features(p);
    std::vector<Vec3> centers;
    for (std::int64_t h = 0; h < spec.H; ++h)
      for (std::int64_t w = 0; w < spec.W; ++w)
        for (std::int64_t d = 0; d < spec.D; ++d) centers.push_back(spec.voxel_center(h, w, d));
    const auto q = query_points(p, centers);
    ASSERT_EQ(q.numel(), vox.numel());
    for (std::int64_t i = 0; i < q.numel(); ++i) ASSERT_EQ(q[i], vox[i]) << "index " << i;
  }
}

TEST(VoxelFeatures, BudgetExceededIsResourceError) {
  const auto p = TpvPlanes::zeros(grid(20, 20, 8, 0.5), 16);
  EXPECT_THROW(voxel_features(p, 1000), ResourceError);
  EXPECT_NO_THROW(voxel_features(p, 20 * 20 * 8 * 16 * 4));
}

TEST(MemoryAccount, PlaneAndVoxelCounts) {
  const auto m = memory_account(grid(200, 200, 16, 0.5), 128);
  EXPECT_EQ(m.plane_values, 5'939'200);
  EXPECT_EQ(m.voxel_values, 81'920'000);
  EXPECT_NEAR(m.ratio(), 13.79, 0.01);
  const auto p = TpvPlanes::zeros(grid(9, 7, 3, 0.5), 6);
  EXPECT_EQ(p.value_count(), memory_account(p.spec, 6).plane_values);
}

TEST(ResizePlanes, FactorOneIsIdentity) {
  const auto p = random_planes(grid(5, 4, 3, 0.5), 2, 5);
  const auto r = resize_planes(p, 1.0);
  EXPECT_EQ(r.hw, p.hw);
  EXPECT_EQ(r.dh, p.dh);
  EXPECT_EQ(r.wd, p.wd);
  EXPECT_EQ(r.spec, p.spec);
}

TEST(ResizePlanes, AffineFieldStaysAffine) {
  const auto g = grid(6, 5, 4, 0.5);
  auto p = TpvPlanes::zeros(g, 1);
  // value = 0.3 * a - 0.7 * b + 0.2 on each plane's sample coordinates
  for (View v : geometry::kViews) {
    auto& t = p.plane(v);
    for (std::int64_t i = 0; i < t.dim(0); ++i)
      for (std::int64_t j = 0; j < t.dim(1); ++j) t[i * t.dim(1) + j] = static_cast<float>(0.3 * i - 0.7 * j + 0.2);
  }
  const auto r = resize_planes(p, 2.0);
  EXPECT_EQ(r.spec.H, 12);
  EXPECT_EQ(r.spec.D, 8);
  EXPECT_DOUBLE_EQ(r.spec.cell_size, 0.25);
  // new sample j sits at old position (j - 1) / 2; inside the old sample range the field is affine
  for (View v : geometry::kViews) {
    const auto& t = r.plane(v);
    const auto& old = p.plane(v);
    for (std::int64_t i = 1; i < t.dim(0) - 1; ++i)
      for (std::int64_t j = 1; j < t.dim(1) - 1; ++j) {
        const double a = (i - 1) / 2.0, b = (j - 1) / 2.0;
        if (a > old.dim(0) - 1 || b > old.dim(1) - 1) continue;
        EXPECT_NEAR(t[i * t.dim(1) + j], 0.3 * a - 0.7 * b + 0.2, 1e-6);
      }
  }
}

TEST(ResizePlanes, IntegerFactorsPreserveQueries) {
  auto g = grid(6, 5, 3, 0.4);
  g.origin = Vec3(0.2, 0.1, -0.3);
  const auto p = random_planes(g, 3, 6);
  auto pts = random_points(g, 300, 7, 0.6);
  for (std::int64_t h = 0; h < g.H; ++h)
    for (std::int64_t d = 0; d < g.D; ++d) pts.push_back(g.voxel_center(h, 2, d));
  const auto before = query_points(p, pts);
  for (double k : {2.0, 3.0, 4.0, 5.0}) {
    const auto r = resize_planes(p, k);
    EXPECT_EQ(r.spec.H, static_cast<std::int64_t>(6 * k));
    const auto after = query_points(r, pts);
    for (std::int64_t i = 0; i < before.numel(); ++i) ASSERT_NEAR(after[i], before[i], 1e-5) << "factor " << k;
  }
}

TEST(ResizePlanes, EightTimesUpsamplingRuns) {
  const auto p = random_planes(grid(50, 50, 4, 0.4), 4, 8);
  const auto r = resize_planes(p, std::array<std::int64_t, 3>{400, 400, 32});
  EXPECT_EQ(r.hw.shape(), (numeric::Shape{400, 400, 4}));
  EXPECT_EQ(r.dh.shape(), (numeric::Shape{32, 400, 4}));
  const auto pts = random_points(p.spec, 200, 9);
  const auto a = query_points(p, pts), b = query_points(r, pts);
  for (std::int64_t i = 0; i < a.numel(); ++i) ASSERT_NEAR(a[i], b[i], 1e-5);
}

TEST(ResizePlanes, DownsamplingKeepsCoverage) {
  const auto p = random_planes(grid(8, 8, 4, 0.25), 2, 10);
  const auto r = resize_planes(p, 0.5);
  EXPECT_EQ(r.spec.H, 4);
  EXPECT_EQ(r.spec.D, 2);
  EXPECT_DOUBLE_EQ(r.spec.cell_size, 0.5);
  EXPECT_TRUE(r.spec.lower().isApprox(p.spec.lower()));
}

TEST(ResizePlanes, InvalidRequestsAreConfigErrors) {
  const auto p = random_planes(grid(4, 4, 2, 0.5), 1, 11);
  EXPECT_THROW(resize_planes(p, 0.1), ConfigError);
  EXPECT_THROW(resize_planes(p, 0.0), ConfigError);
  EXPECT_THROW(resize_planes(p, -2.0), ConfigError);
  EXPECT_THROW(resize_planes(p, std::array<std::int64_t, 3>{8, 8, 2}), ConfigError);
  EXPECT_THROW(resize_planes(p, std::array<std::int64_t, 3>{0, 0, 0}), ConfigError);
}

TEST(BevMode, IgnoresHeight) {
  const auto g = grid(6, 6, 4, 0.5);
  const auto bev = bev_mode(random_planes(g, 3, 12));
  const std::vector<Vec3> pts = {Vec3(0.3, -0.4, -0.9), Vec3(0.3, -0.4, 0.2), Vec3(0.3, -0.4, 0.95)};
  const auto out = query_points(bev, pts);
  for (int c = 0; c < 3; ++c) {
    EXPECT_EQ(out[c], out[3 + c]);
    EXPECT_EQ(out[c], out[6 + c]);
  }
}

TEST(BevMode, MatchesFullQueryWithZeroSidePlanes) {
  const auto g = grid(6, 6, 4, 0.5);
  auto p = random_planes(g, 3, 13);
  std::fill(p.dh.storage().begin(), p.dh.storage().end(), 0.0f);
  std::fill(p.wd.storage().begin(), p.wd.storage().end(), 0.0f);
  const auto pts = random_points(g, 50, 14);
  EXPECT_EQ(query_points(bev_mode(p), pts), query_points(p, pts));
}

TEST(QueryPoints, SidePlanesSeparatePointsDifferingInZ) {
  const auto g = grid(6, 6, 4, 0.5);
  const auto p = random_planes(g, 3, 15);
  const std::vector<Vec3> pts = {Vec3(0.3, -0.4, -0.75), Vec3(0.3, -0.4, 0.75)};
  const auto out = query_points(p, pts);
  bool differs = false;
  for (int c = 0; c < 3; ++c) differs = differs || out[c] != out[3 + c];
  EXPECT_TRUE(differs);
}

TEST(QueryPoints, ConcurrentReadersAgree) {
  const auto g = grid(16, 16, 4, 0.5);
  const auto p = random_planes(g, 8, 16);
  const auto pts = random_points(g, 500, 17);
  const auto ref = query_points(p, pts);
  std::vector<std::future<Tensor>> jobs;
  for (int i = 0; i < 4; ++i) jobs.push_back(std::async(std::launch::async, [&] { return query_points(p, pts); }));
  for (auto& j : jobs) EXPECT_EQ(j.get(), ref);
}

TEST(QueryPoints, TapeAndDirectPathsAgree) {
  const auto g = grid(7, 5, 4, 0.3);
  const auto p = random_planes(g, 3, 18);
  const auto pts = random_points(g, 60, 19, 0.4);
  Tape<float> tape;
  PlaneVars<float> v{tape.constant(p.hw), tape.constant(p.dh), tape.constant(p.wd)};
  const auto a = query_points(v, g, pts).value();
  const auto b = query_points(p, pts);
  for (std::int64_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a[i], b[i], 1e-5);
  const auto va = voxel_features(v, g).value();
  const auto vb = voxel_features(p);
  for (std::int64_t i = 0; i < va.numel(); ++i) EXPECT_NEAR(va[i], vb[i], 1e-6);
}

TEST(QueryPoints, GradientsMatchFiniteDifferences) {
  const auto g = grid(5, 4, 3, 0.5);
  std::mt19937 rng(20);
  ParameterStore<double> store;
  for (const char* name : {"hw", "dh", "wd"}) {
    const auto e = g.plane_extent(geometry::parse_view(name[0] == 'h' ? "top" : name[0] == 'd' ? "side" : "front"));
    numeric::Tensor64 t({e[0], e[1], 2});
    fill_random(t, rng);
    store.add(name, t);
  }
  const auto pts = random_points(g, 25, 21);
  numeric::Tensor64 probe_q({25, 2}), probe_v({g.H * g.W * g.D, 2});
  fill_random(probe_q, rng);
  fill_random(probe_v, rng);
  for (bool bev : {false, true}) {
    auto f = [&](Tape<double>& t, const ParameterStore<double>& s) {
      PlaneVars<double> v{t.parameter(s, "hw"), t.parameter(s, "dh"), t.parameter(s, "wd"), bev};
      auto q = numeric::sum(numeric::mul(query_points(v, g, pts), t.constant(probe_q)));
      auto vox = numeric::sum(numeric::mul(voxel_features(v, g), t.constant(probe_v)));
      return numeric::add(q, vox);
    };
    const auto report = numeric::grad_check(f, store, {.step = 1e-5, .tolerance = 1e-6});
    EXPECT_EQ(report.failed(), 0u) << report.summary();
  }
}

TEST(PlaneSnapshot, RoundTrip) {
  auto g = grid(5, 4, 3, 0.35);
  g.origin = Vec3(0.1, 0.2, -0.3);
  auto p = random_planes(g, 3, 22);
  p.bev = true;
  const auto prefix = std::filesystem::temp_directory_path() / "tpv_plane_snapshot_test";
  save_planes(prefix, p);
  const auto q = load_planes(prefix);
  EXPECT_EQ(q.spec, p.spec);
  EXPECT_EQ(q.bev, p.bev);
  EXPECT_EQ(q.hw, p.hw);
  EXPECT_EQ(q.dh, p.dh);
  EXPECT_EQ(q.wd, p.wd);
  EXPECT_THROW(load_planes(prefix.string() + "_missing"), DataError);
}

TEST(Planes, ValidateRejectsMismatchedExtents) {
  auto p = TpvPlanes::zeros(grid(4, 3, 2, 0.5), 2);
  p.dh = Tensor({2, 4, 3});
  EXPECT_THROW(p.validate(), DimensionError);
  p = TpvPlanes::zeros(grid(4, 3, 2, 0.5), 2);
  p.wd = Tensor({2, 3, 2});
  EXPECT_THROW(p.validate(), DimensionError);
}
