#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "tpv/encoder/encoder.hpp"
#include "tpv/numeric/ops.hpp"
#include "tpv/pipeline/trainer.hpp"
#include "tpv/triplane/planes.hpp"

using namespace tpv;
using geometry::TpvGridSpec;
using geometry::Vec3;

namespace {

TpvGridSpec grid(std::int64_t H, std::int64_t W, std::int64_t D) {
  TpvGridSpec g;
  g.H = H;
  g.W = W;
  g.D = D;
  g.cell_size = 0.4;
  return g;
}

triplane::TpvPlanes random_planes(const TpvGridSpec& g, std::int64_t C) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  auto p = triplane::TpvPlanes::zeros(g, C);
  for (auto v : geometry::kViews) {
    for (auto& x : p.plane(v).storage()) x = u(rng);
  }
  return p;
}

std::vector<Vec3> random_points(const TpvGridSpec& g, std::size_t n) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> ux(g.lower().x(), g.upper().x()), uy(g.lower().y(), g.upper().y()),
      uz(g.lower().z(), g.upper().z());
  std::vector<Vec3> out;
  for (std::size_t i = 0; i < n; ++i) out.emplace_back(ux(rng), uy(rng), uz(rng));
  return out;
}

void BM_QueryPoints(benchmark::State& state) {
  const auto g = grid(100, 100, 8);
  const auto planes = random_planes(g, 32);
  const auto points = random_points(g, static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(triplane::query_points(planes, points));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_QueryPoints)->Arg(1000)->Arg(20000);

void BM_VoxelFeatures(benchmark::State& state) {
  const auto g = grid(state.range(0), state.range(0), 8);
  const auto planes = random_planes(g, 32);
  for (auto _ : state) benchmark::DoNotOptimize(triplane::voxel_features(planes));
  state.SetItemsProcessed(state.iterations() * g.H * g.W * g.D);
}
BENCHMARK(BM_VoxelFeatures)->Arg(50)->Arg(100);

void BM_ResizePlanes(benchmark::State& state) {
  const auto planes = random_planes(grid(50, 50, 4), 32);
  for (auto _ : state) benchmark::DoNotOptimize(triplane::resize_planes(planes, 2.0));
}
BENCHMARK(BM_ResizePlanes);

void BM_BilinearSampleBackward(benchmark::State& state) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> u(0.0f, 48.0f);
  numeric::Tensor plane({50, 50, 32}), coords({state.range(0), 2});
  for (auto& v : plane.storage()) v = u(rng) / 48.0f;
  for (auto& v : coords.storage()) v = u(rng);
  for (auto _ : state) {
    numeric::Tape<float> tape;
    auto out = numeric::bilinear_sample(tape.leaf(plane), tape.constant(coords));
    tape.backward(numeric::sum(out));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_BilinearSampleBackward)->Arg(10000);

pipeline::RunConfig bench_config(std::int64_t side) {
  pipeline::RunConfig c;
  c.grid.H = side;
  c.grid.W = side;
  return c;
}

void BM_Encode(benchmark::State& state) {
  const auto config = bench_config(state.range(0));
  const auto sample = pipeline::generate_sample(config);
  const auto model = pipeline::init_model(config);
  const auto enc = config.encoder_config();
  const auto plan = encoder::EncoderPlan::build(enc, sample.rig);
  for (auto _ : state) benchmark::DoNotOptimize(encoder::encode_planes(model.params, enc, plan, sample.images));
}
BENCHMARK(BM_Encode)->Arg(25)->Arg(50)->Unit(benchmark::kMillisecond);

void BM_PlanBuild(benchmark::State& state) {
  const auto config = bench_config(50);
  const auto sample = pipeline::generate_sample(config);
  const auto enc = config.encoder_config();
  for (auto _ : state) benchmark::DoNotOptimize(encoder::EncoderPlan::build(enc, sample.rig));
}
BENCHMARK(BM_PlanBuild)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  auto config = bench_config(50);
  config.optim.steps = 1;
  config.optim.warmup_steps = 1;
  const auto sample = pipeline::generate_sample(config);
  auto model = pipeline::init_model(config);
  for (auto _ : state) pipeline::train(model, sample);
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
