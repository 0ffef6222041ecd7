#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "tpv/errors.hpp"
#include "tpv/head/head.hpp"
#include "tpv/numeric/grad_check.hpp"
#include "tpv/numeric/ops.hpp"

using namespace tpv;
using namespace tpv::head;
using numeric::Shape;
using numeric::Tensor;
using numeric::Tensor64;

namespace {

template <typename T>
BasicTensor<T> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  BasicTensor<T> t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.storage()) v = static_cast<T>(u(rng));
  return t;
}

double ce_oracle(const Tensor64& logits, const std::vector<int>& labels) {
  const auto K = logits.dim(1);
  double total = 0.0;
  int n_used = 0;
  for (std::size_t n = 0; n < labels.size(); ++n) {
    if (labels[n] < 0) continue;
    double z = 0.0;
    for (int k = 0; k < K; ++k) z += std::exp(logits[n * K + k]);
    total += -std::log(std::exp(logits[n * K + labels[n]]) / z);
    ++n_used;
  }
  return total / n_used;
}

// Jaccard loss of the mispredicted set M against foreground F: |M| / |F u M|.
double jaccard_set_loss(const std::vector<bool>& M, const std::vector<bool>& F) {
  int m = 0, uni = 0;
  for (std::size_t i = 0; i < M.size(); ++i) {
    m += M[i];
    uni += M[i] || F[i];
  }
  return uni == 0 ? 0.0 : static_cast<double>(m) / uni;
}

// Lovasz extension by its definition over the prefixes of one ordering.
double extension_along(const std::vector<double>& e, const std::vector<bool>& F, const std::vector<std::size_t>& order) {
  std::vector<bool> M(e.size(), false);
  double prev = 0.0, total = 0.0;
  for (std::size_t i : order) {
    M[i] = true;
    const double cur = jaccard_set_loss(M, F);
    total += e[i] * (cur - prev);
    prev = cur;
  }
  return total;
}

double extension_sorted(const std::vector<double>& e, const std::vector<bool>& F) {
  std::vector<std::size_t> order(e.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return e[a] > e[b]; });
  return extension_along(e, F, order);
}

// The Jaccard loss is submodular, so its extension is the maximum over all
// orderings of the greedy sum.
double extension_max_over_permutations(const std::vector<double>& e, const std::vector<bool>& F) {
  std::vector<std::size_t> order(e.size());
  std::iota(order.begin(), order.end(), 0);
  double best = -1e300;
  do {
    best = std::max(best, extension_along(e, F, order));
  } while (std::next_permutation(order.begin(), order.end()));
  return best;
}

double lovasz_oracle(const Tensor64& probs, const std::vector<int>& labels, bool permutations) {
  const auto N = probs.dim(0), K = probs.dim(1);
  double total = 0.0;
  int present = 0;
  for (int c = 0; c < K; ++c) {
    std::vector<bool> F(N);
    std::vector<double> e(N);
    bool any = false;
    for (int n = 0; n < N; ++n) {
      F[n] = labels[n] == c;
      any = any || F[n];
      e[n] = F[n] ? 1.0 - probs[n * K + c] : probs[n * K + c];
    }
    if (!any) continue;
    ++present;
    total += permutations ? extension_max_over_permutations(e, F) : extension_sorted(e, F);
  }
  return total / present;
}

Tensor64 random_probabilities(std::int64_t N, std::int64_t K, std::mt19937_64& rng) {
  auto logits = random_tensor<double>({N, K}, rng, -3.0, 3.0);
  return numeric::softmax(logits, 1);
}

double lovasz_value(const Tensor64& probs, const std::vector<int>& labels) {
  numeric::Tape<double> t;
  return lovasz_softmax(t.constant(probs), labels).value().item();
}

}  // namespace

TEST(MlpHead, ZeroWeightsGiveZeroLogits) {
  HeadConfig c{.in_channels = 4, .hidden = 5, .classes = 3};
  ParameterStore<float> store;
  std::mt19937_64 rng(1);
  init_head(store, "head", c, rng);
  for (auto& p : store.items()) std::fill(p.tensor.storage().begin(), p.tensor.storage().end(), 0.0f);
  numeric::Tape<float> t;
  std::mt19937_64 r2(2);
  const auto out = mlp_head(t, store, "head", c, t.constant(random_tensor<float>({7, 4}, r2))).value();
  EXPECT_EQ(out.shape(), (Shape{7, 3}));
  for (float v : out.data()) EXPECT_EQ(v, 0.0f);
}

TEST(MlpHead, IdentityWeightsPassThrough) {
  HeadConfig c{.in_channels = 3, .hidden = 3, .classes = 3, .activation = Activation::Relu};
  ParameterStore<float> store;
  std::mt19937_64 rng(1);
  init_head(store, "h", c, rng);
  for (const char* name : {"h.fc1.weight", "h.fc2.weight"}) {
    auto& w = store.at(name).tensor;
    std::fill(w.storage().begin(), w.storage().end(), 0.0f);
    for (int i = 0; i < 3; ++i) w[i * 3 + i] = 1.0f;
  }
  numeric::Tape<float> t;
  std::mt19937_64 r2(3);
  const auto x = random_tensor<float>({5, 3}, r2, 0.0, 2.0);
  EXPECT_EQ(mlp_head(t, store, "h", c, t.constant(x)).value(), x);
}

TEST(MlpHead, ChannelMismatchIsDimensionError) {
  HeadConfig c{.in_channels = 4, .hidden = 5, .classes = 3};
  ParameterStore<float> store;
  std::mt19937_64 rng(1);
  init_head(store, "head", c, rng);
  numeric::Tape<float> t;
  EXPECT_THROW(mlp_head(t, store, "head", c, t.constant(Tensor({2, 5}))), DimensionError);
}

TEST(MlpHead, GradientsMatchFiniteDifferences) {
  for (Activation a : {Activation::Gelu, Activation::Relu}) {
    HeadConfig c{.in_channels = 4, .hidden = 6, .classes = 5, .activation = a};
    ParameterStore<double> store;
    std::mt19937_64 rng(4);
    init_head(store, "head", c, rng);
    store.at("head.fc1.bias").tensor = random_tensor<double>({6}, rng);
    store.add("x", random_tensor<double>({8, 4}, rng));
    const std::vector<int> labels = {0, 1, 2, 3, 4, 0, 1, 2};
    auto f = [&](numeric::Tape<double>& t, const ParameterStore<double>& s) {
      return cross_entropy(mlp_head(t, s, "head", c, t.parameter(s, "x")), labels);
    };
    const auto report = numeric::grad_check(f, store, {.step = 1e-5, .tolerance = 1e-4});
    EXPECT_EQ(report.failed(), 0u) << report.summary();
  }
}

TEST(CrossEntropy, UniformLogitsGiveLogK) {
  numeric::Tape<double> t;
  const auto l = cross_entropy(t.constant(Tensor64({3, 4})), {0, 3, 2});
  EXPECT_NEAR(l.value().item(), std::log(4.0), 1e-12);
  EXPECT_NEAR(l.value().item(), 1.3863, 1e-4);
}

TEST(CrossEntropy, ConfidentCorrectLogitIsNearZero) {
  numeric::Tape<float> t;
  Tensor logits({1, 4});
  logits[2] = 20.0f;
  EXPECT_LT(cross_entropy(t.constant(logits), {2}).value().item(), 1e-6);
}

TEST(CrossEntropy, MatchesDirectFormula) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto logits = random_tensor<double>({9, 5}, rng, -4, 4);
    std::vector<int> labels(9);
    for (auto& y : labels) y = static_cast<int>(rng() % 6) - 1;  // includes ignored entries
    labels[0] = 2;
    numeric::Tape<double> t;
    EXPECT_NEAR(cross_entropy(t.constant(logits), labels).value().item(), ce_oracle(logits, labels), 1e-6);
  }
}

TEST(CrossEntropy, AllIgnoredIsUndefined) {
  numeric::Tape<double> t;
  EXPECT_THROW(cross_entropy(t.constant(Tensor64({2, 3})), {-1, -1}), UndefinedLossError);
  EXPECT_THROW(cross_entropy(t.constant(Tensor64({2, 3})), {0, 3}), ContractError);
}

TEST(CrossEntropy, PermutationInvariantAndMonotone) {
  std::mt19937_64 rng(6);
  auto logits = random_tensor<double>({6, 3}, rng);
  const std::vector<int> labels = {0, 1, 2, 2, 1, 0};
  numeric::Tape<double> t;
  const double base = cross_entropy(t.constant(logits), labels).value().item();
  const std::vector<int> perm = {3, 5, 0, 1, 4, 2};
  Tensor64 shuffled({6, 3});
  std::vector<int> shuffled_labels(6);
  for (int i = 0; i < 6; ++i) {
    for (int k = 0; k < 3; ++k) shuffled[i * 3 + k] = logits[perm[i] * 3 + k];
    shuffled_labels[i] = labels[perm[i]];
  }
  EXPECT_NEAR(cross_entropy(t.constant(shuffled), shuffled_labels).value().item(), base, 1e-12);
  double prev = base;
  for (int step = 0; step < 5; ++step) {
    logits[1 * 3 + 1] += 0.5;
    const double cur = cross_entropy(t.constant(logits), labels).value().item();
    EXPECT_LT(cur, prev);
    prev = cur;
  }
}

TEST(CrossEntropy, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(7);
  numeric::ParameterStore<double> store;
  store.add("logits", random_tensor<double>({7, 4}, rng, -2, 2));
  const std::vector<int> labels = {0, -1, 3, 2, 1, -1, 0};
  auto f = [&](numeric::Tape<double>& t, const ParameterStore<double>& s) {
    return cross_entropy(t.parameter(s, "logits"), labels);
  };
  const auto report = numeric::grad_check(f, store, {.step = 1e-5, .tolerance = 1e-6});
  EXPECT_EQ(report.failed(), 0u) << report.summary();
}

TEST(LovaszSoftmax, CorrectOneHotIsZero) {
  Tensor64 p({4, 3});
  const std::vector<int> labels = {0, 2, 1, 2};
  for (int n = 0; n < 4; ++n) p[n * 3 + labels[n]] = 1.0;
  EXPECT_EQ(lovasz_value(p, labels), 0.0);
}

TEST(LovaszSoftmax, BinaryFullyWrongIsOne) {
  Tensor64 p({5, 2});
  const std::vector<int> labels = {0, 1, 1, 0, 1};
  for (int n = 0; n < 5; ++n) p[n * 2 + (1 - labels[n])] = 1.0;
  EXPECT_NEAR(lovasz_value(p, labels), 1.0, 1e-12);
}

TEST(LovaszSoftmax, MatchesExhaustiveExtensionOnFivePoints) {
  std::mt19937_64 rng(8);
  const auto p = random_probabilities(5, 3, rng);
  const std::vector<int> labels = {0, 2, 2, 1, 0};
  EXPECT_NEAR(lovasz_value(p, labels), lovasz_oracle(p, labels, true), 1e-6);
}

TEST(LovaszSoftmax, MatchesExtensionOnRandomSmallInstances) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const std::int64_t N = 1 + static_cast<std::int64_t>(rng() % 8);
    const std::int64_t K = 2 + static_cast<std::int64_t>(rng() % 3);
    const auto p = random_probabilities(N, K, rng);
    std::vector<int> labels(N);
    for (auto& y : labels) y = static_cast<int>(rng() % K);
    const double got = lovasz_value(p, labels);
    EXPECT_NEAR(got, lovasz_oracle(p, labels, false), 1e-6) << "trial " << trial;
    if (N <= 6) EXPECT_NEAR(got, lovasz_oracle(p, labels, true), 1e-6) << "trial " << trial;
  }
}

TEST(LovaszSoftmax, ExplicitClassSetAndErrors) {
  std::mt19937_64 rng(10);
  const auto p = random_probabilities(4, 3, rng);
  numeric::Tape<double> t;
  const std::vector<int> labels = {0, 0, 1, 1};
  const double present = lovasz_softmax(t.constant(p), labels).value().item();
  const double explicit_present =
      lovasz_softmax(t.constant(p), labels, kIgnoreLabel, std::vector<int>{0, 1}).value().item();
  EXPECT_EQ(present, explicit_present);
  // an absent class contributes the largest error of its column
  const double all = lovasz_softmax(t.constant(p), labels, kIgnoreLabel, std::vector<int>{0, 1, 2}).value().item();
  double max_p2 = 0.0;
  for (int n = 0; n < 4; ++n) max_p2 = std::max(max_p2, p[n * 3 + 2]);
  EXPECT_NEAR(all, (2 * present + max_p2) / 3.0, 1e-12);
  EXPECT_THROW(lovasz_softmax(t.constant(p), {-1, -1, -1, -1}), UndefinedLossError);
}

TEST(LovaszSoftmax, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(11);
  numeric::ParameterStore<double> store;
  store.add("logits", random_tensor<double>({8, 4}, rng, -2, 2));
  const std::vector<int> labels = {0, 1, 3, 3, 2, -1, 0, 1};
  auto f = [&](numeric::Tape<double>& t, const ParameterStore<double>& s) {
    return lovasz_softmax(numeric::softmax(t.parameter(s, "logits"), 1), labels);
  };
  const auto report = numeric::grad_check(f, store, {.step = 1e-6, .tolerance = 1e-5});
  EXPECT_EQ(report.failed(), 0u) << report.summary();
}

namespace {

data::TpvGridSpec small_grid() {
  data::TpvGridSpec g;
  g.H = 4;
  g.W = 3;
  g.D = 2;
  g.cell_size = 1.0;
  return g;
}

}  // namespace

TEST(PseudoVoxelLabels, NoPointsGivesAllEmpty) {
  const auto grid = pseudo_voxel_labels({}, small_grid());
  EXPECT_EQ(grid.size(), 24);
  for (auto v : grid.labels) EXPECT_EQ(v, data::kEmptyClass);
}

TEST(PseudoVoxelLabels, OnePointPerVoxelTransfersExactly) {
  const auto g = small_grid();
  data::LabeledPointSet pts;
  for (std::int64_t h = 0; h < g.H; ++h)
    for (std::int64_t w = 0; w < g.W; ++w)
      for (std::int64_t d = 0; d < g.D; ++d) {
        pts.positions.push_back(g.voxel_center(h, w, d) + data::Vec3(0.3, -0.2, 0.1));
        pts.labels.push_back(static_cast<int>((h + 2 * w + 3 * d) % data::kNumClasses));
      }
  const auto grid = pseudo_voxel_labels(pts, g);
  for (std::int64_t h = 0; h < g.H; ++h)
    for (std::int64_t w = 0; w < g.W; ++w)
      for (std::int64_t d = 0; d < g.D; ++d) EXPECT_EQ(grid.at(h, w, d), (h + 2 * w + 3 * d) % data::kNumClasses);
}

TEST(PseudoVoxelLabels, MajorityWithLowestIdTieBreak) {
  const auto g = small_grid();
  const auto c = g.voxel_center(1, 1, 0);
  const auto e = g.voxel_center(2, 0, 1);
  data::LabeledPointSet pts{{c, c, c, e, e, data::Vec3(100, 0, 0)}, {5, 2, 2, 4, 3, 1}};
  const auto grid = pseudo_voxel_labels(pts, g);
  EXPECT_EQ(grid.at(1, 1, 0), 2);
  EXPECT_EQ(grid.at(2, 0, 1), 3);
  int occupied = 0;
  for (auto v : grid.labels) occupied += v != data::kEmptyClass;
  EXPECT_EQ(occupied, 2);
}

TEST(PseudoVoxelLabels, IdempotentUnderDuplication) {
  std::mt19937_64 rng(12);
  const auto g = small_grid();
  data::LabeledPointSet pts;
  std::uniform_real_distribution<double> ux(-2.5, 2.5), uy(-1.8, 1.8), uz(-1.2, 1.2);
  for (int i = 0; i < 60; ++i) {
    pts.positions.emplace_back(ux(rng), uy(rng), uz(rng));
    pts.labels.push_back(static_cast<int>(rng() % data::kNumClasses));
  }
  auto doubled = pts;
  doubled.positions.insert(doubled.positions.end(), pts.positions.begin(), pts.positions.end());
  doubled.labels.insert(doubled.labels.end(), pts.labels.begin(), pts.labels.end());
  EXPECT_EQ(pseudo_voxel_labels(pts, g).labels, pseudo_voxel_labels(doubled, g).labels);
}

TEST(CompositeLoss, RoutesAndSums) {
  numeric::Tape<double> t;
  const std::vector<int> point_labels = {0, 1, 2};
  const std::vector<int> voxel_labels = {1, 1, 3, 0};
  LossInputs<double> in;
  in.point_logits = t.constant(Tensor64({3, 4}));
  in.voxel_logits = t.constant(Tensor64({4, 4}));
  in.point_labels = &point_labels;
  in.voxel_labels = &voxel_labels;
  for (auto ce : {PredictionSource::Point, PredictionSource::Voxel})
    for (auto lv : {PredictionSource::Point, PredictionSource::Voxel}) {
      const auto terms = composite_loss(in, {ce, lv});
      EXPECT_NEAR(terms.ce.value().item(), std::log(4.0), 1e-12);
      EXPECT_EQ(terms.total.value().item(), terms.ce.value().item() + terms.lovasz.value().item());
    }
}

TEST(CompositeLoss, MissingRoutedInputIsRoutingError) {
  numeric::Tape<double> t;
  const std::vector<int> labels = {0, 1};
  LossInputs<double> in;
  in.point_logits = t.constant(Tensor64({2, 3}));
  in.point_labels = &labels;
  EXPECT_NO_THROW(composite_loss(in, {PredictionSource::Point, PredictionSource::Point}));
  EXPECT_THROW(composite_loss(in, {PredictionSource::Voxel, PredictionSource::Point}), RoutingError);
  in.voxel_logits = t.constant(Tensor64({2, 3}));
  EXPECT_THROW(composite_loss(in, {PredictionSource::Point, PredictionSource::Voxel}), RoutingError);
}

TEST(Parsing, SourcesAndActivations) {
  EXPECT_EQ(parse_source("point"), PredictionSource::Point);
  EXPECT_EQ(parse_source("voxel"), PredictionSource::Voxel);
  EXPECT_THROW(parse_source("pixel"), ConfigError);
  EXPECT_EQ(parse_activation(activation_name(Activation::Relu)), Activation::Relu);
  EXPECT_THROW(parse_activation("tanh"), ConfigError);
}
