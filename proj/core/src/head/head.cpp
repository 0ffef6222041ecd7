#include "tpv/head/head.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numeric>

#include "tpv/errors.hpp"
#include "tpv/numeric/ops.hpp"

namespace tpv::head {

using numeric::Shape;

std::string activation_name(Activation a) { return a == Activation::Gelu ? "gelu" : "relu"; }

Activation parse_activation(const std::string& name) {
  if (name == "gelu") return Activation::Gelu;
  if (name == "relu") return Activation::Relu;
  throw ConfigError("unknown activation '" + name + "'");
}

void HeadConfig::validate() const {
  if (in_channels < 1 || hidden < 1) throw ConfigError("head widths must be >= 1");
  if (classes < 2) throw ConfigError("head needs at least two classes");
}

template <typename T>
void init_head(ParameterStore<T>& store, const std::string& prefix, const HeadConfig& c, std::mt19937_64& rng) {
  c.validate();
  auto uniform = [&](Shape shape, std::int64_t fan_in) {
    BasicTensor<T> t(std::move(shape));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (auto& v : t.storage()) v = static_cast<T>(u(rng));
    return t;
  };
  store.add(prefix + ".fc1.weight", uniform({c.in_channels, c.hidden}, c.in_channels));
  store.add(prefix + ".fc1.bias", BasicTensor<T>({c.hidden}));
  store.add(prefix + ".fc2.weight", uniform({c.hidden, c.classes}, c.hidden));
  store.add(prefix + ".fc2.bias", BasicTensor<T>({c.classes}));
}

template <typename T>
Var<T> mlp_head(Tape<T>& tape, const ParameterStore<T>& store, const std::string& prefix, const HeadConfig& c,
                Var<T> features) {
  if (features.shape().empty() || features.shape().back() != c.in_channels) {
    throw DimensionError("head expects " + std::to_string(c.in_channels) + " input channels, got features of shape " +
                         numeric::shape_str(features.shape()));
  }
  auto h = numeric::linear(features, tape.parameter(store, prefix + ".fc1.weight"),
                           tape.parameter(store, prefix + ".fc1.bias"));
  h = c.activation == Activation::Gelu ? numeric::gelu(h) : numeric::relu(h);
  return numeric::linear(h, tape.parameter(store, prefix + ".fc2.weight"), tape.parameter(store, prefix + ".fc2.bias"));
}

template <typename T>
Var<T> cross_entropy(Var<T> logits, const std::vector<int>& labels, int ignore_index) {
  if (logits.shape().size() != 2) throw DimensionError("cross_entropy expects logits [N x K]");
  const std::int64_t N = logits.dim(0), K = logits.dim(1);
  if (static_cast<std::int64_t>(labels.size()) != N) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(N) +
                         " rows");
  }
  const T* x = logits.value().data().data();
  // Softmax rows kept for the backward pass.
  auto probs = std::make_shared<std::vector<T>>(static_cast<std::size_t>(N * K));
  double total = 0.0;
  std::int64_t counted = 0;
  for (std::int64_t n = 0; n < N; ++n) {
    const int y = labels[n];
    if (y == ignore_index) continue;
    if (y < 0 || y >= K) throw ContractError("cross_entropy: label " + std::to_string(y) + " outside [0, " +
                                             std::to_string(K) + ")");
    const T* row = x + n * K;
    const T mx = *std::max_element(row, row + K);
    double z = 0.0;
    for (std::int64_t k = 0; k < K; ++k) z += std::exp(static_cast<double>(row[k] - mx));
    const double log_z = std::log(z) + static_cast<double>(mx);
    total += log_z - static_cast<double>(row[y]);
    for (std::int64_t k = 0; k < K; ++k) (*probs)[n * K + k] = static_cast<T>(std::exp(row[k] - log_z));
    ++counted;
  }
  if (counted == 0) throw UndefinedLossError("cross_entropy: every entry is ignored");
  BasicTensor<T> out = BasicTensor<T>::scalar(static_cast<T>(total / static_cast<double>(counted)));
  return logits.tape().record(
      std::move(out), {logits},
      [logits, labels, ignore_index, probs, N, K, counted](const BasicTensor<T>&, const BasicTensor<T>& g,
                                                             Tape<T>& t) {
        const T scale = g[0] / static_cast<T>(counted);
        auto d = t.grad_buffer(logits).data();
        for (std::int64_t n = 0; n < N; ++n) {
          const int y = labels[n];
          if (y == ignore_index) continue;
          for (std::int64_t k = 0; k < K; ++k) d[n * K + k] += scale * (*probs)[n * K + k];
          d[n * K + y] -= scale;
        }
      });
}

std::vector<double> lovasz_grad(const std::vector<int>& fg) {
  const std::size_t p = fg.size();
  std::vector<double> jac(p);
  const double gts = static_cast<double>(std::accumulate(fg.begin(), fg.end(), 0));
  double cum_fg = 0.0, cum_bg = 0.0;
  for (std::size_t i = 0; i < p; ++i) {
    cum_fg += fg[i];
    cum_bg += 1 - fg[i];
    const double inter = gts - cum_fg;
    const double uni = gts + cum_bg;
    jac[i] = 1.0 - inter / uni;
  }
  for (std::size_t i = p; i-- > 1;) jac[i] -= jac[i - 1];
  return jac;
}

template <typename T>
Var<T> lovasz_softmax(Var<T> probabilities, const std::vector<int>& labels, int ignore_index,
                      const std::optional<std::vector<int>>& classes) {
  if (probabilities.shape().size() != 2) throw DimensionError("lovasz_softmax expects probabilities [N x K]");
  const std::int64_t N = probabilities.dim(0), K = probabilities.dim(1);
  if (static_cast<std::int64_t>(labels.size()) != N) throw DimensionError("lovasz_softmax: label count mismatch");
  std::vector<std::int64_t> rows;
  std::vector<bool> present(static_cast<std::size_t>(K), false);
  for (std::int64_t n = 0; n < N; ++n) {
    const int y = labels[n];
    if (y == ignore_index) continue;
    if (y < 0 || y >= K) throw ContractError("lovasz_softmax: label " + std::to_string(y) + " out of range");
    rows.push_back(n);
    present[y] = true;
  }
  if (rows.empty()) throw UndefinedLossError("lovasz_softmax: no labeled entries");
  std::vector<int> cls;
  if (classes) {
    for (int c : *classes) {
      if (c < 0 || c >= K) throw ContractError("lovasz_softmax: class " + std::to_string(c) + " out of range");
      cls.push_back(c);
    }
  } else {
    for (int c = 0; c < K; ++c)
      if (present[c]) cls.push_back(c);
  }
  if (cls.empty()) throw UndefinedLossError("lovasz_softmax: empty class set");

  const T* p = probabilities.value().data().data();
  const std::size_t M = rows.size();
  // d loss / d p[row, c] for every (row, class) pair, computed with the sort held fixed.
  auto grad = std::make_shared<std::vector<T>>(static_cast<std::size_t>(N * K), T{0});
  double total = 0.0;
  std::vector<double> err(M);
  std::vector<std::size_t> order(M);
  std::vector<int> fg_sorted(M);
  const double inv_classes = 1.0 / static_cast<double>(cls.size());
  for (int c : cls) {
    for (std::size_t i = 0; i < M; ++i) {
      const double pc = static_cast<double>(p[rows[i] * K + c]);
      err[i] = labels[rows[i]] == c ? 1.0 - pc : pc;
    }
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return err[a] > err[b]; });
    for (std::size_t i = 0; i < M; ++i) fg_sorted[i] = labels[rows[order[i]]] == c ? 1 : 0;
    const auto g = lovasz_grad(fg_sorted);
    for (std::size_t i = 0; i < M; ++i) {
      const std::size_t j = order[i];
      total += err[j] * g[i] * inv_classes;
      const double sign = fg_sorted[i] ? -1.0 : 1.0;
      (*grad)[rows[j] * K + c] += static_cast<T>(sign * g[i] * inv_classes);
    }
  }
  BasicTensor<T> out = BasicTensor<T>::scalar(static_cast<T>(total));
  return probabilities.tape().record(std::move(out), {probabilities},
                                     [probabilities, grad](const BasicTensor<T>&, const BasicTensor<T>& g, Tape<T>& t) {
                                       auto d = t.grad_buffer(probabilities).data();
                                       for (std::size_t i = 0; i < grad->size(); ++i) d[i] += g[0] * (*grad)[i];
                                     });
}

data::VoxelLabelGrid pseudo_voxel_labels(const data::LabeledPointSet& points, const data::TpvGridSpec& spec) {
  points.validate();
  auto grid = data::VoxelLabelGrid::filled(spec, data::kEmptyClass);
  std::map<std::int64_t, std::map<int, std::int64_t>> votes;
  for (std::size_t i = 0; i < points.size(); ++i) {
    std::int64_t h, w, d;
    if (!data::locate_voxel(spec, points.positions[i], h, w, d)) continue;
    ++votes[grid.index(h, w, d)][points.labels[i]];
  }
  for (const auto& [idx, counts] : votes) {
    int best = -1;
    std::int64_t best_count = 0;
    for (const auto& [label, count] : counts) {  // ascending label order keeps the lowest id on ties
      if (count > best_count) {
        best = label;
        best_count = count;
      }
    }
    grid.labels[idx] = static_cast<std::uint8_t>(best);
  }
  return grid;
}

std::string source_name(PredictionSource s) { return s == PredictionSource::Point ? "point" : "voxel"; }

PredictionSource parse_source(const std::string& name) {
  if (name == "point") return PredictionSource::Point;
  if (name == "voxel") return PredictionSource::Voxel;
  throw ConfigError("unknown prediction source '" + name + "' (expected point or voxel)");
}

template <typename T>
LossTerms<T> composite_loss(const LossInputs<T>& in, const LossRouting& routing) {
  auto pick = [&](PredictionSource s, const char* loss) -> std::pair<Var<T>, const std::vector<int>*> {
    const auto& logits = s == PredictionSource::Point ? in.point_logits : in.voxel_logits;
    const auto* labels = s == PredictionSource::Point ? in.point_labels : in.voxel_labels;
    if (!logits || labels == nullptr) {
      throw RoutingError(std::string(loss) + " is routed to " + source_name(s) + " predictions, but " +
                         source_name(s) + (logits ? " labels" : " logits") + " were not supplied");
    }
    return {*logits, labels};
  };
  const auto [ce_logits, ce_labels] = pick(routing.ce_input, "cross-entropy");
  const auto [lv_logits, lv_labels] = pick(routing.lovasz_input, "lovasz");
  LossTerms<T> terms;
  terms.ce = cross_entropy(ce_logits, *ce_labels, in.ignore_index);
  terms.lovasz = lovasz_softmax(numeric::softmax(lv_logits, 1), *lv_labels, in.ignore_index);
  terms.total = numeric::add(terms.ce, terms.lovasz);
  return terms;
}

#define TPV_INSTANTIATE_HEAD(T)                                                                               \
  template void init_head<T>(ParameterStore<T>&, const std::string&, const HeadConfig&, std::mt19937_64&);   \
  template Var<T> mlp_head<T>(Tape<T>&, const ParameterStore<T>&, const std::string&, const HeadConfig&,     \
                              Var<T>);                                                                      \
  template Var<T> cross_entropy<T>(Var<T>, const std::vector<int>&, int);                                  \
  template Var<T> lovasz_softmax<T>(Var<T>, const std::vector<int>&, int, const std::optional<std::vector<int>>&); \
  template LossTerms<T> composite_loss<T>(const LossInputs<T>&, const LossRouting&);

TPV_INSTANTIATE_HEAD(float)
TPV_INSTANTIATE_HEAD(double)

}  // namespace tpv::head
