#include "tpv/numeric/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace tpv::numeric {

std::size_t GradCheckReport::checked() const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.checked;
  return n;
}

std::size_t GradCheckReport::failed() const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.failed;
  return n;
}

double GradCheckReport::max_rel_error() const {
  double m = 0.0;
  for (const auto& e : entries) m = std::max(m, e.max_rel_error);
  return m;
}

double GradCheckReport::pass_fraction() const {
  const auto n = checked();
  return n == 0 ? 1.0 : 1.0 - static_cast<double>(failed()) / static_cast<double>(n);
}

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  os << "checked " << checked() << " coords, failed " << failed() << ", max rel error " << max_rel_error();
  for (const auto& e : entries) {
    if (e.failed) os << "\n  " << e.name << ": " << e.failed << "/" << e.checked << " (max " << e.max_rel_error << ")";
  }
  return os.str();
}

double relative_error(double analytic, double numeric, double abs_floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), abs_floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport grad_check(const ScalarFunction& f, ParameterStore<double>& params, const GradCheckOptions& options) {
  GradientMap<double> analytic;
  {
    Tape<double> tape;
    auto loss = f(tape, params);
    analytic = tape.backward(loss, params);
  }
  auto eval = [&] {
    Tape<double> tape;
    return f(tape, params).value().item();
  };

  std::mt19937_64 rng(options.seed);
  GradCheckReport report;
  for (auto& p : params.items()) {
    GradCheckEntry entry;
    entry.name = p.name;
    const auto n = static_cast<std::size_t>(p.tensor.numel());
    std::vector<std::size_t> coords(n);
    std::iota(coords.begin(), coords.end(), 0);
    if (n > options.max_coords_per_param) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords_per_param);
    }
    const auto& g = analytic.at(p.name);
    for (auto i : coords) {
      double& v = p.tensor.storage()[i];
      const double saved = v;
      v = saved + options.step;
      const double up = eval();
      v = saved - options.step;
      const double down = eval();
      v = saved;
      const double fd = (up - down) / (2.0 * options.step);
      const double err = relative_error(g[static_cast<std::int64_t>(i)], fd, options.abs_floor);
      ++entry.checked;
      if (err > options.tolerance) ++entry.failed;
      entry.max_rel_error = std::max(entry.max_rel_error, err);
    }
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace tpv::numeric
