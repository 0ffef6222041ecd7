#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tpv/numeric/tape.hpp"

namespace tpv::numeric {

struct GradCheckOptions {
  double step = 1e-3;
  double tolerance = 1e-3;
  // Denominator floor of the relative error; keeps near-zero gradients from
  // turning round-off into large ratios.
  double abs_floor = 1e-6;
  std::size_t max_coords_per_param = 64;
  std::uint64_t seed = 0;
};

struct GradCheckEntry {
  std::string name;
  std::size_t checked = 0;
  std::size_t failed = 0;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;

  std::size_t checked() const;
  std::size_t failed() const;
  double max_rel_error() const;
  double pass_fraction() const;
  std::string summary() const;
};

// Builds a scalar on a fresh tape from the parameters. Must be deterministic.
using ScalarFunction = std::function<Var<double>(Tape<double>&, const ParameterStore<double>&)>;

double relative_error(double analytic, double numeric, double abs_floor);

// Compares reverse-mode gradients with central differences, both in 64-bit.
GradCheckReport grad_check(const ScalarFunction& f, ParameterStore<double>& params, const GradCheckOptions& options = {});

}  // namespace tpv::numeric
