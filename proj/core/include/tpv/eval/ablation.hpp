#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tpv/pipeline/config.hpp"
#include "tpv/pipeline/trainer.hpp"

namespace tpv::eval {

// One configuration of an ablation grid: key=value lines applied on top of the
// base config.
struct AblationVariant {
  std::string name;
  std::string overrides;
};

struct AblationRow {
  std::string variant;
  std::uint64_t seed = 0;
  pipeline::Scores heldout;  // point scores on a held-out LiDAR sweep, grid scores on the dense truth
  double train_point_miou = 0.0;
  double final_loss = 0.0;
};

struct AblationReport {
  std::string title;
  std::vector<std::string> variants;
  std::vector<std::uint64_t> seeds;
  std::vector<AblationRow> rows;

  const AblationRow& row(const std::string& variant, std::uint64_t seed) const;
  // Mean over seeds of one variant.
  pipeline::Scores mean(const std::string& variant) const;

  // Aligned text table, one line per run plus a mean line per variant.
  std::string to_table() const;
  // Comma-separated, header first, one line per run.
  std::string to_csv() const;
};

// Trains every variant on every seed, one after another. Each run regenerates
// its scene from the run's own config, so variants sharing a grid share the
// scene for a given seed.
AblationReport run_ablation(const std::string& title, const pipeline::RunConfig& base,
                            const std::vector<AblationVariant>& variants, const std::vector<std::uint64_t>& seeds,
                            const std::function<void(const AblationRow&)>& on_row = {});

// Loss routing: every pairing of CE input and Lovasz input.
std::vector<AblationVariant> routing_grid();
// TPV at the base grid and at half plane channels, against BEV at the base grid.
std::vector<AblationVariant> resolution_grid(const pipeline::RunConfig& base);
// (HCAB, HAB) block counts (2,4), (3,2), (4,0).
std::vector<AblationVariant> block_grid();

// Looks up "routing", "resolution" or "blocks"; throws ConfigError otherwise.
std::vector<AblationVariant> ablation_preset(const std::string& name, const pipeline::RunConfig& base);

}  // namespace tpv::eval
