#include "tpv/eval/ablation.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "tpv/errors.hpp"
#include "tpv/pipeline/sample.hpp"

namespace tpv::eval {

namespace {

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

const AblationRow& AblationReport::row(const std::string& variant, std::uint64_t seed) const {
  for (const auto& r : rows) {
    if (r.variant == variant && r.seed == seed) return r;
  }
  throw ContractError("ablation report has no run " + variant + " / seed " + std::to_string(seed));
}

pipeline::Scores AblationReport::mean(const std::string& variant) const {
  pipeline::Scores m;
  int n = 0;
  for (const auto& r : rows) {
    if (r.variant != variant) continue;
    m.point_miou += r.heldout.point_miou;
    m.point_miou_from_voxels += r.heldout.point_miou_from_voxels;
    m.sc_iou += r.heldout.sc_iou;
    m.ssc_miou += r.heldout.ssc_miou;
    ++n;
  }
  if (n == 0) throw ContractError("ablation report has no runs of " + variant);
  m.point_miou /= n;
  m.point_miou_from_voxels /= n;
  m.sc_iou /= n;
  m.ssc_miou /= n;
  return m;
}

std::string AblationReport::to_table() const {
  std::size_t width = 7;
  for (const auto& v : variants) width = std::max(width, v.size());
  std::ostringstream out;
  char line[256];
  const auto emit = [&](const std::string& name, const std::string& seed, const pipeline::Scores& s,
                        const std::string& train, const std::string& loss) {
    std::snprintf(line, sizeof line, "%-*s  %6s  %9s  %9s  %7s  %8s  %10s  %8s\n", static_cast<int>(width),
                  name.c_str(), seed.c_str(), fixed(s.point_miou).c_str(), fixed(s.point_miou_from_voxels).c_str(),
                  fixed(s.sc_iou).c_str(), fixed(s.ssc_miou).c_str(), train.c_str(), loss.c_str());
    out << line;
  };
  out << title << "\n";
  std::snprintf(line, sizeof line, "%-*s  %6s  %9s  %9s  %7s  %8s  %10s  %8s\n", static_cast<int>(width), "variant",
                "seed", "pt_mIoU", "vox_mIoU", "SC_IoU", "SSC_mIoU", "train_pt", "loss");
  out << line;
  for (const auto& v : variants) {
    for (const auto& r : rows) {
      if (r.variant == v) emit(v, std::to_string(r.seed), r.heldout, fixed(r.train_point_miou), fixed(r.final_loss));
    }
    emit(v, "mean", mean(v), "", "");
  }
  return out.str();
}

std::string AblationReport::to_csv() const {
  std::ostringstream out;
  out << "variant,seed,point_miou,voxel_point_miou,sc_iou,ssc_miou,train_point_miou,final_loss\n";
  for (const auto& r : rows) {
    out << r.variant << ',' << r.seed << ',' << fixed(r.heldout.point_miou) << ','
        << fixed(r.heldout.point_miou_from_voxels) << ',' << fixed(r.heldout.sc_iou) << ','
        << fixed(r.heldout.ssc_miou) << ',' << fixed(r.train_point_miou) << ',' << fixed(r.final_loss) << '\n';
  }
  return out.str();
}

AblationReport run_ablation(const std::string& title, const pipeline::RunConfig& base,
                            const std::vector<AblationVariant>& variants, const std::vector<std::uint64_t>& seeds,
                            const std::function<void(const AblationRow&)>& on_row) {
  if (variants.empty() || seeds.empty()) throw ConfigError("ablation needs at least one variant and one seed");
  AblationReport report;
  report.title = title;
  report.seeds = seeds;
  for (const auto& v : variants) {
    if (std::find(report.variants.begin(), report.variants.end(), v.name) != report.variants.end()) {
      throw ConfigError("duplicate ablation variant " + v.name);
    }
    report.variants.push_back(v.name);
  }
  // Validate every configuration before spending time on training.
  std::vector<pipeline::RunConfig> configs;
  for (const auto& v : variants) {
    auto c = base;
    c.apply_text(v.overrides);
    c.validate();
    configs.push_back(c);
  }
  for (const auto seed : seeds) {
    for (std::size_t i = 0; i < variants.size(); ++i) {
      auto config = configs[i];
      config.seed = seed;
      const auto sample = pipeline::generate_sample(config);
      auto model = pipeline::init_model(config);
      const auto log = pipeline::train(model, sample);
      const auto heldout = pipeline::with_heldout_points(sample, config);
      AblationRow r;
      r.variant = variants[i].name;
      r.seed = seed;
      r.heldout = pipeline::score(pipeline::predict(model, heldout), heldout);
      r.train_point_miou = pipeline::score(pipeline::predict(model, sample), sample).point_miou;
      r.final_loss = log.empty() ? 0.0 : log.back().loss;
      if (on_row) on_row(r);
      report.rows.push_back(std::move(r));
    }
  }
  return report;
}

std::vector<AblationVariant> routing_grid() {
  return {
      {"ce=voxel,lovasz=point", "loss.ce_input=voxel\nloss.lovasz_input=point"},
      {"ce=point,lovasz=voxel", "loss.ce_input=point\nloss.lovasz_input=voxel"},
      {"voxel-only", "loss.ce_input=voxel\nloss.lovasz_input=voxel"},
      {"point-only", "loss.ce_input=point\nloss.lovasz_input=point"},
  };
}

std::vector<AblationVariant> resolution_grid(const pipeline::RunConfig& base) {
  const auto& g = base.grid;
  const auto c = base.encoder.channels;
  const auto hw = std::to_string(g.H) + "x" + std::to_string(g.W);
  const auto tpv = "tpv " + hw + "x" + std::to_string(g.D);
  std::vector<AblationVariant> out = {{tpv + " C=" + std::to_string(c), "encoder.bev=false"}};
  if (c / 2 >= base.encoder.heads && (c / 2) % base.encoder.heads == 0) {
    out.push_back({tpv + " C=" + std::to_string(c / 2), "encoder.bev=false\nencoder.channels=" + std::to_string(c / 2)});
  }
  out.push_back({"bev " + hw + " C=" + std::to_string(c), "encoder.bev=true"});
  return out;
}

std::vector<AblationVariant> block_grid() {
  return {
      {"N1=2,N2=4", "encoder.hcab_blocks=2\nencoder.hab_blocks=4"},
      {"N1=3,N2=2", "encoder.hcab_blocks=3\nencoder.hab_blocks=2"},
      {"N1=4,N2=0", "encoder.hcab_blocks=4\nencoder.hab_blocks=0"},
  };
}

std::vector<AblationVariant> ablation_preset(const std::string& name, const pipeline::RunConfig& base) {
  if (name == "routing") return routing_grid();
  if (name == "resolution") return resolution_grid(base);
  if (name == "blocks") return block_grid();
  throw ConfigError("unknown ablation '" + name + "' (expected routing, resolution or blocks)");
}

}  // namespace tpv::eval
