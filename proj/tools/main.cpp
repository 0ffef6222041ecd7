#include <cstdio>
#include <functional>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tpv/data/io.hpp"
#include "tpv/errors.hpp"
#include "tpv/eval/ablation.hpp"
#include "tpv/eval/metrics.hpp"
#include "tpv/pipeline/config.hpp"
#include "tpv/pipeline/sample.hpp"
#include "tpv/pipeline/trainer.hpp"
#include "tpv/triplane/planes.hpp"

namespace fs = std::filesystem;
using namespace tpv;
using pipeline::RunConfig;

namespace {

enum ExitCode : int { kOk = 0, kOtherExit = 1, kConfigExit = 2, kDataExit = 3, kNumericExit = 4 };

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "flat key=value run config");
  cmd->add_option("--seed", f.seed, "overrides the config seed");
  cmd->add_option("--set", f.sets, "extra key=value override, repeatable");
}

// Defaults, then the data directory's config, then --config, --set and --seed.
RunConfig resolve_config(const CommonFlags& f, const std::optional<fs::path>& data_dir = std::nullopt) {
  RunConfig c;
  if (data_dir && fs::exists(*data_dir / "config.txt")) c = RunConfig::load(*data_dir / "config.txt");
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    if (!in) throw ConfigError("cannot read config " + f.config);
    std::ostringstream text;
    text << in.rdbuf();
    c.apply_text(text.str());
  }
  for (const auto& s : f.sets) c.apply_text(s);
  if (f.seed) c.seed = *f.seed;
  c.validate();
  return c;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

void ensure_fresh_dir(const fs::path& dir) {
  if (fs::exists(dir) && !(fs::is_directory(dir) && fs::is_empty(dir))) {
    throw DataError("refusing to write into non-empty " + dir.string());
  }
  fs::create_directories(dir);
}

std::string iou_lines(const std::vector<int>& pred, const std::vector<int>& truth, int K, const std::set<int>& exclude,
                      const char* label) {
  const auto report = eval::miou(pred, truth, K, {}, exclude);
  std::ostringstream out;
  char line[128];
  for (int k = 0; k < K; ++k) {
    if (exclude.count(k)) continue;
    const auto& v = report.per_class[k];
    std::snprintf(line, sizeof line, "  %-8s %-8s %s\n", label, data::class_name(k).c_str(),
                  v ? std::to_string(*v).c_str() : "absent");
    out << line;
  }
  return out.str();
}

int cmd_gen(const CommonFlags& f, const std::string& difficulty, const std::string& out) {
  auto config = resolve_config(f);
  if (!difficulty.empty()) config.difficulty = data::parse_difficulty(difficulty);
  const auto sample = pipeline::generate_sample(config);
  pipeline::save_sample(out, sample, config);
  std::printf("wrote %s: %zu boxes, %zu points, %zu cameras, grid %lldx%lldx%lld\n", out.c_str(),
              sample.scene.boxes.size(), sample.points.size(), sample.images.size(),
              static_cast<long long>(config.grid.H), static_cast<long long>(config.grid.W),
              static_cast<long long>(config.grid.D));
  return kOk;
}

int cmd_train(const CommonFlags& f, const std::string& data_dir, const std::string& out, int log_every) {
  const auto config = resolve_config(f, fs::path(data_dir));
  const auto sample = pipeline::load_sample(data_dir);
  auto model = pipeline::init_model(config);
  std::printf("# %s\n", "config");
  std::istringstream lines(config.to_text());
  for (std::string l; std::getline(lines, l);) std::printf("# %s\n", l.c_str());
  const auto last = config.optim.steps - 1;
  pipeline::train(model, sample, [&](const pipeline::StepRecord& r) {
    if (log_every > 0 && (r.step % log_every == 0 || r.step == last)) {
      std::printf("step %d loss %.6f ce %.6f lovasz %.6f rate %.6g grad_norm %.4f\n", r.step, r.loss, r.ce, r.lovasz,
                  r.rate, r.grad_norm);
      std::fflush(stdout);
    }
  });
  if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
  pipeline::save_model(out, model);
  std::printf("saved %s (config in %s)\n", out.c_str(), encoder::config_sidecar(out).c_str());
  return kOk;
}

int cmd_eval(const std::string& checkpoint, const std::string& data_dir, const std::string& task_name,
             bool heldout, const std::string& out) {
  const auto model = pipeline::load_model(checkpoint);
  auto sample = pipeline::load_sample(data_dir);
  if (heldout) sample = pipeline::with_heldout_points(sample, model.config);
  const auto task = task_name.empty() ? model.config.task : pipeline::parse_task(task_name);
  const auto prediction = pipeline::predict(model, sample);
  const auto scores = pipeline::score(prediction, sample);
  const int K = data::kNumClasses + 1;
  const std::set<int> empty = {data::kEmptyClass};

  std::ostringstream report;
  report << "task " << pipeline::task_name(task) << (heldout ? " (held-out sweep)" : "") << "\n";
  if (task == pipeline::Task::Points) {
    report << "point_miou " << scores.point_miou << "\n";
    report << "point_miou_from_voxels " << scores.point_miou_from_voxels << "\n";
    report << iou_lines(prediction.points, sample.points.labels, K, empty, "point");
  } else {
    std::vector<int> pred(prediction.voxels.labels.begin(), prediction.voxels.labels.end());
    std::vector<int> truth(sample.truth.labels.begin(), sample.truth.labels.end());
    report << "sc_iou " << scores.sc_iou << "\n";
    report << "ssc_miou " << scores.ssc_miou << "\n";
    report << iou_lines(pred, truth, K, empty, "voxel");
  }
  std::cout << report.str();
  if (!out.empty()) {
    if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
    std::ostringstream doc;
    doc << report.str() << "# config\n" << model.config.to_text();
    write_text(out, doc.str());
  }
  return kOk;
}

// Class colors on a [rows x cols] label image; empty cells take the background.
numeric::Tensor label_image(std::int64_t rows, std::int64_t cols, const std::function<int(std::int64_t, std::int64_t)>& at) {
  numeric::Tensor img({rows, cols, 3});
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t c = 0; c < cols; ++c) {
      const int k = at(r, c);
      const auto color = k == data::kEmptyClass ? data::kBackgroundColor : data::class_color(k);
      for (int ch = 0; ch < 3; ++ch) img[(r * cols + c) * 3 + ch] = color[ch];
    }
  }
  return img;
}

int cmd_export(const std::string& checkpoint, const std::string& data_dir, double factor, const std::string& out) {
  if (!(factor > 0.0)) throw ConfigError("--factor must be positive");
  const auto model = pipeline::load_model(checkpoint);
  const auto sample = pipeline::load_sample(data_dir);
  const auto base = pipeline::predict(model, sample);
  const auto planes = factor == 1.0 ? base.planes : triplane::resize_planes(base.planes, factor);
  const auto prediction = factor == 1.0 ? base : pipeline::decode(model, planes, sample.points);
  const auto& grid = prediction.voxels;
  const auto& g = grid.spec;

  ensure_fresh_dir(out);
  const fs::path dir(out);
  std::ostringstream config;
  config << model.config.to_text() << "# export factor " << factor << ", grid " << g.H << "x" << g.W << "x" << g.D
         << ", cell size " << g.cell_size << "\n";
  write_text(dir / "config.txt", config.str());
  data::save_voxels(dir / "occupancy.occ", grid);
  triplane::save_planes(dir / "planes", planes);
  // One top-down slice per height layer, plus the middle side and front slices.
  for (std::int64_t d = 0; d < g.D; ++d) {
    data::save_ppm(dir / ("slice_top_d" + std::to_string(d) + ".ppm"),
                   label_image(g.H, g.W, [&](auto h, auto w) { return grid.at(h, w, d); }));
  }
  const auto mid_w = g.W / 2, mid_h = g.H / 2;
  data::save_ppm(dir / "slice_side.ppm",
                 label_image(g.D, g.H, [&](auto r, auto h) { return grid.at(h, mid_w, g.D - 1 - r); }));
  data::save_ppm(dir / "slice_front.ppm",
                 label_image(g.D, g.W, [&](auto r, auto w) { return grid.at(mid_h, w, g.D - 1 - r); }));
  std::int64_t occupied = 0;
  for (auto v : grid.labels) occupied += v != data::kEmptyClass;
  std::printf("exported %s: grid %lldx%lldx%lld (%lld voxels, %lld occupied)\n", out.c_str(),
              static_cast<long long>(g.H), static_cast<long long>(g.W), static_cast<long long>(g.D),
              static_cast<long long>(grid.labels.size()), static_cast<long long>(occupied));
  return kOk;
}

int cmd_ablate(const CommonFlags& f, const std::string& preset, const std::vector<std::uint64_t>& seeds,
               const std::string& out) {
  const auto base = resolve_config(f);
  const auto variants = eval::ablation_preset(preset, base);
  ensure_fresh_dir(out);
  write_text(fs::path(out) / "config.txt", base.to_text());
  const auto report = eval::run_ablation(preset, base, variants, seeds, [](const eval::AblationRow& r) {
    std::printf("%s seed %llu: point %.4f voxel %.4f sc %.4f ssc %.4f\n", r.variant.c_str(),
                static_cast<unsigned long long>(r.seed), r.heldout.point_miou, r.heldout.point_miou_from_voxels,
                r.heldout.sc_iou, r.heldout.ssc_miou);
    std::fflush(stdout);
  });
  write_text(fs::path(out) / "report.txt", report.to_table());
  write_text(fs::path(out) / "report.csv", report.to_csv());
  std::cout << report.to_table();
  return kOk;
}

int cmd_diag(const std::string& data_dir, const std::string& checkpoint) {
  const auto sample = pipeline::load_sample(data_dir);
  const auto& g = sample.scene.grid;
  std::printf("grid %lldx%lldx%lld cell %.3f, difficulty %s, %zu boxes\n", static_cast<long long>(g.H),
              static_cast<long long>(g.W), static_cast<long long>(g.D), g.cell_size,
              data::difficulty_name(sample.scene.difficulty).c_str(), sample.scene.boxes.size());
  std::map<int, std::int64_t> voxels, points;
  for (auto v : sample.truth.labels) ++voxels[v];
  for (int l : sample.points.labels) ++points[l];
  for (int k = 0; k <= data::kNumClasses; ++k) {
    std::printf("  %-8s voxels %8lld  points %7lld\n", data::class_name(k).c_str(), static_cast<long long>(voxels[k]),
                static_cast<long long>(points[k]));
  }
  std::printf("cameras %zu, images %lldx%lld\n", sample.images.size(),
              sample.images.empty() ? 0LL : static_cast<long long>(sample.images.front().dim(1)),
              sample.images.empty() ? 0LL : static_cast<long long>(sample.images.front().dim(0)));
  if (checkpoint.empty()) return kOk;

  const auto model = pipeline::load_model(checkpoint);
  const auto enc = model.config.encoder_config();
  const auto plan = encoder::EncoderPlan::build(enc, sample.rig);
  for (geometry::View v : enc.views()) {
    const auto& ica = plan.ica[static_cast<int>(v)];
    std::int64_t seen = 0;
    for (double s : ica.seen) seen += s > 0.0;
    std::printf("view %-5s queries %6zu seen by a camera %6lld, %zu camera batches, %lld refs\n",
                std::string(geometry::view_name(v)).c_str(), ica.seen.size(), static_cast<long long>(seen),
                ica.batches.size(), static_cast<long long>(ica.refs));
  }
  const auto mem = triplane::memory_account(g, enc.channels);
  std::printf("plane values %lld, voxel values %lld, ratio %.2f\n", static_cast<long long>(mem.plane_values),
              static_cast<long long>(mem.voxel_values), mem.ratio());
  std::printf("parameters %zu tensors, %lld values\n", model.params.size(),
              static_cast<long long>(model.params.value_count()));
  const auto scores = pipeline::score(pipeline::predict(model, sample), sample);
  std::printf("point_miou %.4f point_miou_from_voxels %.4f sc_iou %.4f ssc_miou %.4f\n", scores.point_miou,
              scores.point_miou_from_voxels, scores.sc_iou, scores.ssc_miou);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TPV semantic occupancy toolkit"};
  app.require_subcommand(1);

  CommonFlags gen_f, train_f, ablate_f;
  std::string difficulty, out, data_dir, checkpoint, task, preset = "routing";
  int log_every = 10;
  bool heldout = false;
  double factor = 1.0;
  std::vector<std::uint64_t> seeds = {1, 2, 3};

  auto* gen = app.add_subcommand("gen", "generate a synthetic scene with cameras, LiDAR and dense truth");
  add_common(gen, gen_f);
  gen->add_option("--difficulty", difficulty, "empty, easy, standard or stacked");
  gen->add_option("--out", out, "output directory (must be absent or empty)")->required();

  auto* train = app.add_subcommand("train", "train on a generated scene and write a checkpoint");
  add_common(train, train_f);
  train->add_option("--data", data_dir, "scene directory from gen")->required();
  train->add_option("--out", out, "checkpoint path")->required();
  train->add_option("--log-every", log_every, "print every N steps (0 silences)");

  auto* evaluate = app.add_subcommand("eval", "score a checkpoint on a scene");
  evaluate->add_option("--checkpoint", checkpoint)->required();
  evaluate->add_option("--data", data_dir)->required();
  evaluate->add_option("--task", task, "points or occupancy (defaults to the checkpoint's task)");
  evaluate->add_flag("--heldout", heldout, "score point metrics on a fresh LiDAR sweep");
  evaluate->add_option("--out", out, "also write the report, with the config appended");

  auto* exporter = app.add_subcommand("export", "write predicted occupancy at a resized plane resolution");
  exporter->add_option("--checkpoint", checkpoint)->required();
  exporter->add_option("--data", data_dir)->required();
  exporter->add_option("--factor", factor, "plane resize factor");
  exporter->add_option("--out", out, "output directory (must be absent or empty)")->required();

  auto* ablate = app.add_subcommand("ablate", "run an ablation grid and write report.txt and report.csv");
  add_common(ablate, ablate_f);
  ablate->add_option("--preset", preset, "routing, resolution or blocks");
  ablate->add_option("--seeds", seeds, "seeds shared by every variant")->delimiter(',');
  ablate->add_option("--out", out, "output directory (must be absent or empty)")->required();

  auto* diag = app.add_subcommand("diag", "summarize a scene and, with a checkpoint, its attention coverage");
  diag->add_option("--data", data_dir)->required();
  diag->add_option("--checkpoint", checkpoint);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigExit;
  }

  try {
    if (*gen) return cmd_gen(gen_f, difficulty, out);
    if (*train) return cmd_train(train_f, data_dir, out, log_every);
    if (*evaluate) return cmd_eval(checkpoint, data_dir, task, heldout, out);
    if (*exporter) return cmd_export(checkpoint, data_dir, factor, out);
    if (*ablate) return cmd_ablate(ablate_f, preset, seeds, out);
    if (*diag) return cmd_diag(data_dir, checkpoint);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigExit;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return kNumericExit;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kDataExit;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kOtherExit;
  }
  return kOk;
}
