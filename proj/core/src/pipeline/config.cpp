#include "tpv/pipeline/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "tpv/errors.hpp"

namespace tpv::pipeline {

std::string task_name(Task t) { return t == Task::Points ? "points" : "occupancy"; }

Task parse_task(const std::string& name) {
  if (name == "points") return Task::Points;
  if (name == "occupancy") return Task::Occupancy;
  throw ConfigError("unknown task '" + name + "' (expected points or occupancy)");
}

std::string optimizer_name(OptimizerKind k) { return k == OptimizerKind::Sgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "sgd") return OptimizerKind::Sgd;
  if (name == "adam") return OptimizerKind::Adam;
  throw ConfigError("unknown optimizer '" + name + "' (expected sgd or adam)");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError(key + ": cannot parse '" + value + "' as a number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + value + "'");
}

std::vector<std::int64_t> parse_list(const std::string& key, const std::string& value) {
  std::vector<std::int64_t> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<std::int64_t>(key, trim(item)));
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

std::array<std::int64_t, 3> parse_triple(const std::string& key, const std::string& value) {
  const auto v = parse_list(key, value);
  if (v.size() != 3) throw ConfigError(key + ": expected three comma-separated values (top,side,front)");
  return {v[0], v[1], v[2]};
}

template <typename C>
std::string join(const C& values) {
  std::string out;
  for (const auto& v : values) out += (out.empty() ? "" : ",") + std::to_string(v);
  return out;
}

head::PredictionSource parse_source_key(const std::string& key, const std::string& value) {
  try {
    return head::parse_source(value);
  } catch (const ConfigError& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  auto i64 = [&] { return parse_number<std::int64_t>(key, value); };
  auto i32 = [&] { return parse_number<int>(key, value); };
  auto f64 = [&] { return parse_number<double>(key, value); };
  auto flag = [&] { return parse_bool(key, value); };
  auto& e = encoder;
  if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
  else if (key == "task") task = parse_task(value);
  else if (key == "grid.H") grid.H = i64();
  else if (key == "grid.W") grid.W = i64();
  else if (key == "grid.D") grid.D = i64();
  else if (key == "grid.cell_size") grid.cell_size = f64();
  else if (key == "scene.difficulty") difficulty = data::parse_difficulty(value);
  else if (key == "scene.lidar_rays") lidar_rays = i64();
  else if (key == "camera.count") cameras.count = i32();
  else if (key == "camera.width") cameras.width = i32();
  else if (key == "camera.height") cameras.height = i32();
  else if (key == "camera.hfov_deg") cameras.horizontal_fov_deg = f64();
  else if (key == "camera.mount_height") cameras.mount_height = f64();
  else if (key == "camera.yaw0_deg") cameras.yaw0_deg = f64();
  else if (key == "encoder.channels") e.channels = i64();
  else if (key == "encoder.hcab_blocks") e.hcab_blocks = i32();
  else if (key == "encoder.hab_blocks") e.hab_blocks = i32();
  else if (key == "encoder.heads") e.heads = i32();
  else if (key == "encoder.points_per_head") e.points_per_head = i32();
  else if (key == "encoder.ica_refs") e.ica_refs = parse_triple(key, value);
  else if (key == "encoder.cvha_radius") e.cvha_radius = f64();
  else if (key == "encoder.cvha_same") e.cvha_same = i64();
  else if (key == "encoder.cvha_cross") e.cvha_cross = parse_triple(key, value);
  else if (key == "encoder.ffn_expansion") e.ffn_expansion = i64();
  else if (key == "encoder.backbone_stages") e.backbone.stage_channels = parse_list(key, value);
  else if (key == "encoder.backbone_scales") e.backbone.scales = i32();
  else if (key == "encoder.bev") e.bev = flag();
  else if (key == "head.hidden") head_hidden = i64();
  else if (key == "head.activation") head_activation = head::parse_activation(value);
  else if (key == "loss.ce_input") routing.ce_input = parse_source_key(key, value);
  else if (key == "loss.lovasz_input") routing.lovasz_input = parse_source_key(key, value);
  else if (key == "optim.kind") optim.kind = parse_optimizer(value);
  else if (key == "optim.beta1") optim.beta1 = f64();
  else if (key == "optim.beta2") optim.beta2 = f64();
  else if (key == "optim.steps") optim.steps = i32();
  else if (key == "optim.rate") optim.rate = f64();
  else if (key == "optim.momentum") optim.momentum = f64();
  else if (key == "optim.weight_decay") optim.weight_decay = f64();
  else if (key == "optim.warmup_steps") optim.warmup_steps = i32();
  else if (key == "optim.cosine") optim.cosine = flag();
  else if (key == "optim.grad_clip") optim.grad_clip = f64();
  else throw ConfigError("unknown config key '" + key + "'");
}

void RunConfig::apply_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

RunConfig RunConfig::from_text(const std::string& text) {
  RunConfig c;
  c.apply_text(text);
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return from_text(text.str());
}

namespace {

// Shortest text that parses back to the same double.
std::string shortest(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace

std::string RunConfig::to_text() const {
  std::ostringstream o;
  const auto& e = encoder;
  o << "seed=" << seed << "\ntask=" << task_name(task) << "\n"
    << "grid.H=" << grid.H << "\ngrid.W=" << grid.W << "\ngrid.D=" << grid.D << "\ngrid.cell_size=" << shortest(grid.cell_size)
    << "\n"
    << "scene.difficulty=" << data::difficulty_name(difficulty) << "\nscene.lidar_rays=" << lidar_rays << "\n"
    << "camera.count=" << cameras.count << "\ncamera.width=" << cameras.width << "\ncamera.height=" << cameras.height
    << "\ncamera.hfov_deg=" << shortest(cameras.horizontal_fov_deg) << "\ncamera.mount_height=" << shortest(cameras.mount_height)
    << "\ncamera.yaw0_deg=" << shortest(cameras.yaw0_deg) << "\n"
    << "encoder.channels=" << e.channels << "\nencoder.hcab_blocks=" << e.hcab_blocks
    << "\nencoder.hab_blocks=" << e.hab_blocks << "\nencoder.heads=" << e.heads
    << "\nencoder.points_per_head=" << e.points_per_head << "\nencoder.ica_refs=" << join(e.ica_refs)
    << "\nencoder.cvha_radius=" << e.cvha_radius << "\nencoder.cvha_same=" << e.cvha_same
    << "\nencoder.cvha_cross=" << join(e.cvha_cross) << "\nencoder.ffn_expansion=" << e.ffn_expansion
    << "\nencoder.backbone_stages=" << join(e.backbone.stage_channels)
    << "\nencoder.backbone_scales=" << e.backbone.scales << "\nencoder.bev=" << (e.bev ? "true" : "false") << "\n"
    << "head.hidden=" << head_hidden << "\nhead.activation=" << head::activation_name(head_activation) << "\n"
    << "loss.ce_input=" << head::source_name(routing.ce_input)
    << "\nloss.lovasz_input=" << head::source_name(routing.lovasz_input) << "\n"
    << "optim.kind=" << optimizer_name(optim.kind) << "\noptim.steps=" << optim.steps
    << "\noptim.rate=" << shortest(optim.rate) << "\noptim.momentum=" << shortest(optim.momentum)
    << "\noptim.beta1=" << shortest(optim.beta1) << "\noptim.beta2=" << shortest(optim.beta2)
    << "\noptim.weight_decay=" << shortest(optim.weight_decay) << "\noptim.warmup_steps=" << optim.warmup_steps
    << "\noptim.cosine=" << (optim.cosine ? "true" : "false") << "\noptim.grad_clip=" << shortest(optim.grad_clip) << "\n";
  return o.str();
}

encoder::EncoderConfig RunConfig::encoder_config() const {
  auto e = encoder;
  e.grid = grid;
  e.seed = seed;
  return e;
}

head::HeadConfig RunConfig::head_config() const {
  head::HeadConfig h;
  h.in_channels = encoder.channels;
  h.hidden = head_hidden;
  h.classes = data::kNumClasses + 1;
  h.activation = head_activation;
  return h;
}

void RunConfig::validate() const {
  grid.validate();
  if (lidar_rays < 1) throw ConfigError("scene.lidar_rays must be >= 1");
  if (cameras.count < 1) throw ConfigError("camera.count must be >= 1");
  if (cameras.width < 1 || cameras.height < 1) throw ConfigError("camera.width and camera.height must be >= 1");
  if (!(cameras.horizontal_fov_deg > 0.0 && cameras.horizontal_fov_deg < 180.0)) {
    throw ConfigError("camera.hfov_deg must lie in (0, 180)");
  }
  encoder_config().validate();
  head_config().validate();
  if (optim.steps < 0) throw ConfigError("optim.steps must be >= 0");
  if (!(optim.rate > 0.0)) throw ConfigError("optim.rate must be > 0");
  if (optim.momentum < 0.0 || optim.momentum >= 1.0) throw ConfigError("optim.momentum must lie in [0, 1)");
  if (optim.beta1 < 0.0 || optim.beta1 >= 1.0 || optim.beta2 < 0.0 || optim.beta2 >= 1.0) {
    throw ConfigError("optim.beta1 and optim.beta2 must lie in [0, 1)");
  }
  if (optim.weight_decay < 0.0) throw ConfigError("optim.weight_decay must be >= 0");
  if (optim.warmup_steps < 0) throw ConfigError("optim.warmup_steps must be >= 0");
  if (optim.grad_clip < 0.0) throw ConfigError("optim.grad_clip must be >= 0");
}

}  // namespace tpv::pipeline
