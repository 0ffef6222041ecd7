#include "tpv/encoder/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "tpv/errors.hpp"
#include "tpv/numeric/snapshot.hpp"

namespace tpv::encoder {

namespace {

constexpr char kMagic[8] = {'T', 'P', 'V', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kMaxNameLength = 4096;

}  // namespace

void write_parameters(std::ostream& out, const numeric::ParameterStore<float>& params) {
  out.write(kMagic, sizeof(kMagic));
  numeric::io::put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params.items()) {
    numeric::io::put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    numeric::write_tensor(out, p.tensor);
  }
}

numeric::ParameterStore<float> read_parameters(std::istream& in) {
  char magic[sizeof(kMagic)] = {};
  in.read(magic, sizeof(magic));
  if (!in || std::string(magic, sizeof(magic)) != std::string(kMagic, sizeof(kMagic))) {
    throw DataError("checkpoint: bad magic");
  }
  const auto count = numeric::io::get_u32(in);
  if (!in) throw DataError("checkpoint: truncated header");
  numeric::ParameterStore<float> params;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = numeric::io::get_u32(in);
    if (!in || len == 0 || len > kMaxNameLength) throw DataError("checkpoint: bad name at entry " + std::to_string(i));
    std::string name(len, '\0');
    in.read(name.data(), len);
    if (!in) throw DataError("checkpoint: truncated name at entry " + std::to_string(i));
    if (params.contains(name)) throw DataError("checkpoint: duplicate parameter " + name);
    try {
      params.add(name, numeric::read_tensor(in));
    } catch (const DataError& e) {
      throw DataError("checkpoint: parameter " + name + ": " + e.what());
    }
  }
  return params;
}

std::filesystem::path config_sidecar(const std::filesystem::path& path) {
  auto p = path;
  p += ".config";
  return p;
}

void save_checkpoint(const std::filesystem::path& path, const numeric::ParameterStore<float>& params,
                     const std::string& config) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  write_parameters(out, params);
  std::ofstream side(config_sidecar(path));
  if (!side) throw DataError("cannot write " + config_sidecar(path).string());
  side << config;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  Checkpoint ck;
  ck.params = read_parameters(in);
  std::ifstream side(config_sidecar(path));
  if (!side) throw DataError("checkpoint config sidecar missing: " + config_sidecar(path).string());
  std::ostringstream text;
  text << side.rdbuf();
  ck.config = text.str();
  return ck;
}

}  // namespace tpv::encoder
