#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "tpv/numeric/tape.hpp"

namespace tpv::encoder {

// Archive layout (little-endian):
//   "TPVCKPT1" | u32 count | count * (u32 name length | name bytes | TPVT tensor)
// The run configuration travels in a text sidecar at "<path>.config".
struct Checkpoint {
  numeric::ParameterStore<float> params;
  std::string config;
};

void write_parameters(std::ostream& out, const numeric::ParameterStore<float>& params);
numeric::ParameterStore<float> read_parameters(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const numeric::ParameterStore<float>& params,
                     const std::string& config);
// Throws DataError when the archive or its sidecar is missing or malformed.
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::filesystem::path config_sidecar(const std::filesystem::path& path);

}  // namespace tpv::encoder
