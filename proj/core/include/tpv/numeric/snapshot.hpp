#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "tpv/numeric/tensor.hpp"

namespace tpv::numeric {

// Tensor snapshot layout (all integers little-endian):
//   "TPVT" | u32 rank | u32 extent * rank | f32 values, row-major
inline constexpr char kTensorMagic[4] = {'T', 'P', 'V', 'T'};

void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

// Little-endian primitives shared by the other binary formats.
namespace io {
void put_u32(std::ostream& os, std::uint32_t v);
std::uint32_t get_u32(std::istream& is);
void put_f32(std::ostream& os, float v);
float get_f32(std::istream& is);
}  // namespace io

}  // namespace tpv::numeric
