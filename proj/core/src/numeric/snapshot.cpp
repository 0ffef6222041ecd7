#include "tpv/numeric/snapshot.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "tpv/errors.hpp"

namespace tpv::numeric {

namespace io {

void put_u32(std::ostream& os, std::uint32_t v) {
  std::array<char, 4> b{};
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
  os.write(b.data(), 4);
}

std::uint32_t get_u32(std::istream& is) {
  std::array<unsigned char, 4> b{};
  if (!is.read(reinterpret_cast<char*>(b.data()), 4)) throw DataError("unexpected end of stream");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f32(std::ostream& os, float v) { put_u32(os, std::bit_cast<std::uint32_t>(v)); }

float get_f32(std::istream& is) { return std::bit_cast<float>(get_u32(is)); }

}  // namespace io

void write_tensor(std::ostream& os, const Tensor& t) {
  os.write(kTensorMagic, 4);
  io::put_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (auto e : t.shape()) io::put_u32(os, static_cast<std::uint32_t>(e));
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(t.data().data()), static_cast<std::streamsize>(t.numel() * 4));
  } else {
    for (float v : t.data()) io::put_f32(os, v);
  }
}

Tensor read_tensor(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kTensorMagic, 4) != 0) throw DataError("bad tensor magic");
  const auto rank = io::get_u32(is);
  if (rank > 8) throw DataError("tensor rank " + std::to_string(rank) + " out of range");
  Shape shape;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const auto e = io::get_u32(is);
    if (e == 0) throw DataError("zero extent in tensor header");
    shape.push_back(e);
  }
  Tensor t(shape);
  if constexpr (std::endian::native == std::endian::little) {
    if (!is.read(reinterpret_cast<char*>(t.data().data()), static_cast<std::streamsize>(t.numel() * 4))) {
      throw DataError("truncated tensor payload");
    }
  } else {
    for (auto& v : t.data()) v = io::get_f32(is);
  }
  return t;
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  write_tensor(os, t);
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  return read_tensor(is);
}

}  // namespace tpv::numeric
