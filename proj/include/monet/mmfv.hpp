#pragma once

// MMFV dense matrix container:
//   bytes 0-3   magic "MMFV"
//   bytes 4-5   u16 LE version (1)
//   bytes 6-9   u32 LE row count
//   bytes 10-13 u32 LE column count
//   then rows*cols f32 LE values, row-major.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <string>

#include "monet/error.hpp"
#include "monet/linalg.hpp"

namespace monet::mmfv {

inline constexpr std::array<char, 4> kMagic{'M', 'M', 'F', 'V'};
inline constexpr std::uint16_t kVersion = 1;
inline constexpr std::size_t kHeaderBytes = 14;

namespace detail {

template <class U>
void put_le(std::ostream& out, U value) {
  std::array<char, sizeof(U)> bytes{};
  for (std::size_t k = 0; k < sizeof(U); ++k) {
    bytes[k] = static_cast<char>((value >> (8 * k)) & 0xFF);
  }
  out.write(bytes.data(), bytes.size());
}

template <class U>
U get_le(const unsigned char* p) {
  U value = 0;
  for (std::size_t k = 0; k < sizeof(U); ++k) {
    value |= static_cast<U>(static_cast<U>(p[k]) << (8 * k));
  }
  return value;
}

}  // namespace detail

inline void write(std::ostream& out, const Matrix<float>& m) {
  if (m.rows() > std::numeric_limits<std::uint32_t>::max() ||
      m.cols() > std::numeric_limits<std::uint32_t>::max()) {
    throw ShapeError("matrix too large for MMFV");
  }
  out.write(kMagic.data(), kMagic.size());
  detail::put_le<std::uint16_t>(out, kVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols()));
  const float* data = m.data();
  for (Index k = 0; k < m.size(); ++k) {
    detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(data[k]));
  }
  if (!out) throw IoError("MMFV write failed");
}

/// Reads one matrix from the current stream position. `what` names the
/// source in error messages.
inline Matrix<float> read(std::istream& in, const std::string& what = "MMFV") {
  std::array<unsigned char, kHeaderBytes> header{};
  in.read(reinterpret_cast<char*>(header.data()), header.size());
  if (in.gcount() != static_cast<std::streamsize>(header.size())) {
    throw DataError(what + ": truncated header");
  }
  if (std::memcmp(header.data(), kMagic.data(), kMagic.size()) != 0) {
    throw DataError(what + ": bad magic (expected MMFV)");
  }
  const auto version = detail::get_le<std::uint16_t>(header.data() + 4);
  if (version != kVersion) {
    throw DataError(what + ": unsupported version " + std::to_string(version));
  }
  const auto rows = detail::get_le<std::uint32_t>(header.data() + 6);
  const auto cols = detail::get_le<std::uint32_t>(header.data() + 10);
  Matrix<float> m(static_cast<Index>(rows), static_cast<Index>(cols));
  const std::size_t count = static_cast<std::size_t>(rows) * cols;
  std::string buffer(count * 4, '\0');
  in.read(buffer.data(), static_cast<std::streamsize>(buffer.size()));
  if (in.gcount() != static_cast<std::streamsize>(buffer.size())) {
    throw DataError(what + ": truncated payload");
  }
  const auto* bytes = reinterpret_cast<const unsigned char*>(buffer.data());
  float* data = m.data();
  for (std::size_t k = 0; k < count; ++k) {
    data[k] = std::bit_cast<float>(detail::get_le<std::uint32_t>(bytes + 4 * k));
  }
  return m;
}

inline void write_file(const std::filesystem::path& path, const Matrix<float>& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  write(out, m);
}

inline Matrix<float> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  return read(in, path.string());
}

}  // namespace monet::mmfv
