#pragma once

// CMPT binary tensors and PGM (P5) masks.
//
// CMPT layout, all integers little-endian:
//   offset 0  char[4]  "CMPT"
//   offset 4  u16      format version (1)
//   offset 6  u8       dtype code (1 = float32)
//   offset 7  u8       ndim
//   offset 8  u32[ndim] dimension sizes
//   then      f32[prod(dims)] row-major IEEE-754 payload

#include <array>
#include <bit>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>
#include <vector>

#include "cmap/errors.hpp"
#include "cmap/tensor.hpp"

namespace cmap {

inline constexpr std::array<char, 4> kCmptMagic{'C', 'M', 'P', 'T'};
inline constexpr std::uint16_t kCmptVersion = 1;
inline constexpr std::uint8_t kCmptFloat32 = 1;

namespace detail {

inline std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open for reading");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError(path.string(), "read failed");
  return bytes;
}

inline void write_all(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw IoError(path.string(), "write failed");
}

template <class UInt>
void put_le(std::vector<unsigned char>& out, UInt v) {
  for (std::size_t i = 0; i < sizeof(UInt); ++i)
    out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFFu));
}

template <class UInt>
UInt get_le(const unsigned char* p) {
  UInt v = 0;
  for (std::size_t i = 0; i < sizeof(UInt); ++i) v |= static_cast<UInt>(p[i]) << (8 * i);
  return v;
}

}  // namespace detail

/// Serializes a tensor to the CMPT byte layout.
inline std::vector<unsigned char> encode_tensor(const Tensor& t) {
  if (t.ndim() > std::numeric_limits<std::uint8_t>::max())
    throw ValueError("tensor has too many dimensions for CMPT");
  std::vector<unsigned char> out;
  out.reserve(8 + 4 * t.ndim() + 4 * t.size());
  out.insert(out.end(), kCmptMagic.begin(), kCmptMagic.end());
  detail::put_le<std::uint16_t>(out, kCmptVersion);
  out.push_back(kCmptFloat32);
  out.push_back(static_cast<unsigned char>(t.ndim()));
  for (std::size_t d : t.dims()) {
    if (d > std::numeric_limits<std::uint32_t>::max()) throw ValueError("dimension exceeds u32");
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  }
  for (float f : t.data()) detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

/// `source` names the origin (usually a path) in error messages.
inline Tensor decode_tensor(std::span<const unsigned char> bytes, const std::string& source = {}) {
  const std::string in = source.empty() ? std::string{} : " in " + source;
  if (bytes.size() < 8) throw FormatError("header truncated (" + std::to_string(bytes.size()) + " bytes)" + in);
  if (std::memcmp(bytes.data(), kCmptMagic.data(), 4) != 0) throw FormatError("bad magic, expected CMPT" + in);
  const auto version = detail::get_le<std::uint16_t>(bytes.data() + 4);
  if (version != kCmptVersion) throw FormatError("unsupported version " + std::to_string(version) + in);
  const auto dtype = bytes[6];
  if (dtype != kCmptFloat32) throw FormatError("unsupported dtype code " + std::to_string(dtype) + in);
  const std::size_t ndim = bytes[7];
  if (ndim == 0) throw FormatError("ndim must be positive" + in);
  const std::size_t header = 8 + 4 * ndim;
  if (bytes.size() < header) throw FormatError("dims truncated" + in);

  std::vector<std::size_t> dims(ndim);
  std::size_t count = 1;
  for (std::size_t i = 0; i < ndim; ++i) {
    dims[i] = detail::get_le<std::uint32_t>(bytes.data() + 8 + 4 * i);
    if (dims[i] == 0) throw FormatError("dimension " + std::to_string(i) + " is zero" + in);
    count *= dims[i];
  }
  const std::size_t payload = bytes.size() - header;
  if (payload != 4 * count)
    throw LengthMismatch("declared " + detail::dims_string(dims) + " needs " +
                         std::to_string(4 * count) + " data bytes, found " + std::to_string(payload) + in);

  std::vector<float> data(count);
  for (std::size_t i = 0; i < count; ++i)
    data[i] = std::bit_cast<float>(detail::get_le<std::uint32_t>(bytes.data() + header + 4 * i));
  for (std::size_t i = 0; i < count; ++i)
    if (!std::isfinite(data[i])) throw FormatError("non-finite value at flat index " + std::to_string(i) + in);
  return Tensor(std::move(dims), std::move(data));
}

inline void write_tensor(const Tensor& t, const std::filesystem::path& path) {
  detail::write_all(path, encode_tensor(t));
}

inline Tensor read_tensor(const std::filesystem::path& path) {
  return decode_tensor(detail::read_all(path), path.string());
}

/// True when the file starts with the CMPT magic.
inline bool is_cmpt_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open for reading");
  std::array<char, 4> head{};
  in.read(head.data(), 4);
  return in.gcount() == 4 && head == kCmptMagic;
}

// ---------------------------------------------------------------------------
// PGM

inline BinaryMask decode_mask_pgm(std::span<const unsigned char> bytes,
                                  const std::string& source = {}) {
  const std::string in = source.empty() ? std::string{} : " in " + source;
  std::size_t pos = 0;
  auto skip_space_and_comments = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_uint = [&](const char* field) -> std::size_t {
    skip_space_and_comments();
    if (pos >= bytes.size() || !std::isdigit(bytes[pos]))
      throw FormatError(std::string("PGM ") + field + " missing" + in);
    std::size_t v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > (1u << 24)) throw FormatError(std::string("PGM ") + field + " too large" + in);
      ++pos;
    }
    return v;
  };

  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5')
    throw FormatError("PGM magic must be P5" + in);
  pos = 2;
  const std::size_t width = read_uint("width");
  const std::size_t height = read_uint("height");
  const std::size_t maxval = read_uint("maxval");
  if (maxval != 255) throw FormatError("PGM maxval must be 255, got " + std::to_string(maxval) + in);
  if (width == 0 || height == 0) throw FormatError("PGM dimensions must be positive" + in);
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError("PGM header terminator missing" + in);
  ++pos;
  const std::size_t n = width * height;
  if (bytes.size() - pos != n)
    throw LengthMismatch("PGM declares " + std::to_string(n) + " pixels, found " +
                         std::to_string(bytes.size() - pos) + in);
  std::vector<std::uint8_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = bytes[pos + i] >= 128 ? 1 : 0;
  return BinaryMask(height, width, std::move(v));
}

inline std::vector<unsigned char> encode_mask_pgm(const BinaryMask& m) {
  const std::string header =
      "P5\n" + std::to_string(m.width()) + " " + std::to_string(m.height()) + "\n255\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  out.reserve(out.size() + m.size());
  for (auto v : m.values()) out.push_back(v ? 255 : 0);
  return out;
}

inline BinaryMask read_mask_pgm(const std::filesystem::path& path) {
  return decode_mask_pgm(detail::read_all(path), path.string());
}

inline void write_mask_pgm(const BinaryMask& m, const std::filesystem::path& path) {
  detail::write_all(path, encode_mask_pgm(m));
}

/// Loads a mask that is either a PGM (binary) or a CMPT tensor holding a soft
/// HxW / 1xHxW mask in [0,1].
inline Prior read_soft_mask(const std::filesystem::path& path) {
  if (is_cmpt_file(path)) return Prior::from_tensor(read_tensor(path));
  return read_mask_pgm(path).to_prior();
}

}  // namespace cmap
