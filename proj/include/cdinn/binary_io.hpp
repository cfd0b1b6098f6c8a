#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cdinn/error.hpp"

namespace cdinn::io {

// Little-endian encoders. Values are assembled byte by byte so the on-disk
// layout does not depend on the host byte order.

template <typename U>
void put_uint(std::ostream& out, U value) {
  std::array<char, sizeof(U)> bytes;
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xff);
  out.write(bytes.data(), bytes.size());
}

inline void put_f32(std::ostream& out, float v) { put_uint(out, std::bit_cast<std::uint32_t>(v)); }

template <typename T>
void put_f32_array(std::ostream& out, std::span<const T> values) {
  std::vector<char> bytes(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(values[i]));
    for (int b = 0; b < 4; ++b) bytes[4 * i + b] = static_cast<char>((bits >> (8 * b)) & 0xff);
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline void put_blob(std::ostream& out, std::string_view text) {
  put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

/// Reads exactly `n` bytes or throws FormatError::truncated naming `what`.
inline void read_exact(std::istream& in, char* dst, std::size_t n, std::string_view what) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n)
    throw FormatError(FormatError::Kind::truncated, "truncated while reading " + std::string(what));
}

template <typename U>
U get_uint(std::istream& in, std::string_view what) {
  std::array<unsigned char, sizeof(U)> bytes;
  read_exact(in, reinterpret_cast<char*>(bytes.data()), bytes.size(), what);
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(bytes[i]) << (8 * i);
  return v;
}

template <typename T>
void get_f32_array(std::istream& in, std::span<T> dst, std::string_view what) {
  std::vector<unsigned char> bytes(dst.size() * 4);
  read_exact(in, reinterpret_cast<char*>(bytes.data()), bytes.size(), what);
  for (std::size_t i = 0; i < dst.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes[4 * i + b]) << (8 * b);
    dst[i] = static_cast<T>(std::bit_cast<float>(bits));
  }
}

inline std::string get_blob(std::istream& in, std::string_view what, std::uint32_t limit = 1u << 24) {
  const auto len = get_uint<std::uint32_t>(in, what);
  if (len > limit) throw FormatError(FormatError::Kind::payload, std::string(what) + " length is implausible");
  std::string s(len, '\0');
  read_exact(in, s.data(), len, what);
  return s;
}

inline void expect_magic(std::istream& in, std::string_view magic, std::string_view what) {
  std::string got(magic.size(), '\0');
  read_exact(in, got.data(), got.size(), what);
  if (got != magic)
    throw FormatError(FormatError::Kind::magic, std::string(what) + ": bad magic (expected " + std::string(magic) + ")");
}

}  // namespace cdinn::io
