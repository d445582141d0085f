#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "lexprobe/error.hpp"

namespace lexprobe::io {

// Little-endian primitives shared by the store, matrix and feature formats.

template <typename T>
T byteswap(T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  for (std::size_t i = 0; i < sizeof(T) / 2; ++i) {
    std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  }
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

template <typename T>
T to_little(T value) {
  if constexpr (std::endian::native == std::endian::little) {
    return value;
  } else {
    return byteswap(value);
  }
}

template <typename T>
T from_little(T value) {
  return to_little(value);
}

template <typename T>
void write_le(std::ostream& out, T value) {
  value = to_little(value);
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

inline void write_f32_le(std::ostream& out, std::span<const float> values) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size_bytes()));
  } else {
    for (float v : values) write_le(out, v);
  }
}

template <typename T>
T read_le(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) fail(ErrorKind::kCorruption, "unexpected end of stream");
  return from_little(value);
}

// Decode a little-endian value from raw bytes (no bounds checks).
template <typename T>
T load_le(const unsigned char* bytes) {
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return from_little(value);
}

inline void read_f32_le(std::istream& in, std::span<float> out) {
  in.read(reinterpret_cast<char*>(out.data()),
          static_cast<std::streamsize>(out.size_bytes()));
  if (!in) fail(ErrorKind::kCorruption, "unexpected end of float payload");
  if constexpr (std::endian::native != std::endian::little) {
    for (float& v : out) v = byteswap(v);
  }
}

// Magic + version + length-prefixed JSON, the preamble used by every binary
// format in the project.
void write_preamble(std::ostream& out, std::string_view magic,
                    std::uint32_t version, const std::string& json_header);

struct Preamble {
  std::uint32_t version = 0;
  std::string json_header;
  std::uint64_t payload_offset = 0;
};

Preamble read_preamble(std::istream& in, std::string_view magic,
                       const std::string& what);

}  // namespace lexprobe::io
