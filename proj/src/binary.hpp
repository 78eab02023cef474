#pragma once

// Little-endian encoding helpers shared by the bundle and snapshot formats.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <ostream>

namespace d2tpt::binary {

inline void put_u32(std::ostream& out, std::uint32_t value) {
  std::array<char, 4> bytes{};
  for (int i = 0; i < 4; ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFFu);
  out.write(bytes.data(), 4);
}

inline void put_f32(std::ostream& out, float value) {
  put_u32(out, std::bit_cast<std::uint32_t>(value));
}

inline std::uint32_t get_u32(const unsigned char* bytes) {
  return static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
         (static_cast<std::uint32_t>(bytes[2]) << 16) |
         (static_cast<std::uint32_t>(bytes[3]) << 24);
}

inline float get_f32(const unsigned char* bytes) {
  return std::bit_cast<float>(get_u32(bytes));
}

}  // namespace d2tpt::binary
