#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace secloop {

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

// 64-bit FNV-1a over raw bytes.
constexpr std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = kFnvOffset) {
  for (const char c : bytes) {
    h ^= static_cast<std::uint8_t>(c);
    h *= kFnvPrime;
  }
  return h;
}

// FNV-1a over the little-endian bytes of each integer, in order. Used to
// derive every seed in the system so results do not depend on scheduling.
constexpr std::uint64_t stable_hash(std::initializer_list<std::uint64_t> values) {
  std::uint64_t h = kFnvOffset;
  for (std::uint64_t v : values) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xffU;
      h *= kFnvPrime;
    }
  }
  return h;
}

template <typename... Ints>
constexpr std::uint64_t stable_hash(Ints... values) {
  return stable_hash({static_cast<std::uint64_t>(values)...});
}

}  // namespace secloop
