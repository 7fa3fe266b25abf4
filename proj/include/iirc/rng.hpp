#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace iirc {

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Every random decision flows from one root seed through a named substream
// ("data", "init", "shuffle", "selection", ...), so reconfiguring one
// component never reshuffles the others.
inline std::uint64_t substream_seed(std::uint64_t root, std::string_view name,
                                    std::uint64_t index = 0) {
  std::uint64_t s = mix64(root + 0x9e3779b97f4a7c15ULL);
  s = mix64(s ^ fnv1a64(name));
  return mix64(s ^ index);
}

inline std::mt19937_64 make_engine(std::uint64_t root, std::string_view name,
                                   std::uint64_t index = 0) {
  return std::mt19937_64(substream_seed(root, name, index));
}

}  // namespace iirc
