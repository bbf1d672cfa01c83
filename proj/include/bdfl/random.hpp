#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>
#include <vector>

namespace bdfl {

using Rng = std::mt19937_64;

namespace detail {

// FNV-1a; only used to turn a stream name into seed material.
constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

/// Derives an independent generator from a master seed and a stream name.
/// Extra integers (round index, client id) key sub-streams of one name.
inline Rng make_stream(std::uint64_t master_seed, std::string_view name,
                       std::initializer_list<std::uint64_t> keys = {}) {
  const std::uint64_t tag = detail::fnv1a(name);
  std::vector<std::uint32_t> material{
      static_cast<std::uint32_t>(master_seed), static_cast<std::uint32_t>(master_seed >> 32),
      static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32)};
  for (auto k : keys) {
    material.push_back(static_cast<std::uint32_t>(k));
    material.push_back(static_cast<std::uint32_t>(k >> 32));
  }
  std::seed_seq seq(material.begin(), material.end());
  return Rng(seq);
}

}  // namespace bdfl
