// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string_view>

namespace locatt {

// SplitMix64 is the single random source of the library. Consumers never
// share a stream: each derives its own child with split(), keyed by an
// integer or a name, so adding a consumer never shifts the numbers seen
// by another. The generator is pure integer arithmetic and therefore
// bit-identical across platforms.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 random bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Uniform in [0, n) without modulo bias (Lemire reduction).
  int next_int(int n) {
    auto wide = static_cast<unsigned __int128>(next_u64()) * static_cast<std::uint64_t>(n);
    return static_cast<int>(wide >> 64);
  }

  // Child stream keyed by an integer tag. Does not advance this stream,
  // so children can be derived in any order or in parallel.
  SplitMix64 split(std::uint64_t tag) const {
    return SplitMix64(scramble(state_ ^ (0x9e3779b97f4a7c15ull * (tag + 1))));
  }

  // Child stream keyed by a name (FNV-1a hash of the bytes).
  SplitMix64 split(std::string_view name) const { return split(fnv1a(name)); }

  std::uint64_t state() const { return state_; }
  void set_state(std::uint64_t s) { state_ = s; }

  static std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char c : s) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ull;
    }
    return h;
  }

 private:
  static std::uint64_t scramble(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
};

}  // namespace locatt
