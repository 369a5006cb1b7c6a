#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace xferlab {

// Counter-based splittable generator. A stream is keyed by
// (seed, site name, step), so every dropout site, adapter instance and batch
// sampler owns an independent deterministic sequence; no global RNG state.
class RngStream {
 public:
  static constexpr uint64_t kGamma = 0x9e3779b97f4a7c15ULL;

  static uint64_t mix(uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ULL;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return z;
  }

  static uint64_t hash_name(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    return h;
  }

  RngStream(uint64_t seed, std::string_view site, uint64_t step = 0)
      : state_(mix(seed + kGamma) ^ mix(hash_name(site) + 2 * kGamma) ^
               mix(step + 3 * kGamma)) {}

  explicit RngStream(uint64_t raw_state) : state_(raw_state) {}

  uint64_t next_u64() {
    state_ += kGamma;
    return mix(state_);
  }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // inclusive bounds; modulo bias is irrelevant at desk-scale ranges
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(next_u64() % static_cast<uint64_t>(hi - lo + 1));
  }

  double normal() {
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

 private:
  uint64_t state_;
};

}  // namespace xferlab
