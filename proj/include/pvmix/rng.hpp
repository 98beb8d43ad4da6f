#pragma once

#include <cstdint>

#include "pvmix/special.hpp"

namespace pvmix {

// Small splittable generator built on the splitmix64 mixing function.
// Substreams derived via split() are independent of the draw order on the
// parent, which keeps seeding reproducible across evaluation orders.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(mix(seed ^ 0x9e3779b97f4a7c15ull)) {}

  Rng split(std::uint64_t key) const {
    return Rng(mix(state_ ^ mix(key + 0x632be59bd9b4e019ull)));
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    return mix(state_);
  }

  // uniform on (0, 1), never exactly 0 or 1
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // integer in [0, n)
  std::uint64_t below(std::uint64_t n) {
    // rejection to avoid modulo bias
    std::uint64_t lim = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
      v = next_u64();
    } while (v >= lim);
    return v % n;
  }

  double normal() { return normal_quantile(uniform()); }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
};

}  // namespace pvmix
