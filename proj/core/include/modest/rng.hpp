#pragma once

#include "modest/common.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string_view>
#include <vector>

namespace modest {

// 64-bit FNV-1a, also used for input digests in run manifests.
inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t seed = 14695981039346656037ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// All randomness fans out from one root seed through named sub-streams
// ("dataset", "init", "sampling", "classifier", ...) so that changing how
// one module consumes randomness never perturbs the others.
//
// Distributions are hand-rolled on top of mt19937_64 raw draws; the stdlib
// distribution objects are implementation-defined and would break
// byte-identical reruns across toolchains.
class RngStream {
 public:
  RngStream(std::uint64_t root_seed, std::string_view name)
      : engine_(splitmix64(root_seed ^ fnv1a64(name.data(), name.size()))) {}

  explicit RngStream(std::uint64_t raw_seed) : engine_(raw_seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on (0, 1): 53-bit mantissa, zero excluded so log() is safe.
  Real uniform() {
    const std::uint64_t bits = engine_() >> 11;
    return (static_cast<Real>(bits) + 0.5) * 0x1p-53;
  }

  Real uniform(Real lo, Real hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n) by rejection.
  std::uint64_t uniform_index(std::uint64_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  // Box-Muller; the spare value is cached.
  Real gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const Real u1 = uniform();
    const Real u2 = uniform();
    const Real r = std::sqrt(-2.0 * std::log(u1));
    const Real theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  Real gumbel() { return -std::log(-std::log(uniform())); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[uniform_index(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  Real spare_ = 0.0;
};

}  // namespace modest
