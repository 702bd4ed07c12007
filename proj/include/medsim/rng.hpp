#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace medsim {

/// Master seed for an experiment; per-path streams are derived from it.
struct SeedSpec {
  std::uint64_t master_seed = 0;
};

namespace detail {

// splitmix64 step (Vigna). Used only to expand seed material.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace detail

/// One independent random stream, addressed by (master_seed, stream_id).
///
/// The same pair always yields the same variate sequence, independent of
/// platform and thread schedule: the engine seed is splitmix64-mixed from the
/// pair, and all distributions are generated with fixed in-house transforms
/// rather than the implementation-defined std:: distributions.
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, std::uint64_t stream_id) {
    std::uint64_t state = master_seed;
    std::uint64_t a = detail::splitmix64(state);
    state ^= stream_id * 0x9e3779b97f4a7c15ull;
    std::uint64_t b = detail::splitmix64(state);
    engine_.seed(a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2)));
  }

  RngStream(SeedSpec seed, std::uint64_t stream_id) : RngStream(seed.master_seed, stream_id) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform on [a, b).
  double uniform(double a, double b) { return a + (b - a) * uniform01(); }

  /// Standard normal via Box-Muller; the second variate of each pair is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform01();  // (0, 1], keeps log finite
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace medsim
