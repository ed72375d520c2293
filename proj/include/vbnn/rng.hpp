#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace vbnn {

// Counter-style stream derivation: every (seed, stream, index) triple maps to
// an independent engine, so draws do not depend on evaluation order or on how
// work is split across threads.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t stream_key(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  return splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ (index * 0xd1b54a32d192ed03ULL));
}

// Well-known stream ids; keeps sampling, prediction and integration draws apart.
namespace streams {
inline constexpr std::uint64_t kPredictive = 0x5052454449435456ULL;
inline constexpr std::uint64_t kIntegration = 0x494e544547524154ULL;
inline constexpr std::uint64_t kSynthetic = 0x53594e5448455449ULL;
inline constexpr std::uint64_t kSplit = 0x53504c4954535053ULL;
inline constexpr std::uint64_t kInit = 0x494e495449414c53ULL;
}  // namespace streams

/// Each substream is a splitmix64 sequence started at its key. Seeding a
/// Mersenne Twister per sample row cost more than the draws themselves.
/// The std distributions are not portable across standard libraries, so
/// uniform and normal variates are derived here by hand.
class Rng {
 public:
  explicit Rng(std::uint64_t key) : state_(key) {}
  Rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index)
      : state_(stream_key(seed, stream, index)) {}

  // Uniform on the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; the second variate of each pair is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double radius = std::sqrt(-2.0 * std::log(uniform()));
    const double angle = 2.0 * std::numbers::pi * uniform();
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  std::uint64_t bits() { return next(); }

  // Unbiased integer in [0, bound) by rejection.
  std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t v;
    do {
      v = next();
    } while (v >= limit);
    return v % bound;
  }

 private:
  std::uint64_t next() {
    const std::uint64_t out = splitmix64(state_);
    state_ += 0x9e3779b97f4a7c15ULL;
    return out;
  }

  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace vbnn
