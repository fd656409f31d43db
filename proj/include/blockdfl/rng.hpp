#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <string_view>

#include "blockdfl/crypto.hpp"

namespace blockdfl {

/// Seed-splitting rule: child = first 8 bytes (big-endian) of
/// SHA-256(master || round || participant || tag), integers as 8-byte
/// big-endian and the tag as raw ASCII.
inline std::uint64_t child_seed(std::uint64_t master, std::int64_t round, std::uint64_t participant,
                                std::string_view tag) {
  ByteWriter w;
  w.u64(master);
  w.i64(round);
  w.u64(participant);
  w.raw(std::span(reinterpret_cast<const std::uint8_t*>(tag.data()), tag.size()));
  return hash_prefix_u64(sha256(w.bytes()));
}

// Thin wrapper around mt19937_64. Distributions are implemented here rather
// than via <random> distributions, whose output is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next() { return gen_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n), unbiased.
  std::uint64_t below(std::uint64_t n) {
    require(n > 0, "Rng::below: empty range");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return x % n;
  }

  /// Standard normal via Box-Muller.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

  /// Index drawn with probability proportional to weights (all >= 0, sum > 0).
  std::size_t weighted(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    require(total > 0.0, "Rng::weighted: zero total weight");
    const double target = uniform() * total;
    double acc = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (weights[i] <= 0.0) continue;
      acc += weights[i];
      last_positive = i;
      if (target < acc) return i;
    }
    return last_positive;
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace blockdfl
