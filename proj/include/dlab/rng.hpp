#pragma once

#include <cstdint>
#include <limits>
#include <vector>

namespace dlab {

/// Counter-based random stream. The key is a hash of (seed, path), so a
/// child stream can be derived from any parent without consuming its draws.
class RngStream {
 public:
  using result_type = std::uint64_t;

  explicit RngStream(std::uint64_t seed = 0);

  /// Child stream whose path is this path extended by `index`.
  [[nodiscard]] RngStream split(std::uint64_t index) const;

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller; the second variate is cached.
  double normal();

  [[nodiscard]] std::uint64_t seed() const { return seed_; }
  [[nodiscard]] const std::vector<std::uint64_t>& path() const { return path_; }

  // UniformRandomBitGenerator
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()() { return next_u64(); }

 private:
  std::uint64_t seed_;
  std::vector<std::uint64_t> path_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t mix64(std::uint64_t z);

}  // namespace dlab
