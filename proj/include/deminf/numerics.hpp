#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace deminf {

/// Deterministic xoshiro256** stream keyed by (seed, stream id).
///
/// The output sequence depends only on the two keys, so results are
/// reproducible across runs and platforms. Distinct stream ids give
/// statistically independent substreams; `substream` derives a child key
/// without advancing the parent.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64() noexcept;
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n); n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n) noexcept;
  /// Standard normal via Box-Muller.
  double normal() noexcept;
  bool bernoulli(double p) noexcept { return uniform() < p; }

  [[nodiscard]] Rng substream(std::uint64_t id) const;

  [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }
  [[nodiscard]] std::uint64_t stream() const noexcept { return stream_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t s_[4];
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

/// psi(x) for x > 0; throws std::domain_error otherwise.
double digamma(double x);

/// Linear-interpolation percentile, p in [0, 100].
double percentile(std::span<const double> values, double p);

/// Fisher-Yates permutation of 0..n-1.
std::vector<std::size_t> shuffle(std::size_t n, Rng& rng);

/// Ranks 1..n with ties assigned their average rank.
std::vector<double> average_ranks(std::span<const double> values);

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

double mean(std::span<const double> values);

}  // namespace deminf
