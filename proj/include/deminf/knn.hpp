#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "deminf/matrix.hpp"
#include "deminf/numerics.hpp"

namespace deminf::knn {

/// Paired state / action latents, row i of each belonging to flat step i.
struct LatentPairSet {
  Matrix zs;
  Matrix za;

  [[nodiscard]] std::size_t size() const noexcept { return zs.rows(); }
  /// Throws std::invalid_argument on unequal row counts or non-finite entries.
  void validate() const;
};

enum class Metric {
  JointMax,  // max(|zs - zs'|, |za - za'|)
  JointL2,   // |[zs, za] - [zs', za']|
};

enum class Marginal { State, Action };

/// Distance between samples i and j under the joint max metric.
double joint_distance(std::size_t i, std::size_t j, const LatentPairSet& pairs);

/// Squared-distance rows within one batch. Latents are copied into
/// column-major (dimension x member) buffers so a row costs one SIMD pass
/// per latent dimension.
class BatchGeometry {
 public:
  BatchGeometry(const LatentPairSet& pairs, std::span<const std::size_t> members);

  [[nodiscard]] std::size_t size() const noexcept { return members_.size(); }
  [[nodiscard]] std::span<const std::size_t> members() const noexcept { return members_; }
  [[nodiscard]] std::size_t state_dim() const noexcept { return ds_; }
  [[nodiscard]] std::size_t action_dim() const noexcept { return da_; }

  /// Squared marginal distances from member i to every member (self = 0).
  void marginal_rows(std::size_t i, std::span<double> state_sq, std::span<double> action_sq) const;

  /// Squared joint distances: out[j] from the two marginal rows.
  static void joint_row(Metric metric, std::span<const double> state_sq,
                        std::span<const double> action_sq, std::span<double> out);

 private:
  std::vector<std::size_t> members_;
  std::size_t ds_;
  std::size_t da_;
  std::vector<double> zs_cols_;  // ds_ x B
  std::vector<double> za_cols_;  // da_ x B
};

/// The k smallest entries of `row` excluding position `self`, ascending,
/// ties in index order. Returns (value, index) pairs.
std::vector<std::pair<double, std::size_t>> smallest_excluding(std::span<const double> row,
                                                               std::size_t self, std::size_t k);

/// #{j != self : row[j] <= threshold}; row[self] must be 0 (self distance).
std::size_t count_le_excluding_self(std::span<const double> row, double threshold);

/// Distance from sample i to its k-th nearest other sample in `pairs`.
/// Throws when k >= pairs.size().
double knn_radius(std::size_t i, std::size_t k, const LatentPairSet& pairs, Metric metric);

/// Index of the k-th nearest other sample (ties broken by smaller index).
std::size_t knn_index(std::size_t i, std::size_t k, const LatentPairSet& pairs, Metric metric);

/// #{j != i : marginal distance(i, j) <= radius}.
std::size_t count_within(std::size_t i, double radius, Marginal marginal, const LatentPairSet& pairs);

/// Fills out(b, q) with the score of batch member b for k = k_list[q].
using BatchScorer =
    std::function<void(const BatchGeometry& batch, std::span<const std::size_t> k_list, Matrix& out)>;

struct PassPlan {
  std::vector<std::size_t> k_list{5, 6, 7};
  std::size_t batch_size = 1024;
  std::size_t passes = 4;
  std::uint64_t seed = 0;

  /// Smallest batch the estimators accept: 2 * max(k) + 2.
  [[nodiscard]] std::size_t min_batch() const;
};

/// Stream id base for pass shuffles; pass p (1-based) uses Rng(seed, kPassStream + p).
inline constexpr std::uint64_t kPassStream = 0x6b6e6e0000000000ULL;

/// Consecutive batches of `order`; a trailing batch smaller than `min_batch`
/// is merged into its predecessor.
std::vector<std::vector<std::size_t>> split_batches(std::span<const std::size_t> order,
                                                    std::size_t batch_size, std::size_t min_batch);

/// Randomized batched evaluation: every pass reshuffles, splits into batches,
/// scores each batch for every k; the result is the mean over passes and k.
/// Batches of one pass run on up to `threads` workers; the reduction order is
/// fixed, so the output does not depend on `threads`.
std::vector<double> batched_passes(const LatentPairSet& pairs, const PassPlan& plan,
                                   const BatchScorer& scorer, std::size_t threads = 1);

}  // namespace deminf::knn
