#include "deminf/knn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include "deminf/parallel.hpp"
#include "deminf/simd/kernels.hpp"

namespace deminf::knn {

void LatentPairSet::validate() const {
  if (zs.rows() != za.rows()) throw std::invalid_argument("LatentPairSet: row counts differ");
  for (double v : zs.values()) {
    if (!std::isfinite(v)) throw std::invalid_argument("LatentPairSet: non-finite state latent");
  }
  for (double v : za.values()) {
    if (!std::isfinite(v)) throw std::invalid_argument("LatentPairSet: non-finite action latent");
  }
}

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    const double diff = b[d] - a[d];
    s += diff * diff;
  }
  return s;
}

}  // namespace

double joint_distance(std::size_t i, std::size_t j, const LatentPairSet& pairs) {
  const double s = sq_dist(pairs.zs.row(i), pairs.zs.row(j));
  const double a = sq_dist(pairs.za.row(i), pairs.za.row(j));
  return std::sqrt(s > a ? s : a);
}

BatchGeometry::BatchGeometry(const LatentPairSet& pairs, std::span<const std::size_t> members)
    : members_(members.begin(), members.end()), ds_(pairs.zs.cols()), da_(pairs.za.cols()) {
  const std::size_t B = members_.size();
  zs_cols_.resize(ds_ * B);
  za_cols_.resize(da_ * B);
  for (std::size_t b = 0; b < B; ++b) {
    const auto s = pairs.zs.row(members_[b]);
    const auto a = pairs.za.row(members_[b]);
    for (std::size_t d = 0; d < ds_; ++d) zs_cols_[d * B + b] = s[d];
    for (std::size_t d = 0; d < da_; ++d) za_cols_[d * B + b] = a[d];
  }
}

void BatchGeometry::marginal_rows(std::size_t i, std::span<double> state_sq,
                                  std::span<double> action_sq) const {
  const std::size_t B = members_.size();
  const auto& k = simd::active();
  std::fill(state_sq.begin(), state_sq.begin() + static_cast<std::ptrdiff_t>(B), 0.0);
  std::fill(action_sq.begin(), action_sq.begin() + static_cast<std::ptrdiff_t>(B), 0.0);
  for (std::size_t d = 0; d < ds_; ++d) {
    const double* col = zs_cols_.data() + d * B;
    k.add_sq_diff(B, col[i], col, state_sq.data());
  }
  for (std::size_t d = 0; d < da_; ++d) {
    const double* col = za_cols_.data() + d * B;
    k.add_sq_diff(B, col[i], col, action_sq.data());
  }
}

void BatchGeometry::joint_row(Metric metric, std::span<const double> state_sq,
                              std::span<const double> action_sq, std::span<double> out) {
  const auto& k = simd::active();
  const std::size_t n = out.size();
  if (metric == Metric::JointMax) {
    k.max2(n, state_sq.data(), action_sq.data(), out.data());
  } else {
    k.add2(n, state_sq.data(), action_sq.data(), out.data());
  }
}

std::vector<std::pair<double, std::size_t>> smallest_excluding(std::span<const double> row,
                                                               std::size_t self, std::size_t k) {
  if (k == 0 || k >= row.size()) {
    throw std::invalid_argument("k-NN: k=" + std::to_string(k) + " requires more than k other points (have " +
                                std::to_string(row.size()) + " in batch)");
  }
  std::vector<std::pair<double, std::size_t>> cand;
  cand.reserve(row.size() - 1);
  for (std::size_t j = 0; j < row.size(); ++j) {
    if (j != self) cand.emplace_back(row[j], j);
  }
  std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
  cand.resize(k);
  return cand;
}

std::size_t count_le_excluding_self(std::span<const double> row, double threshold) {
  const std::size_t c = simd::active().count_le(row.size(), row.data(), threshold);
  return c > 0 ? c - 1 : 0;
}

namespace {

std::vector<double> whole_set_row(std::size_t i, const LatentPairSet& pairs, Metric metric) {
  if (i >= pairs.size()) throw std::out_of_range("k-NN: sample index out of range");
  std::vector<std::size_t> all(pairs.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const BatchGeometry geom(pairs, all);
  std::vector<double> s(all.size()), a(all.size()), joint(all.size());
  geom.marginal_rows(i, s, a);
  BatchGeometry::joint_row(metric, s, a, joint);
  return joint;
}

}  // namespace

double knn_radius(std::size_t i, std::size_t k, const LatentPairSet& pairs, Metric metric) {
  const auto row = whole_set_row(i, pairs, metric);
  return std::sqrt(smallest_excluding(row, i, k).back().first);
}

std::size_t knn_index(std::size_t i, std::size_t k, const LatentPairSet& pairs, Metric metric) {
  const auto row = whole_set_row(i, pairs, metric);
  return smallest_excluding(row, i, k).back().second;
}

std::size_t count_within(std::size_t i, double radius, Marginal marginal, const LatentPairSet& pairs) {
  const Matrix& z = marginal == Marginal::State ? pairs.zs : pairs.za;
  std::size_t c = 0;
  for (std::size_t j = 0; j < z.rows(); ++j) {
    if (j != i && std::sqrt(sq_dist(z.row(i), z.row(j))) <= radius) ++c;
  }
  return c;
}

std::size_t PassPlan::min_batch() const {
  std::size_t m = 0;
  for (std::size_t k : k_list) m = std::max(m, k);
  return 2 * m + 2;
}

std::vector<std::vector<std::size_t>> split_batches(std::span<const std::size_t> order,
                                                    std::size_t batch_size, std::size_t min_batch) {
  if (order.size() < min_batch) {
    throw std::invalid_argument("split_batches: " + std::to_string(order.size()) + " samples, need at least " +
                                std::to_string(min_batch) + "; use a smaller k or more data");
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    std::vector<std::size_t> b(order.begin() + static_cast<std::ptrdiff_t>(start),
                               order.begin() + static_cast<std::ptrdiff_t>(end));
    if (b.size() < min_batch && !batches.empty()) {
      batches.back().insert(batches.back().end(), b.begin(), b.end());
    } else {
      batches.push_back(std::move(b));
    }
  }
  return batches;
}

std::vector<double> batched_passes(const LatentPairSet& pairs, const PassPlan& plan,
                                   const BatchScorer& scorer, std::size_t threads) {
  pairs.validate();
  const std::size_t N = pairs.size();
  if (plan.k_list.empty() || plan.passes == 0 || plan.batch_size == 0) {
    throw std::invalid_argument("batched_passes: empty k_list, zero passes or zero batch size");
  }
  if (N < plan.min_batch()) {
    throw std::invalid_argument("batched_passes: " + std::to_string(N) + " samples is fewer than 2*max(k)+2 = " +
                                std::to_string(plan.min_batch()) + "; use a smaller k or more data");
  }
  if (plan.batch_size < plan.min_batch()) {
    throw std::invalid_argument("batched_passes: batch_size must be at least 2*max(k)+2; use a smaller k or a larger batch");
  }
  const std::size_t K = plan.k_list.size();
  std::vector<double> total(N, 0.0);
  std::vector<double> pass_sum(N);
  for (std::size_t p = 1; p <= plan.passes; ++p) {
    Rng rng(plan.seed, kPassStream + p);
    const auto order = shuffle(N, rng);
    const auto batches = split_batches(order, plan.batch_size, plan.min_batch());
    std::fill(pass_sum.begin(), pass_sum.end(), 0.0);
    parallel_for(batches.size(), threads, [&](std::size_t bi) {
      const auto& members = batches[bi];
      const BatchGeometry geom(pairs, members);
      Matrix out(members.size(), K);
      scorer(geom, plan.k_list, out);
      for (std::size_t b = 0; b < members.size(); ++b) {
        double s = 0.0;
        for (std::size_t q = 0; q < K; ++q) s += out(b, q);
        pass_sum[members[b]] = s;
      }
    });
    for (std::size_t i = 0; i < N; ++i) total[i] += pass_sum[i];
  }
  const double denom = static_cast<double>(plan.passes * K);
  for (double& v : total) v /= denom;
  return total;
}

}  // namespace deminf::knn
