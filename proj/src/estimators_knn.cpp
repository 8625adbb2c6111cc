#include <cmath>
#include <limits>
#include <stdexcept>

#include "deminf/estimators.hpp"

namespace deminf::est {
namespace {

struct RowScratch {
  explicit RowScratch(std::size_t n) : state(n), action(n), joint(n) {}
  std::vector<double> state;
  std::vector<double> action;
  std::vector<double> joint;
};

std::size_t max_of(std::span<const std::size_t> ks) {
  std::size_t m = 0;
  for (std::size_t k : ks) m = std::max(m, k);
  return m;
}

// Inclusive marginal counts inside the k-th joint radius, for each k.
void neighbor_counts(const knn::BatchGeometry& batch, std::size_t i, knn::Metric metric,
                     std::span<const std::size_t> k_list, RowScratch& rows,
                     std::vector<std::size_t>& n_s, std::vector<std::size_t>& n_a) {
  batch.marginal_rows(i, rows.state, rows.action);
  knn::BatchGeometry::joint_row(metric, rows.state, rows.action, rows.joint);
  const auto nearest = knn::smallest_excluding(rows.joint, i, max_of(k_list));
  n_s.resize(k_list.size());
  n_a.resize(k_list.size());
  for (std::size_t q = 0; q < k_list.size(); ++q) {
    const double radius_sq = nearest[k_list[q] - 1].first;
    n_s[q] = knn::count_le_excluding_self(rows.state, radius_sq);
    n_a[q] = knn::count_le_excluding_self(rows.action, radius_sq);
  }
}

StepScores knn_scores(const char* method, const knn::BatchScorer& scorer,
                      const knn::LatentPairSet& pairs, const knn::PassPlan& plan, std::size_t threads) {
  StepScores out;
  out.values = knn::batched_passes(pairs, plan, scorer, threads);
  out.metadata = {{"method", method},
                  {"seed", plan.seed},
                  {"k_list", plan.k_list},
                  {"batch_size", plan.batch_size},
                  {"passes", plan.passes}};
  return out;
}

}  // namespace

knn::BatchScorer ksg_scorer() {
  return [](const knn::BatchGeometry& batch, std::span<const std::size_t> k_list, Matrix& out) {
    RowScratch rows(batch.size());
    std::vector<std::size_t> n_s, n_a;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      neighbor_counts(batch, i, knn::Metric::JointMax, k_list, rows, n_s, n_a);
      for (std::size_t q = 0; q < k_list.size(); ++q) {
        out(i, q) = -digamma(static_cast<double>(n_s[q]) + 1.0) - digamma(static_cast<double>(n_a[q]) + 1.0);
      }
    }
  };
}

knn::BatchScorer biksg_scorer() {
  return [](const knn::BatchGeometry& batch, std::span<const std::size_t> k_list, Matrix& out) {
    RowScratch rows(batch.size());
    std::vector<std::size_t> n_s, n_a;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      neighbor_counts(batch, i, knn::Metric::JointL2, k_list, rows, n_s, n_a);
      for (std::size_t q = 0; q < k_list.size(); ++q) {
        out(i, q) = -std::log(static_cast<double>(n_s[q])) - std::log(static_cast<double>(n_a[q]));
      }
    }
  };
}

knn::BatchScorer kl_scorer(std::atomic<std::size_t>* degenerate) {
  return [degenerate](const knn::BatchGeometry& batch, std::span<const std::size_t> k_list, Matrix& out) {
    const std::size_t B = batch.size();
    const std::size_t K = k_list.size();
    const std::size_t kmax = max_of(k_list);
    const double ds = static_cast<double>(batch.state_dim());
    const double da = static_cast<double>(batch.action_dim());
    RowScratch rows(B);
    std::vector<bool> bad(B * K, false);
    for (std::size_t i = 0; i < B; ++i) {
      batch.marginal_rows(i, rows.state, rows.action);
      knn::BatchGeometry::joint_row(knn::Metric::JointMax, rows.state, rows.action, rows.joint);
      const auto ns = knn::smallest_excluding(rows.state, i, kmax);
      const auto na = knn::smallest_excluding(rows.action, i, kmax);
      const auto nj = knn::smallest_excluding(rows.joint, i, kmax);
      for (std::size_t q = 0; q < K; ++q) {
        const std::size_t k = k_list[q];
        const double es = ns[k - 1].first;
        const double ea = na[k - 1].first;
        const double ej = nj[k - 1].first;
        if (es <= 0.0 || ea <= 0.0 || ej <= 0.0) {
          bad[i * K + q] = true;
          continue;
        }
        // Squared distances: ln eps^d = (d / 2) ln eps^2.
        out(i, q) = 0.5 * (ds * std::log(es) + da * std::log(ea) - (ds + da) * std::log(ej));
      }
    }
    for (std::size_t q = 0; q < K; ++q) {
      std::vector<double> good;
      std::size_t n_bad = 0;
      for (std::size_t i = 0; i < B; ++i) {
        if (bad[i * K + q]) ++n_bad;
        else good.push_back(out(i, q));
      }
      if (n_bad == 0) continue;
      const double fill = good.empty() ? 0.0 : percentile(good, 1.0);
      for (std::size_t i = 0; i < B; ++i) {
        if (bad[i * K + q]) out(i, q) = fill;
      }
      if (degenerate != nullptr) degenerate->fetch_add(n_bad);
    }
  };
}

StepScores ksg_step_scores(const knn::LatentPairSet& pairs, const knn::PassPlan& plan, std::size_t threads) {
  return knn_scores("deminf", ksg_scorer(), pairs, plan, threads);
}

StepScores biksg_step_scores(const knn::LatentPairSet& pairs, const knn::PassPlan& plan,
                             std::size_t threads) {
  return knn_scores("biksg", biksg_scorer(), pairs, plan, threads);
}

StepScores kl_step_scores(const knn::LatentPairSet& pairs, const knn::PassPlan& plan, std::size_t threads) {
  std::atomic<std::size_t> degenerate{0};
  StepScores out = knn_scores("kl", kl_scorer(&degenerate), pairs, plan, threads);
  out.metadata["degenerate_evaluations"] = degenerate.load();
  return out;
}

double ksg_absolute_mi(const knn::LatentPairSet& pairs, std::size_t k, std::size_t batch) {
  pairs.validate();
  const std::size_t min_batch = 2 * k + 2;
  if (k == 0) throw std::invalid_argument("ksg_absolute_mi: k must be positive");
  if (batch < min_batch || pairs.size() < min_batch) {
    throw std::invalid_argument("ksg_absolute_mi: batch and sample count must be >= 2k+2");
  }
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const auto batches = knn::split_batches(order, batch, min_batch);
  const std::size_t ks[] = {k};
  double total = 0.0;
  for (const auto& members : batches) {
    const knn::BatchGeometry geom(pairs, members);
    RowScratch rows(members.size());
    std::vector<std::size_t> n_s, n_a;
    double acc = 0.0;
    for (std::size_t i = 0; i < members.size(); ++i) {
      neighbor_counts(geom, i, knn::Metric::JointMax, ks, rows, n_s, n_a);
      acc += digamma(static_cast<double>(n_s[0]) + 1.0) + digamma(static_cast<double>(n_a[0]) + 1.0);
    }
    total += digamma(static_cast<double>(k)) + digamma(static_cast<double>(members.size())) -
             acc / static_cast<double>(members.size());
  }
  return total / static_cast<double>(batches.size());
}

}  // namespace deminf::est
