#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "deminf/estimators.hpp"
#include "deminf/knn.hpp"
#include "deminf/synth.hpp"
#include "support.hpp"

using namespace deminf;
using namespace deminf::knn;

namespace {

LatentPairSet line_points(std::vector<double> s, std::vector<double> a) {
  const std::size_t n = s.size();
  return {Matrix(n, 1, std::move(s)), Matrix(n, 1, std::move(a))};
}

}  // namespace

TEST_CASE("joint distance") {
  LatentPairSet p{Matrix(2, 2, std::vector<double>{0, 0, 3, 0}), Matrix(2, 1, std::vector<double>{0, 4})};
  CHECK(joint_distance(0, 0, p) == 0.0);
  CHECK(joint_distance(0, 1, p) == 4.0);
  CHECK(joint_distance(1, 0, p) == joint_distance(0, 1, p));
}

TEST_CASE("knn radius examples") {
  const auto p = line_points({0, 1, 2}, {0, 0, 0});
  CHECK(knn_radius(1, 1, p, Metric::JointMax) == 1.0);
  CHECK(knn_radius(0, 2, p, Metric::JointMax) == 2.0);
  CHECK(knn_radius(0, 2, p, Metric::JointL2) == 2.0);
  const auto dup = line_points({0, 0, 5}, {1, 1, 3});
  CHECK(knn_radius(0, 1, dup, Metric::JointMax) == 0.0);
  CHECK_THROWS(knn_radius(0, 3, p, Metric::JointMax));
  CHECK_THROWS(knn_radius(0, 0, p, Metric::JointMax));
  const auto tie = line_points({0, -1, 1}, {0, 0, 0});
  CHECK(knn_index(0, 1, tie, Metric::JointMax) == 1);
}

TEST_CASE("count_within examples") {
  const auto p = line_points({0, 1, 2, 4}, {0, 3, 1, 2});
  CHECK(count_within(0, 0.0, Marginal::State, p) == 0);
  CHECK(count_within(0, std::numeric_limits<double>::infinity(), Marginal::Action, p) == 3);
  CHECK(count_within(0, 1.0, Marginal::State, p) == 1);
  CHECK(count_within(0, 2.0, Marginal::Action, p) == 2);
}

TEST_CASE("marginal counts are at least k under the joint max metric") {
  const auto g = synth::gen_gaussian_pairs({500, 2, 0.5, 3});
  for (std::size_t i = 0; i < 500; ++i) {
    for (std::size_t k : {1, 5, 7}) {
      const double r = knn_radius(i, k, g.pairs, Metric::JointMax);
      CHECK(count_within(i, r, Marginal::State, g.pairs) >= k);
      CHECK(count_within(i, r, Marginal::Action, g.pairs) >= k);
      const double r2 = knn_radius(i, k, g.pairs, Metric::JointL2);
      CHECK(count_within(i, r2, Marginal::State, g.pairs) >= k);
    }
  }
}

TEST_CASE("split_batches merges a short tail") {
  std::vector<std::size_t> order(2500);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  auto b = split_batches(order, 1024, 16);
  REQUIRE(b.size() == 3);
  CHECK(b[2].size() == 452);
  order.resize(2058);
  b = split_batches(order, 1024, 16);
  REQUIRE(b.size() == 2);
  CHECK(b[1].size() == 1034);
  order.resize(600);
  b = split_batches(order, 1024, 16);
  REQUIRE(b.size() == 1);
  CHECK(b[0].size() == 600);
  order.resize(10);
  CHECK_THROWS(split_batches(order, 1024, 16));
}

TEST_CASE("batched passes average every evaluation") {
  const auto g = synth::gen_gaussian_pairs({300, 1, 0.3, 1});
  std::size_t calls = 0;
  std::vector<std::size_t> seen(300, 0);
  const BatchScorer scorer = [&](const BatchGeometry& batch, std::span<const std::size_t> ks, Matrix& out) {
    ++calls;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      ++seen[batch.members()[i]];
      for (std::size_t c = 0; c < ks.size(); ++c) out(i, c) = static_cast<double>(ks[c]);
    }
  };
  const PassPlan plan{{5, 6, 7}, 100, 4, 2};
  const auto s = batched_passes(g.pairs, plan, scorer);
  CHECK(calls == 12);
  for (std::size_t v : seen) CHECK(v == 4);
  for (double v : s) CHECK(v == doctest::Approx(6.0));

  calls = 0;
  const PassPlan whole{{5}, 1024, 1, 2};
  batched_passes(g.pairs, whole, scorer);
  CHECK(calls == 1);
  CHECK(batched_passes(g.pairs, plan, scorer) == batched_passes(g.pairs, plan, scorer));
}

TEST_CASE("batched passes are independent of the thread count") {
  const auto g = synth::gen_gaussian_pairs({3000, 2, 0.6, 5});
  const PassPlan plan{{5, 6, 7}, 512, 2, 9};
  const auto one = est::ksg_step_scores(g.pairs, plan, 1).values;
  CHECK(est::ksg_step_scores(g.pairs, plan, 4).values == one);
  CHECK(est::kl_step_scores(g.pairs, plan, 3).values == est::kl_step_scores(g.pairs, plan, 1).values);
}

TEST_CASE("isometry invariance of k-NN scores") {
  Rng rng(7);
  const auto g = synth::gen_gaussian_pairs({400, 3, 0.7, 2});
  const auto moved = testing::rigid_transform(g.pairs, rng);
  const PassPlan plan{{5, 6, 7}, 200, 2, 3};
  CHECK(testing::max_abs_diff(est::ksg_step_scores(g.pairs, plan).values, est::ksg_step_scores(moved, plan).values) <= 1e-9);
  CHECK(testing::max_abs_diff(est::biksg_step_scores(g.pairs, plan).values,
                              est::biksg_step_scores(moved, plan).values) <= 1e-9);
  CHECK(testing::max_abs_diff(est::kl_step_scores(g.pairs, plan).values, est::kl_step_scores(moved, plan).values) <= 1e-9);
}

TEST_CASE("whole-batch scores follow a row permutation") {
  Rng rng(8);
  const auto g = synth::gen_gaussian_pairs({300, 2, 0.4, 4});
  const PassPlan whole{{5, 6, 7}, 300, 1, 0};
  const auto base = est::ksg_step_scores(g.pairs, whole).values;
  const auto order = shuffle(300, rng);
  const LatentPairSet perm{gather_rows(g.pairs.zs, order), gather_rows(g.pairs.za, order)};
  const auto p = est::ksg_step_scores(perm, whole).values;
  for (std::size_t i = 0; i < 300; ++i) CHECK(p[i] == base[order[i]]);
}

TEST_CASE("pair set validation") {
  LatentPairSet bad{Matrix(3, 1), Matrix(2, 1)};
  CHECK_THROWS(bad.validate());
  LatentPairSet nan{Matrix(2, 1, std::numeric_limits<double>::quiet_NaN()), Matrix(2, 1)};
  CHECK_THROWS(nan.validate());
}
