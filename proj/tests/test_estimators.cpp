#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "deminf/error.hpp"
#include "deminf/estimators.hpp"
#include "deminf/synth.hpp"
#include "support.hpp"

using namespace deminf;
using namespace deminf::est;

namespace {

double dist(const Matrix& z, std::size_t i, std::size_t j) {
  double s = 0.0;
  for (std::size_t c = 0; c < z.cols(); ++c) s += (z(i, c) - z(j, c)) * (z(i, c) - z(j, c));
  return std::sqrt(s);
}

// O(N^2 log N) KSG score of every sample with the whole set as one batch.
std::vector<double> brute_force_ksg(const knn::LatentPairSet& p, const std::vector<std::size_t>& ks) {
  const std::size_t n = p.size();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> joint;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) joint.push_back(std::max(dist(p.zs, i, j), dist(p.za, i, j)));
    }
    std::sort(joint.begin(), joint.end());
    for (std::size_t k : ks) {
      const double r = joint[k - 1];
      std::size_t ns = 0, na = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        ns += dist(p.zs, i, j) <= r;
        na += dist(p.za, i, j) <= r;
      }
      out[i] += (-digamma(static_cast<double>(ns) + 1.0) - digamma(static_cast<double>(na) + 1.0)) /
                static_cast<double>(ks.size());
    }
  }
  return out;
}

CriticOptions small_critic(std::size_t steps, std::size_t batch, double lr) {
  CriticOptions o;
  o.hidden = {32, 32};
  o.steps = steps;
  o.batch_size = batch;
  o.learning_rate = lr;
  return o;
}

knn::LatentPairSet permute_actions(const knn::LatentPairSet& p, std::uint64_t seed) {
  Rng rng(seed);
  return {p.zs, gather_rows(p.za, shuffle(p.size(), rng))};
}

PolicyEnsemble constant_ensemble(std::vector<std::vector<double>> outputs, std::size_t state_dim) {
  PolicyEnsemble e;
  Rng rng(0);
  for (const auto& out : outputs) {
    auto m = nn::init_mlp(std::vector<std::size_t>{state_dim, out.size()}, rng).zeros_like();
    m.layers[0].bias = out;
    e.members.push_back(m);
  }
  e.state_stats = Standardizer::identity(state_dim);
  e.action_stats = Standardizer::identity(outputs.front().size());
  return e;
}

DemoDataset tiny_dataset() {
  Trajectory t{"t", Matrix(3, 2, std::vector<double>{0, 0, 1, 0, 1, 0}),
               Matrix(3, 1, std::vector<double>{0.5, 0.5, 0.5}), 3.0};
  Trajectory u{"u", Matrix(1, 2, std::vector<double>{2, 2}), Matrix(1, 1, std::vector<double>{1.0}), 1.0};
  return DemoDataset({t, u});
}

}  // namespace

TEST_CASE("method names round trip") {
  for (auto m : {Method::DemInf, Method::BiKsg, Method::Kl, Method::Mine, Method::InfoNce, Method::Vip, Method::Compat,
                 Method::Uncertainty, Method::PolicyLoss}) {
    CHECK(parse_method(method_name(m)) == m);
  }
  CHECK_THROWS(parse_method("nope"));
}

TEST_CASE("KSG scores match a brute-force oracle") {
  const auto g = synth::gen_gaussian_pairs({250, 2, 0.6, 11});
  const knn::PassPlan whole{{5, 6, 7}, 250, 1, 0};
  const auto fast = ksg_step_scores(g.pairs, whole).values;
  const auto slow = brute_force_ksg(g.pairs, {5, 6, 7});
  CHECK(testing::max_abs_diff(fast, slow) <= 1e-12);
}

TEST_CASE("KSG paired data outscores permuted data") {
  const auto g = synth::gen_gaussian_pairs({512, 2, 0.9, 1});
  const knn::PassPlan plan{{5, 6, 7}, 512, 1, 0};
  CHECK(mean(ksg_step_scores(g.pairs, plan).values) > mean(ksg_step_scores(permute_actions(g.pairs, 2), plan).values));
  CHECK(mean(biksg_step_scores(g.pairs, plan).values) >
        mean(biksg_step_scores(permute_actions(g.pairs, 2), plan).values));
  CHECK(mean(kl_step_scores(g.pairs, plan).values) > mean(kl_step_scores(permute_actions(g.pairs, 2), plan).values));
}

TEST_CASE("KSG restores to zero on independent batches") {
  const auto g = synth::gen_gaussian_pairs({4096, 1, 0.0, 3});
  const knn::PassPlan plan{{5}, 1024, 1, 0};
  const double m = mean(ksg_step_scores(g.pairs, plan).values);
  CHECK(std::abs(m + digamma(5.0) + digamma(1024.0)) <= 0.05);
}

TEST_CASE("KSG duplicate rows score equally") {
  Rng rng(4);
  knn::LatentPairSet p{testing::random_normal(40, 2, rng), testing::random_normal(40, 1, rng)};
  for (std::size_t r = 20; r < 40; ++r) {
    for (std::size_t c = 0; c < 2; ++c) p.zs(r, c) = p.zs(0, c);
    p.za(r, 0) = p.za(0, 0);
  }
  const auto s = ksg_step_scores(p, knn::PassPlan{{5}, 40, 1, 0}).values;
  for (std::size_t r = 20; r < 40; ++r) CHECK(s[r] == s[0]);
}

TEST_CASE("KSG is symmetric in state and action") {
  const auto g = synth::gen_gaussian_pairs({600, 2, 0.5, 8});
  Rng rng(8);
  const knn::LatentPairSet swapped{g.pairs.za, g.pairs.zs};
  const knn::PassPlan plan{{5, 6, 7}, 256, 3, 5};
  CHECK(testing::max_abs_diff(ksg_step_scores(g.pairs, plan).values, ksg_step_scores(swapped, plan).values) <= 1e-12);
}

TEST_CASE("absolute KSG on Gaussians") {
  for (double rho : {0.0, 0.5, 0.8}) {
    const auto g = synth::gen_gaussian_pairs({4096, 1, rho, 21});
    CHECK(std::abs(ksg_absolute_mi(g.pairs, 5, 4096) - g.true_mi) <= 0.05);
  }
}

TEST_CASE("absolute KSG spread over 10 seeds") {
  std::vector<double> est;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    est.push_back(ksg_absolute_mi(synth::gen_gaussian_pairs({4096, 1, 0.8, 100 + seed}).pairs, 5, 4096));
  }
  const double m = mean(est);
  double var = 0.0;
  for (double e : est) var += (e - m) * (e - m);
  CHECK(std::sqrt(var / 9.0) < 0.03);
  CHECK(std::abs(m - 0.5108) <= 0.05);
}

TEST_CASE("BiKSG formula on an evenly spaced diagonal") {
  // z_s = z_a = i: the 3rd joint-L2 neighbor of an interior point sits at
  // 2*sqrt(2), and each marginal holds exactly 4 others within that radius.
  const std::size_t n = 24;
  knn::LatentPairSet p{Matrix(n, 1), Matrix(n, 1)};
  for (std::size_t i = 0; i < n; ++i) {
    p.zs(i, 0) = static_cast<double>(i);
    p.za(i, 0) = static_cast<double>(i);
  }
  const auto s = biksg_step_scores(p, knn::PassPlan{{3}, n, 1, 0}).values;
  for (std::size_t i = 2; i + 2 < n; ++i) CHECK(s[i] == doctest::Approx(-2.0 * std::log(4.0)));
}

TEST_CASE("KL score cancels when all distances agree and ignores scale") {
  Rng rng(9);
  const auto zs = testing::random_normal(300, 1, rng);
  const knn::LatentPairSet same{zs, zs};
  const knn::PassPlan plan{{5, 6, 7}, 300, 1, 0};
  for (double v : kl_step_scores(same, plan).values) CHECK(v == 0.0);

  const auto g = synth::gen_gaussian_pairs({300, 2, 0.5, 9});
  knn::LatentPairSet scaled = g.pairs;
  for (double& v : scaled.zs.values()) v *= 4.0;
  for (double& v : scaled.za.values()) v *= 4.0;
  CHECK(testing::max_abs_diff(kl_step_scores(g.pairs, plan).values, kl_step_scores(scaled, plan).values) <= 1e-12);
}

TEST_CASE("KL guards zero distances") {
  Rng rng(10);
  knn::LatentPairSet p{testing::random_normal(60, 1, rng), testing::random_normal(60, 1, rng)};
  for (std::size_t r = 50; r < 60; ++r) {
    p.zs(r, 0) = p.zs(0, 0);
    p.za(r, 0) = p.za(0, 0);
  }
  const auto s = kl_step_scores(p, knn::PassPlan{{5}, 60, 1, 0});
  for (double v : s.values) CHECK(std::isfinite(v));
  CHECK(s.metadata.at("degenerate_evaluations").get<std::size_t>() > 0);
}

TEST_CASE("InfoNCE loss on a uniform logit matrix") {
  const Matrix logits(8, 8, 0.3);
  Matrix grad;
  CHECK(symmetric_infonce_loss(logits, &grad) == doctest::Approx(std::log(8.0)));
  // Rows of the gradient sum to zero for a softmax cross-entropy.
  for (std::size_t r = 0; r < 8; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 8; ++c) s += grad(r, c);
    CHECK(std::abs(s) < 1e-12);
  }
}

TEST_CASE("InfoNCE loss gradient matches finite differences") {
  Rng rng(12);
  Matrix logits = testing::random_normal(5, 5, rng);
  Matrix grad;
  symmetric_infonce_loss(logits, &grad);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    Matrix up = logits, down = logits;
    up.values()[i] += 1e-6;
    down.values()[i] -= 1e-6;
    const double fd = (symmetric_infonce_loss(up) - symmetric_infonce_loss(down)) / 2e-6;
    CHECK(grad.values()[i] == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("InfoNCE on independent data stays near ln B") {
  Rng rng(13);
  const auto s = testing::random_normal(4096, 2, rng);
  const auto a = testing::random_normal(4096, 2, rng);
  const auto model = train_infonce(s, a, small_critic(1000, 64, 1e-3), Rng(14));
  for (double v : model.implied_mi_trace) CHECK(v <= std::log(64.0));
  const auto test_s = testing::random_normal(64, 2, rng);
  const auto test_a = testing::random_normal(64, 2, rng);
  CHECK(std::abs(infonce_batch_loss(model, test_s, test_a) - std::log(64.0)) <= 0.1);
}

TEST_CASE("InfoNCE matched pairs outscore mismatched pairs") {
  const auto g = synth::gen_gaussian_pairs({4096, 1, 0.9, 15});
  const auto model = train_infonce(g.pairs.zs, g.pairs.za, small_critic(1000, 64, 1e-3), Rng(16));
  const auto matched = infonce_step_scores(model, g.pairs.zs, g.pairs.za).values;
  const auto perm = permute_actions(g.pairs, 3);
  const auto mismatched = infonce_step_scores(model, perm.zs, perm.za).values;
  CHECK(mean(matched) > mean(mismatched));
  CHECK(infonce_step_scores(model, g.pairs.zs, g.pairs.za).values == matched);
}

TEST_CASE("MINE scoring is a pure function of the critic") {
  const auto g = synth::gen_gaussian_pairs({1024, 1, 0.5, 17});
  const auto model = train_mine(g.pairs.zs, g.pairs.za, small_critic(200, 64, 1e-3), Rng(18));
  CHECK(model.trained_steps == 80);
  CHECK(model.estimate_trace.size() == 80);
  const auto a = mine_step_scores(model, g.pairs.zs, g.pairs.za).values;
  CHECK(mine_step_scores(model, g.pairs.zs, g.pairs.za).values == a);
  CHECK(train_mine(g.pairs.zs, g.pairs.za, small_critic(200, 64, 1e-3), Rng(18)).critic == model.critic);
}

TEST_CASE("MINE aborts on divergence") {
  Rng rng(19);
  Matrix s = testing::random_normal(512, 1, rng);
  Matrix a = s;  // deterministic pairing: the DV bound grows without limit
  auto opts = small_critic(2000, 128, 1e-2);
  opts.divergence_limit = 1.0;
  CHECK_THROWS_AS(train_mine(s, a, opts, Rng(20)), NumericalError);
}

TEST_CASE("VIP step scores") {
  const auto ds = tiny_dataset();
  Rng rng(21);
  VipModel m;
  m.encoder = nn::init_mlp(std::vector<std::size_t>{2, 8, 8}, rng);
  m.stats = Standardizer::identity(2);
  const auto s = vip_step_scores(m, ds).values;
  REQUIRE(s.size() == 4);
  CHECK(s[1] == 0.0);  // s_2 == s_1: a pause
  CHECK(s[2] == 0.0);  // last step
  CHECK(s[3] == 0.0);  // length-1 trajectory
  Matrix pts(2, 2, std::vector<double>{0, 0, 1, 0});
  const auto f = nn::forward(m.encoder, pts);
  double d = 0.0;
  for (std::size_t c = 0; c < f.cols(); ++c) d += (f(0, c) - f(1, c)) * (f(0, c) - f(1, c));
  CHECK(s[0] == doctest::Approx(std::sqrt(d)));
}

TEST_CASE("VIP training telescopes and approaches the goal") {
  const auto ds = synth::gen_pointmass(synth::PointMassSpec::defaults(6, 4));
  const auto m = train_vip(ds, small_critic(300, 64, 1e-3), Rng(22));
  CHECK(m.loss_trace.size() == 300);
  const auto s = vip_step_scores(m, ds).values;
  for (std::size_t i = 0; i < ds.num_trajectories(); ++i) {
    const auto& t = ds.trajectory(i);
    double sum = 0.0;
    for (std::size_t k = 0; k < t.length(); ++k) sum += s[ds.row_of(i, k)];
    const Matrix f = nn::forward(m.encoder, m.stats.apply(t.states));
    double d = 0.0;
    for (std::size_t c = 0; c < f.cols(); ++c) d += (f(0, c) - f(t.length() - 1, c)) * (f(0, c) - f(t.length() - 1, c));
    CHECK(std::abs(sum - std::sqrt(d)) <= 1e-9);
  }
}

TEST_CASE("ensemble std uses the population convention") {
  CHECK(ensemble_std({Matrix(1, 1, 1.0), Matrix(1, 1, -1.0)}) == std::vector<double>{1.0});
  CHECK(ensemble_std({Matrix(2, 2, 0.1), Matrix(2, 2, 0.1), Matrix(2, 2, 0.1)}) == std::vector<double>{0.0, 0.0});
}

TEST_CASE("compatibility rule") {
  CHECK(compatibility_score(0.03, 5.0, 0.025, 8.0) == 1.0);
  CHECK(compatibility_score(0.01, 0.0, 0.025, 8.0) == 1.0);
  CHECK(compatibility_score(0.01, 4.0, 0.025, 8.0) == doctest::Approx(0.5));
  CHECK(compatibility_score(0.01, 80.0, 0.025, 8.0) == 0.0);
}

TEST_CASE("ensemble scorers on hand-built members") {
  const auto ds = tiny_dataset();
  const auto same = constant_ensemble({{0.5}, {0.5}, {0.5}}, 2);
  const auto unc = uncertainty_step_scores(same, ds).values;
  for (double v : unc) CHECK(v == 0.0);
  const auto loss = policy_loss_step_scores(same, ds).values;
  CHECK(loss[0] == 0.0);
  CHECK(loss[3] == doctest::Approx(-0.25));
  for (double v : loss) CHECK(v <= 0.0);
  const auto compat = compatibility_step_scores(same, ds, 0.025, 8.0).values;
  CHECK(compat[0] == 1.0);
  CHECK(compat[3] == doctest::Approx(1.0 - 0.25 / 8.0));

  const auto split = constant_ensemble({{1.5}, {-0.5}}, 2);
  for (double v : uncertainty_step_scores(split, ds).values) CHECK(v == doctest::Approx(1.0));
  for (double v : compatibility_step_scores(split, ds, 0.025, 8.0).values) CHECK(v == 1.0);
}

TEST_CASE("BC ensemble training") {
  const auto ds = synth::gen_pointmass(synth::PointMassSpec::defaults(4, 6));
  EnsembleOptions opts;
  opts.regression.hidden = {32, 32};
  opts.regression.steps = 600;
  opts.regression.batch_size = 64;
  opts.regression.learning_rate = 1e-3;
  const auto e = train_bc_ensemble(ds, opts, Rng(23));
  REQUIRE(e.members.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = i + 1; j < 5; ++j) CHECK(nn::squared_distance(e.members[i], e.members[j]) > 0.0);
    const auto& tr = e.loss_traces[i];
    double head = 0.0, tail = 0.0;
    for (std::size_t k = 0; k < 100; ++k) {
      head += tr[k];
      tail += tr[tr.size() - 1 - k];
    }
    CHECK(tail < head);
  }
  const auto again = train_bc_ensemble(ds, opts, Rng(23));
  for (std::size_t i = 0; i < 5; ++i) CHECK(again.members[i] == e.members[i]);
  opts.threads = 2;
  const auto threaded = train_bc_ensemble(ds, opts, Rng(23));
  for (std::size_t i = 0; i < 5; ++i) CHECK(threaded.members[i] == e.members[i]);
  for (double v : uncertainty_step_scores(e, ds).values) CHECK(v >= 0.0);
}
