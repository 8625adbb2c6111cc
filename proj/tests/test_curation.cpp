#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "deminf/curation.hpp"
#include "deminf/synth.hpp"

using namespace deminf;
using namespace deminf::curation;

namespace {

DemoDataset labelled(const std::vector<std::size_t>& lengths, const std::vector<double>& labels) {
  std::vector<Trajectory> ts;
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    ts.push_back({"t" + std::to_string(i), Matrix(lengths[i], 1, static_cast<double>(i)), Matrix(lengths[i], 1),
                  labels[i]});
  }
  return DemoDataset(std::move(ts));
}

est::StepScores per_traj(const DemoDataset& ds, const std::vector<double>& values) {
  est::StepScores s;
  for (const auto& ref : ds.step_index()) s.values.push_back(values[ref.traj]);
  return s;
}

}  // namespace

TEST_CASE("clip examples") {
  est::StepScores s;
  for (int i = 1; i <= 100; ++i) s.values.push_back(i);
  ClipBounds b{};
  const auto c = clip_scores(s, 1, 99, &b);
  CHECK(*std::min_element(c.values.begin(), c.values.end()) == doctest::Approx(1.99));
  CHECK(*std::max_element(c.values.begin(), c.values.end()) == doctest::Approx(99.01));
  CHECK(b.lo == doctest::Approx(1.99));
  CHECK(clip_scores(s, 0, 100).values == s.values);
  est::StepScores flat{std::vector<double>(10, 2.5), {}};
  CHECK(clip_scores(flat).values == flat.values);
  CHECK_THROWS(clip_scores(est::StepScores{}));
}

TEST_CASE("trajectory scores and ranks") {
  const auto ds = labelled({10, 1000, 3}, {1, 2, 3});
  auto t = trajectory_scores(per_traj(ds, {1.0, 1.0, 5.0}), ds);
  CHECK(t.entries[0].score == 1.0);
  CHECK(t.entries[1].score == 1.0);
  CHECK(t.entries[2].rank == 1);
  CHECK(t.entries[0].rank == 2);  // tie broken by dataset order
  CHECK(t.entries[1].rank == 3);
  const auto two = labelled({4, 4}, {1, 1});
  const auto r = trajectory_scores(per_traj(two, {2.0, 5.0}), two);
  CHECK(r.entries[0].rank == 2);
  CHECK(r.entries[1].rank == 1);
  CHECK(r.by_rank() == std::vector<std::size_t>{1, 0});
}

TEST_CASE("filter examples") {
  const auto ds = labelled({2, 3, 4, 5}, {1, 2, 3, 1});
  const auto t = trajectory_scores(per_traj(ds, {0.125, 0.5, 0.375, 0.25}), ds);
  CHECK(filter(ds, t, 0.0).num_trajectories() == 4);
  CHECK(filter(ds, t, 0.5).num_trajectories() == 0);
  const auto kept = filter(ds, t, 0.15);
  REQUIRE(kept.num_trajectories() == 3);
  CHECK(kept.trajectory(0).id == "t1");
  CHECK(kept.trajectory(2).id == "t3");
  CHECK(keep_top_fraction(ds, t, 0.5).num_trajectories() == 2);
  CHECK(keep_top_fraction(ds, t, 0.5).trajectory(0).id == "t1");
  CHECK(keep_top_fraction(ds, t, 0.3).num_trajectories() == 2);
  CHECK(to_jsonl(keep_top_fraction(ds, t, 1.0)) == to_jsonl(ds));
  CHECK(keep_top_fraction(ds, t, 0.0).num_trajectories() == 0);
}

TEST_CASE("keep-frac 0.5 of 90 keeps 45") {
  const auto ds = synth::gen_pointmass(synth::PointMassSpec::defaults(30, 0));
  Rng rng(1);
  est::StepScores s;
  for (std::size_t i = 0; i < ds.num_steps(); ++i) s.values.push_back(rng.normal());
  const auto t = trajectory_scores(s, ds);
  CHECK(keep_top_fraction(ds, t, 0.5).num_trajectories() == 45);
}

TEST_CASE("quality curve hand example") {
  const auto ds = labelled({1, 1, 1, 1}, {1, 1, 3, 3});
  const auto t = trajectory_scores(per_traj(ds, {1, 2, 3, 4}), ds);
  const auto c = quality_curve(t);
  REQUIRE(c.size() == 4);
  CHECK(c[0].mean_quality == doctest::Approx(2.0));
  CHECK(c[1].mean_quality == doctest::Approx(7.0 / 3.0));
  CHECK(c[2].mean_quality == doctest::Approx(3.0));
  CHECK(c[3].mean_quality == doctest::Approx(3.0));
  for (const auto& p : c) CHECK(p.random_mean_quality == 2.0);
}

TEST_CASE("curve endpoints and oracle monotonicity") {
  Rng rng(2);
  std::vector<double> labels, scores;
  for (int i = 0; i < 30; ++i) {
    labels.push_back(1 + static_cast<double>(rng.uniform_index(3)));
    scores.push_back(rng.normal());
  }
  const auto ds = labelled(std::vector<std::size_t>(30, 2), labels);
  const auto t = trajectory_scores(per_traj(ds, scores), ds);
  const auto c = quality_curve(t);
  CHECK(c.front().mean_quality == doctest::Approx(mean(labels)));
  CHECK(c.back().mean_quality == labels[t.by_rank().front()]);
  for (std::size_t m = 1; m < c.size(); ++m) CHECK(c[m].oracle_mean_quality >= c[m - 1].oracle_mean_quality);
}

TEST_CASE("evaluate") {
  const auto ds = labelled({2, 2, 2, 2, 2}, {1, 2, 2, 3, 3});
  const auto t = trajectory_scores(per_traj(ds, {1, 2, 2, 3, 3}), ds);
  const auto r = evaluate(t);
  CHECK(r.spearman == doctest::Approx(1.0));
  for (const auto& p : r.curve) CHECK(p.mean_quality == doctest::Approx(p.oracle_mean_quality));
  CHECK(r.to_json().contains("spearman"));
  const auto flat = labelled({2, 2, 2}, {2, 2, 2});
  CHECK_THROWS(evaluate(trajectory_scores(per_traj(flat, {1, 2, 3}), flat)));
  const auto unlabelled = DemoDataset({Trajectory{"a", Matrix(1, 1), Matrix(1, 1), {}},
                                       Trajectory{"b", Matrix(1, 1), Matrix(1, 1), {}}});
  CHECK_THROWS(quality_curve(trajectory_scores(per_traj(unlabelled, {1, 2}), unlabelled)));
}

TEST_CASE("random scores have no rank agreement on average") {
  const auto ds = synth::gen_pointmass(synth::PointMassSpec::defaults(30, 1));
  double sum = 0.0;
  const int seeds = 40;
  for (int seed = 0; seed < seeds; ++seed) {
    Rng rng(static_cast<std::uint64_t>(seed), 77);
    std::vector<double> values(ds.num_trajectories());
    for (double& v : values) v = rng.normal();
    sum += evaluate(trajectory_scores(per_traj(ds, values), ds)).spearman;
  }
  CHECK(std::abs(sum / seeds) <= 0.15);
}

TEST_CASE("affine transforms keep ranks and curve") {
  const auto ds = synth::gen_pointmass(synth::PointMassSpec::defaults(5, 2));
  Rng rng(3);
  est::StepScores s;
  for (std::size_t i = 0; i < ds.num_steps(); ++i) s.values.push_back(rng.normal());
  est::StepScores a = s;
  for (double& v : a.values) v = 4.0 * v - 1.0;
  const auto t1 = trajectory_scores(clip_scores(s), ds);
  const auto t2 = trajectory_scores(clip_scores(a), ds);
  for (std::size_t i = 0; i < t1.size(); ++i) CHECK(t1.entries[i].rank == t2.entries[i].rank);
  const auto c1 = quality_curve(t1), c2 = quality_curve(t2);
  for (std::size_t m = 0; m < c1.size(); ++m) CHECK(c1[m].mean_quality == c2[m].mean_quality);
}

TEST_CASE("csv formats round trip") {
  const auto ds = labelled({2, 3}, {1, 3});
  const auto t = trajectory_scores(per_traj(ds, {0.1, -2.5}), ds);
  const std::string csv = traj_scores_csv(t);
  CHECK(csv.rfind("traj_id,score,rank,quality\n", 0) == 0);
  const auto back = parse_traj_scores_csv(csv);
  REQUIRE(back.size() == 2);
  CHECK(back.entries[1].score == -2.5);
  CHECK(back.entries[1].rank == 2);
  CHECK(back.entries[0].quality == 1.0);
  CHECK(step_scores_csv(per_traj(ds, {0.1, -2.5}), ds).rfind("row,traj_id,t,score\n0,t0,0,0.1\n", 0) == 0);
  CHECK(curve_csv(quality_curve(t)).rfind("num_filtered,mean_quality,oracle_mean_quality,random_mean_quality\n", 0) == 0);
  CHECK_THROWS(parse_traj_scores_csv("bad,header\n"));
}

TEST_CASE("format_double is exact and short") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(-2.5) == "-2.5");
  const double x = 1.0 / 3.0;
  CHECK(std::stod(format_double(x)) == x);
}

TEST_CASE("atomic write") {
  const auto path = std::filesystem::temp_directory_path() / "deminf_atomic.txt";
  write_file_atomic(path, "hello\n");
  CHECK(read_file(path) == "hello\n");
  write_file_atomic(path, "again\n");
  CHECK(read_file(path) == "again\n");
  std::filesystem::remove(path);
}
