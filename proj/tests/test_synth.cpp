#include <doctest.h>

#include <cmath>

#include "deminf/synth.hpp"

using namespace deminf;
using namespace deminf::synth;

namespace {

double correlation(const Matrix& a, const Matrix& b, std::size_t c) {
  const double n = static_cast<double>(a.rows());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    ma += a(i, c);
    mb += b(i, c);
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    sab += (a(i, c) - ma) * (b(i, c) - mb);
    saa += (a(i, c) - ma) * (a(i, c) - ma);
    sbb += (b(i, c) - mb) * (b(i, c) - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

double norm2(std::span<const double> v) { return std::sqrt(v[0] * v[0] + v[1] * v[1]); }

}  // namespace

TEST_CASE("gaussian mutual information") {
  CHECK(gaussian_mi(1, 0.0) == 0.0);
  CHECK(gaussian_mi(1, 0.8) == doctest::Approx(0.51083).epsilon(1e-5));
  CHECK(gaussian_mi(3, 0.5) == doctest::Approx(0.43152).epsilon(1e-5));
  CHECK_THROWS(gaussian_mi(1, 1.0));
  CHECK_THROWS(gen_gaussian_pairs({10, 1, -1.0, 0}));
}

TEST_CASE("gaussian pairs have the requested correlation") {
  const auto g = gen_gaussian_pairs({4096, 3, 0.6, 4});
  CHECK(g.pairs.zs.rows() == 4096);
  CHECK(g.pairs.za.cols() == 3);
  for (std::size_t c = 0; c < 3; ++c) CHECK(std::abs(correlation(g.pairs.zs, g.pairs.za, c) - 0.6) <= 0.03);
  const auto again = gen_gaussian_pairs({4096, 3, 0.6, 4});
  CHECK(again.pairs.zs == g.pairs.zs);
  CHECK(again.pairs.za == g.pairs.za);
}

TEST_CASE("gaussian csv round trip") {
  const auto g = gen_gaussian_pairs({20, 2, 0.3, 1});
  const auto text = gaussian_csv(g.pairs);
  CHECK(text.rfind("zs_0,zs_1,za_0,za_1\n", 0) == 0);
  const auto back = parse_gaussian_csv(text);
  CHECK(back.zs == g.pairs.zs);
  CHECK(back.za == g.pairs.za);
  CHECK(gaussian_sidecar({20, 2, 0.3, 1}, g.true_mi).at("true_mi").get<double>() == g.true_mi);
}

TEST_CASE("default point-mass benchmark") {
  const auto ds = gen_pointmass(PointMassSpec::defaults());
  CHECK(ds.num_trajectories() == 90);
  CHECK(ds.state_dim() == 4);
  CHECK(ds.action_dim() == 2);
  int counts[4] = {0, 0, 0, 0};
  double length[4] = {0, 0, 0, 0};
  for (const auto& t : ds.trajectories()) {
    REQUIRE(t.quality.has_value());
    const int q = static_cast<int>(*t.quality);
    ++counts[q];
    length[q] += static_cast<double>(t.length());
    const auto last = t.states.row(t.length() - 1);
    const auto step = t.actions.row(t.length() - 1);
    CHECK(std::hypot(last[0] + step[0] - last[2], last[1] + step[1] - last[3]) < 0.05);
    for (std::size_t r = 0; r < t.length(); ++r) CHECK(norm2(t.actions.row(r)) <= 0.1 + 1e-12);
  }
  CHECK(counts[1] == 30);
  CHECK(counts[2] == 30);
  CHECK(counts[3] == 30);
  CHECK(length[3] < length[2]);
  CHECK(length[2] < length[1]);
  CHECK(gen_pointmass(PointMassSpec::defaults(1, 0)).num_trajectories() == 3);
}

TEST_CASE("noise-free direct trajectories approach the goal monotonically") {
  PointMassSpec spec;
  spec.levels = {LevelSpec{3.0, 10, 0.0, 0.0, 0.0}};
  spec.seed = 5;
  const auto ds = gen_pointmass(spec);
  for (const auto& t : ds.trajectories()) {
    double prev = 1e300;
    for (std::size_t r = 0; r < t.length(); ++r) {
      const auto s = t.states.row(r);
      const double d = std::hypot(s[0] - s[2], s[1] - s[3]);
      CHECK(d < prev);
      prev = d;
    }
  }
}

TEST_CASE("annotated segments") {
  const auto spec = PointMassSpec::defaults(30, 3);
  const auto demos = gen_pointmass_annotated(spec);
  REQUIRE(demos.segments.size() == demos.dataset.num_steps());
  std::size_t pauses = 0, detours = 0;
  for (std::size_t r = 0; r < demos.segments.size(); ++r) {
    const auto ref = demos.dataset.step(r);
    const auto& t = demos.dataset.trajectory(ref.traj);
    if (demos.segments[r] == Segment::Pause) {
      ++pauses;
      CHECK(t.actions(ref.t, 0) == 0.0);
      CHECK(t.actions(ref.t, 1) == 0.0);
    }
    if (demos.segments[r] != Segment::Direct) CHECK(*t.quality == 1.0);
    detours += demos.segments[r] == Segment::Detour;
  }
  CHECK(pauses > 0);
  CHECK(detours > 0);
}

TEST_CASE("point-mass generation is deterministic") {
  CHECK(to_jsonl(gen_pointmass(PointMassSpec::defaults(5, 9))) == to_jsonl(gen_pointmass(PointMassSpec::defaults(5, 9))));
  CHECK(to_jsonl(gen_pointmass(PointMassSpec::defaults(5, 9))) != to_jsonl(gen_pointmass(PointMassSpec::defaults(5, 8))));
}

TEST_CASE("unreachable configuration errors") {
  PointMassSpec spec;
  spec.levels = {LevelSpec{1.0, 1, 0.0, 0.0, 0.0}};
  spec.horizon = 2;  // a start-goal distance of at least 0.3 needs 3 or more steps
  CHECK_THROWS(gen_pointmass(spec));
}
