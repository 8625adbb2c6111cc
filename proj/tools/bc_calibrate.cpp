// Checks the point-mass quality levels against closed-loop behavior cloning:
// trains one BC policy per level and reports its success rate on fresh tasks.

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "deminf/dataset.hpp"
#include "deminf/mlp.hpp"
#include "deminf/synth.hpp"

using namespace deminf;

int main(int argc, char** argv) {
  CLI::App app{"Behavior-cloning success rate per point-mass quality level"};
  std::size_t per_level = 30;
  std::size_t steps = 4000;
  std::size_t width = 64;
  std::size_t episodes = 200;
  std::uint64_t seed = 0;
  app.add_option("--per-level", per_level, "Training trajectories per level");
  app.add_option("--steps", steps, "BC training steps");
  app.add_option("--width", width, "Hidden width");
  app.add_option("--episodes", episodes, "Evaluation episodes per level");
  app.add_option("--seed", seed, "Seed");
  double low_sigma = -1.0;
  double low_detour = -1.0;
  double low_pause = -1.0;
  app.add_option("--low-sigma", low_sigma, "Override noise_sigma of the lowest level");
  app.add_option("--low-detour", low_detour, "Override detour_prob of the lowest level");
  app.add_option("--low-pause", low_pause, "Override pause_prob of the lowest level");
  CLI11_PARSE(app, argc, argv);

  auto spec = synth::PointMassSpec::defaults(per_level, seed);
  auto& low = spec.levels.back();
  if (low_sigma >= 0.0) low.noise_sigma = low_sigma;
  if (low_detour >= 0.0) low.detour_prob = low_detour;
  if (low_pause >= 0.0) low.pause_prob = low_pause;
  std::printf("quality,train_trajectories,success_rate\n");
  for (const auto& level : spec.levels) {
    synth::PointMassSpec one = spec;
    one.levels = {level};
    const auto ds = synth::gen_pointmass(one);
    const auto [S, A] = flatten(ds, 1);
    const auto s_stats = Standardizer::fit(S);
    const auto a_stats = Standardizer::fit(A);
    nn::RegressionOptions opts;
    opts.hidden = {width, width};
    opts.steps = steps;
    opts.learning_rate = 1e-3;
    const auto model = nn::train_regression(s_stats.apply(S), a_stats.apply(A), opts, Rng(seed, 0x6263));
    const synth::Policy policy = [&](std::span<const double> state, std::span<double> action) {
      Matrix x(1, state.size(), std::vector<double>(state.begin(), state.end()));
      const Matrix y = nn::forward(model.params, s_stats.apply(x));
      for (std::size_t c = 0; c < action.size(); ++c) action[c] = y(0, c) * a_stats.scale[c] + a_stats.mean[c];
    };
    const auto eval = synth::evaluate_policy(policy, spec, episodes, seed + 1000);
    std::printf("%g,%zu,%.3f\n", level.quality, ds.num_trajectories(), eval.success_rate());
  }
  return 0;
}
