#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "deminf/dataset.hpp"
#include "deminf/knn.hpp"

namespace deminf::synth {

/// n samples of d independent dimension pairs, each with correlation rho.
struct GaussianSpec {
  std::size_t n = 4096;
  std::size_t dim = 1;
  double rho = 0.0;
  std::uint64_t seed = 0;
};

struct GaussianPairs {
  knn::LatentPairSet pairs;
  double true_mi;  // nats
};

/// -(d/2) ln(1 - rho^2); throws std::invalid_argument unless |rho| < 1.
double gaussian_mi(std::size_t dim, double rho);

GaussianPairs gen_gaussian_pairs(const GaussianSpec& spec);

/// Columns zs_0..zs_{d-1},za_0..za_{d-1}.
std::string gaussian_csv(const knn::LatentPairSet& pairs);
knn::LatentPairSet parse_gaussian_csv(const std::string& text);
nlohmann::json gaussian_sidecar(const GaussianSpec& spec, double true_mi);

/// Behavior of one operator-quality level of the scripted point mass.
struct LevelSpec {
  double quality = 3.0;
  std::size_t count = 30;
  double noise_sigma = 0.0;  // per-dimension Gaussian action noise
  double detour_prob = 0.0;  // per trajectory: head to a random waypoint mid-episode
  double pause_prob = 0.0;   // per step: start a run of zero actions
  double pause_continue = 2.0 / 3.0;  // geometric pause length, mean 1 / (1 - p) steps
};

struct PointMassSpec {
  std::vector<LevelSpec> levels;
  std::size_t horizon = 200;
  double step_size = 0.1;
  double goal_tolerance = 0.05;
  double min_start_goal_distance = 0.3;
  std::uint64_t seed = 0;

  /// 30 trajectories each at quality 3 (expert), 2 (okay), 1 (worse).
  static PointMassSpec defaults(std::size_t per_level = 30, std::uint64_t seed = 0);
};

/// What a step was doing when its action was drawn.
enum class Segment : int { Direct = 0, Detour = 1, Pause = 2 };

struct AnnotatedDemos {
  DemoDataset dataset;
  std::vector<Segment> segments;  // per flat step
};

/// States are (position, goal) in R^4, actions are displacements in R^2.
/// Every emitted trajectory ends within goal_tolerance of its goal.
AnnotatedDemos gen_pointmass_annotated(const PointMassSpec& spec);
DemoDataset gen_pointmass(const PointMassSpec& spec);

/// Maps a state (position, goal) to a displacement; the environment clips
/// it to step_size.
using Policy = std::function<void(std::span<const double> state, std::span<double> action)>;

struct PolicyEval {
  std::size_t episodes = 0;
  std::size_t successes = 0;
  [[nodiscard]] double success_rate() const {
    return episodes ? static_cast<double>(successes) / static_cast<double>(episodes) : 0.0;
  }
};

/// Closed-loop rollouts on fresh tasks drawn from `task_seed`; success means
/// reaching goal_tolerance within the horizon.
PolicyEval evaluate_policy(const Policy& policy, const PointMassSpec& spec, std::size_t episodes,
                           std::uint64_t task_seed);

}  // namespace deminf::synth
