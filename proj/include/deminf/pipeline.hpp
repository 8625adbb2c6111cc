#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "deminf/curation.hpp"
#include "deminf/dataset.hpp"
#include "deminf/estimators.hpp"
#include "deminf/knn.hpp"
#include "deminf/vae.hpp"

namespace deminf {

inline constexpr const char* kVersion = "0.1.0";

/// Rng stream ids per trained component, so seeds never collide.
namespace streams {
inline constexpr std::uint64_t kStateVae = 0x10;
inline constexpr std::uint64_t kActionVae = 0x11;
inline constexpr std::uint64_t kMine = 0x20;
inline constexpr std::uint64_t kInfoNce = 0x21;
inline constexpr std::uint64_t kVip = 0x22;
inline constexpr std::uint64_t kEnsemble = 0x30;
}  // namespace streams

vae::TrainOptions vae_options(const CurationConfig& config, std::size_t latent_dim);
knn::PassPlan pass_plan(const CurationConfig& config);
est::CriticOptions critic_options(const CurationConfig& config);
est::EnsembleOptions ensemble_options(const CurationConfig& config, std::size_t threads);

/// Trains the state and action VAEs and embeds every step. Latent sizes are
/// capped at the input width; the effective sizes go to `metadata`.
knn::LatentPairSet embed_dataset(const DemoDataset& dataset, const CurationConfig& config,
                                 nlohmann::json* metadata = nullptr);

struct ScoreRun {
  est::StepScores steps;    // raw per-step scores
  est::StepScores clipped;  // after percentile clipping
  curation::ClipBounds bounds{};
  curation::TrajScores trajectories;
};

/// Trains whatever the method needs, scores every step, clips and averages
/// per trajectory.
ScoreRun score_dataset(est::Method method, const DemoDataset& dataset, const CurationConfig& config,
                       std::size_t threads = 1);

/// Metadata sidecar for the step-score CSV: provenance plus the clip bounds
/// and the mean / std of clipped scores (for a z-scored view).
nlohmann::json step_sidecar(const ScoreRun& run, est::Method method, const CurationConfig& config);

/// Provenance record written next to every CLI output.
struct RunManifest {
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::size_t threads = 1;
  double wall_seconds = 0.0;

  [[nodiscard]] nlohmann::json to_json() const;
  void write(const std::filesystem::path& path) const;
};

struct SelftestCheck {
  std::string name;
  double estimate;
  double target;
  double tolerance;
  bool pass;
};

struct SelftestReport {
  std::vector<SelftestCheck> checks;
  [[nodiscard]] bool all_pass() const;
  [[nodiscard]] nlohmann::json to_json() const;
};

/// Estimator validation battery against closed-form mutual information.
/// Prints one line per check to `log` when non-null.
SelftestReport run_selftest(std::ostream* log, std::size_t threads = 1);

}  // namespace deminf
