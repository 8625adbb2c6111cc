#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "deminf/dataset.hpp"
#include "deminf/estimators.hpp"

namespace deminf::curation {

struct ClipBounds {
  double lo;
  double hi;
};

/// Clamp every step score into [percentile(lo), percentile(hi)], both
/// percentiles taken over all steps jointly.
est::StepScores clip_scores(const est::StepScores& steps, double lo = 1.0, double hi = 99.0,
                            ClipBounds* bounds = nullptr);

struct TrajScore {
  std::string id;
  double score = 0.0;
  std::size_t rank = 0;  // 1 = highest score
  std::optional<double> quality;
};

/// One entry per trajectory, in dataset order.
struct TrajScores {
  std::vector<TrajScore> entries;

  [[nodiscard]] std::size_t size() const noexcept { return entries.size(); }
  /// Entry indices from rank 1 to rank n.
  [[nodiscard]] std::vector<std::size_t> by_rank() const;
  [[nodiscard]] std::vector<double> scores() const;
  /// Throws if any entry lacks a quality label.
  [[nodiscard]] std::vector<double> labels() const;
};

/// Assigns ranks 1..n by descending score; ties keep dataset order.
void assign_ranks(TrajScores& scores);

/// Per-trajectory mean of the given step scores.
TrajScores trajectory_scores(const est::StepScores& steps, const DemoDataset& dataset);

/// Trajectories with score strictly above kappa, dataset order preserved.
DemoDataset filter(const DemoDataset& dataset, const TrajScores& scores, double kappa);

/// The top ceil(fraction * n) trajectories by rank, dataset order preserved.
DemoDataset keep_top_fraction(const DemoDataset& dataset, const TrajScores& scores, double fraction);

struct CurvePoint {
  std::size_t num_filtered;
  double mean_quality;
  double oracle_mean_quality;
  double random_mean_quality;
};

/// Mean label of the trajectories left after removing the m lowest-ranked,
/// for m = 0..n-1, next to the label-sorted oracle and the overall mean.
std::vector<CurvePoint> quality_curve(const TrajScores& scores);

struct Report {
  double spearman = 0.0;
  std::vector<CurvePoint> curve;
  double area_vs_random = 0.0;  // mean over m of (mean_quality - random)
  double oracle_area_vs_random = 0.0;

  [[nodiscard]] nlohmann::json to_json() const;
};

Report evaluate(const TrajScores& scores);

// File formats -------------------------------------------------------------

std::string step_scores_csv(const est::StepScores& steps, const DemoDataset& dataset);
std::string traj_scores_csv(const TrajScores& scores);
TrajScores parse_traj_scores_csv(const std::string& text);
std::string curve_csv(const std::vector<CurvePoint>& curve);

/// Write `contents` to a temporary sibling and rename it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

/// Shortest decimal string that parses back to exactly `v`.
std::string format_double(double v);

}  // namespace deminf::curation
