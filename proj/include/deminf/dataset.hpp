#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "deminf/matrix.hpp"

namespace deminf {

/// One demonstration: T states, T actions, optional operator quality label.
struct Trajectory {
  std::string id;
  Matrix states;   // T x d_s
  Matrix actions;  // T x d_a
  std::optional<double> quality;

  [[nodiscard]] std::size_t length() const noexcept { return states.rows(); }
};

struct StepRef {
  std::size_t traj;
  std::size_t t;
  friend bool operator==(const StepRef&, const StepRef&) = default;
};

/// Ordered trajectories plus the flat step index (traj, t) <-> row.
class DemoDataset {
 public:
  DemoDataset() = default;
  /// Validates shapes, finiteness and id uniqueness; throws ParseError.
  explicit DemoDataset(std::vector<Trajectory> trajectories);

  [[nodiscard]] const std::vector<Trajectory>& trajectories() const noexcept { return trajs_; }
  [[nodiscard]] const Trajectory& trajectory(std::size_t i) const { return trajs_.at(i); }
  [[nodiscard]] std::size_t num_trajectories() const noexcept { return trajs_.size(); }
  [[nodiscard]] std::size_t num_steps() const noexcept { return index_.size(); }
  [[nodiscard]] std::size_t state_dim() const noexcept { return state_dim_; }
  [[nodiscard]] std::size_t action_dim() const noexcept { return action_dim_; }

  [[nodiscard]] const std::vector<StepRef>& step_index() const noexcept { return index_; }
  [[nodiscard]] StepRef step(std::size_t row) const { return index_.at(row); }
  /// Flat row of step t of trajectory `traj`.
  [[nodiscard]] std::size_t row_of(std::size_t traj, std::size_t t) const;
  /// First flat row of each trajectory.
  [[nodiscard]] std::size_t offset(std::size_t traj) const { return offsets_.at(traj); }

  /// Sub-dataset of the given trajectories, order preserved.
  [[nodiscard]] DemoDataset subset(std::span<const std::size_t> traj_indices) const;

 private:
  std::vector<Trajectory> trajs_;
  std::vector<StepRef> index_;
  std::vector<std::size_t> offsets_;
  std::size_t state_dim_ = 0;
  std::size_t action_dim_ = 0;
};

DemoDataset load_jsonl(const std::filesystem::path& path);
DemoDataset parse_jsonl(const std::string& text);
std::string to_jsonl(const DemoDataset& dataset);
void write_jsonl(const DemoDataset& dataset, const std::filesystem::path& path);

/// Row t = [a_t, a_{t+1}, ..., a_{t+c-1}], past-the-end rows repeat a_{T-1}.
Matrix chunk_actions(const Trajectory& traj, std::size_t chunk);

/// Flattened (states, chunked actions) with rows in step_index order.
std::pair<Matrix, Matrix> flatten(const DemoDataset& dataset, std::size_t chunk);

/// Per-column affine standardization. Zero-variance columns keep scale 1.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;

  static Standardizer fit(const Matrix& x);
  static Standardizer identity(std::size_t dim);
  [[nodiscard]] Matrix apply(const Matrix& x) const;
  [[nodiscard]] std::size_t dim() const noexcept { return mean.size(); }
};

void to_json(nlohmann::json& j, const Standardizer& s);
void from_json(const nlohmann::json& j, Standardizer& s);

/// Hyperparameters of one curation run.
struct CurationConfig {
  std::uint64_t seed = 0;
  std::vector<std::size_t> k_list{5, 6, 7};
  std::size_t batch_size = 1024;
  std::size_t passes = 4;
  std::size_t z_s_dim = 12;
  std::size_t z_a_dim = 6;
  double beta = 0.05;
  double learning_rate = 1e-4;
  std::size_t train_steps = 4000;
  std::size_t chunk = 1;
  double clip_lo = 1.0;
  double clip_hi = 99.0;
  // Network and baseline knobs.
  std::size_t hidden_width = 64;
  std::size_t train_batch_size = 256;
  double eta = 0.025;
  double lambda = 8.0;

  /// Throws std::invalid_argument on a violated invariant.
  void validate() const;
  [[nodiscard]] std::size_t max_k() const;
  [[nodiscard]] nlohmann::json to_json() const;
  /// Unknown keys are rejected; missing keys take defaults.
  static CurationConfig from_json(const nlohmann::json& j);
  static CurationConfig load(const std::filesystem::path& path);
  /// Stable FNV-1a hash of the canonical JSON form.
  [[nodiscard]] std::string hash() const;
};

}  // namespace deminf
