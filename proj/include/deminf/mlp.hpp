#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "deminf/matrix.hpp"
#include "deminf/numerics.hpp"

namespace deminf::nn {

/// Affine layer y = W x + b with W stored out x in.
struct Layer {
  Matrix weight;
  std::vector<double> bias;
};

/// Feed-forward net: ReLU on hidden layers, linear output.
struct MlpParams {
  std::vector<Layer> layers;

  [[nodiscard]] std::size_t input_size() const { return layers.front().weight.cols(); }
  [[nodiscard]] std::size_t output_size() const { return layers.back().weight.rows(); }
  [[nodiscard]] std::vector<std::size_t> shape() const;
  [[nodiscard]] std::size_t num_parameters() const;
  /// Same shapes, all zeros.
  [[nodiscard]] MlpParams zeros_like() const;
  [[nodiscard]] bool all_finite() const;

  friend bool operator==(const MlpParams&, const MlpParams&);
};

/// Squared Euclidean distance between two parameter sets of equal shape.
double squared_distance(const MlpParams& a, const MlpParams& b);

/// sizes = {input, hidden..., output}. Weights uniform in
/// +-sqrt(6 / (fan_in + fan_out)), biases zero.
MlpParams init_mlp(std::span<const std::size_t> sizes, Rng& rng);
double init_bound(std::size_t fan_in, std::size_t fan_out);

/// Inverted dropout after each hidden activation.
struct Dropout {
  double rate;
  Rng* rng;
};

struct ForwardCache {
  std::vector<Matrix> inputs;  // input fed to each layer
  std::vector<Matrix> pre;     // pre-activation of each hidden layer
  std::vector<Matrix> masks;   // per hidden layer: 0 or 1/keep; empty without dropout
};

Matrix forward(const MlpParams& params, const Matrix& x, ForwardCache* cache = nullptr,
               std::optional<Dropout> dropout = std::nullopt);

struct Gradients {
  MlpParams params;
  Matrix input;  // d loss / d x, filled when requested
};

/// Gradients of the scalar loss whose derivative w.r.t. the network
/// output is `grad_out`. ReLU'(0) = 0.
Gradients backward(const MlpParams& params, const ForwardCache& cache, const Matrix& grad_out,
                   bool want_input_grad = false);

/// dst += src, elementwise over matching shapes.
void accumulate(MlpParams& dst, const MlpParams& src);

struct AdamState {
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  MlpParams m;
  MlpParams v;
  std::uint64_t step = 0;

  static AdamState for_params(const MlpParams& params);
};

void adam_step(MlpParams& params, const MlpParams& grads, AdamState& state, double lr);

/// `batch` indices drawn uniformly with replacement from [0, n).
std::vector<std::size_t> sample_batch(std::size_t n, std::size_t batch, Rng& rng);

/// Supervised L2 regression (mean over batch and output dims).
struct RegressionOptions {
  std::vector<std::size_t> hidden{512, 512};
  std::size_t steps = 1000;
  std::size_t batch_size = 256;
  double learning_rate = 1e-4;
  double dropout = 0.0;
};

struct RegressionResult {
  MlpParams params;
  std::vector<double> loss_trace;  // training minibatch loss per step
};

RegressionResult train_regression(const Matrix& x, const Matrix& y, const RegressionOptions& opts,
                                  Rng rng);

/// Trains `n_models` regressors on identical data, member m drawing its
/// initialization, minibatches and dropout masks from rng.substream(m).
std::vector<RegressionResult> train_ensemble(const Matrix& x, const Matrix& y, std::size_t n_models,
                                             const RegressionOptions& opts, const Rng& rng,
                                             std::size_t threads = 1);

/// Mean squared error averaged over rows and columns; also returns
/// d loss / d pred in `grad` when non-null.
double mse(const Matrix& pred, const Matrix& target, Matrix* grad = nullptr);

inline constexpr const char* kCheckpointFormat = "deminf-mlp-v1";

nlohmann::json to_json(const MlpParams& params);
MlpParams mlp_from_json(const nlohmann::json& j);
void save_checkpoint(const MlpParams& params, const std::filesystem::path& path);
MlpParams load_checkpoint(const std::filesystem::path& path);

}  // namespace deminf::nn
