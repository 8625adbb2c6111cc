#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "deminf/dataset.hpp"
#include "deminf/matrix.hpp"
#include "deminf/mlp.hpp"
#include "deminf/numerics.hpp"

namespace deminf::vae {

/// Gaussian-posterior autoencoder. The encoder emits [mu | logvar]; the
/// decoder maps a latent back to the standardized input space.
struct VaeModel {
  nn::MlpParams encoder;
  nn::MlpParams decoder;
  std::size_t latent_dim = 0;
  Standardizer stats;  // applied to raw inputs before encoding
};

struct Posterior {
  Matrix mu;
  Matrix logvar;
};

/// Splits the encoder output of already-standardized `x`.
Posterior encode(const VaeModel& model, const Matrix& x);

/// 0.5 * sum_j (mu^2 + exp(logvar) - 1 - logvar), averaged over rows.
double kl_term(const Matrix& mu, const Matrix& logvar);

struct TrainOptions {
  std::size_t latent_dim = 2;
  double beta = 0.05;
  std::vector<std::size_t> hidden{512, 512};
  std::size_t steps = 1000;
  std::size_t batch_size = 256;
  double learning_rate = 1e-4;
};

struct TrainTrace {
  std::vector<double> total;  // recon + beta * kl, per step
  std::vector<double> recon;
  std::vector<double> kl;
};

inline constexpr double kLogvarClamp = 10.0;

/// Fits standardization on `x`, then trains with the reparameterized ELBO
/// (MSE reconstruction + beta * KL). Throws NumericalError on a non-finite loss.
VaeModel train_vae(const Matrix& x, const TrainOptions& opts, Rng rng, TrainTrace* trace = nullptr);

/// Posterior means of raw (unstandardized) inputs.
Matrix embed(const VaeModel& model, const Matrix& raw);

/// Decoder output for the posterior mean, in standardized units.
Matrix reconstruct(const VaeModel& model, const Matrix& raw);

/// MSE between standardized inputs and their mean reconstructions.
double reconstruction_mse(const VaeModel& model, const Matrix& raw);

void save(const VaeModel& model, const std::filesystem::path& path);
VaeModel load(const std::filesystem::path& path);

}  // namespace deminf::vae
