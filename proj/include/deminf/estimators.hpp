#pragma once

#include <atomic>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "deminf/dataset.hpp"
#include "deminf/knn.hpp"
#include "deminf/matrix.hpp"
#include "deminf/mlp.hpp"
#include "deminf/numerics.hpp"

namespace deminf::est {

enum class Method { DemInf, BiKsg, Kl, Mine, InfoNce, Vip, Compat, Uncertainty, PolicyLoss };

std::string_view method_name(Method m);
/// Accepts the CLI spellings: deminf biksg kl mine infonce vip compat uncertainty policyloss.
Method parse_method(std::string_view name);

/// Per-step scores aligned with the dataset's flat step index.
struct StepScores {
  std::vector<double> values;
  nlohmann::json metadata = nlohmann::json::object();
};

// ---------------------------------------------------------------------------
// k-NN scorers over VAE latents

/// -psi(n_s + 1) - psi(n_a + 1) with inclusive marginal counts inside the
/// joint max-metric k-NN radius.
knn::BatchScorer ksg_scorer();

/// -ln n_s - ln n_a with the radius taken under the plain joint L2 metric.
knn::BatchScorer biksg_scorer();

/// d_s ln eps_s + d_a ln eps_a - (d_s + d_a) ln eps_joint, each eps a k-NN
/// distance in its own space (joint under the max metric). Samples with a
/// zero distance get the batch's 1st-percentile score; `degenerate` counts them.
knn::BatchScorer kl_scorer(std::atomic<std::size_t>* degenerate = nullptr);

StepScores ksg_step_scores(const knn::LatentPairSet& pairs, const knn::PassPlan& plan,
                           std::size_t threads = 1);
StepScores biksg_step_scores(const knn::LatentPairSet& pairs, const knn::PassPlan& plan,
                             std::size_t threads = 1);
StepScores kl_step_scores(const knn::LatentPairSet& pairs, const knn::PassPlan& plan,
                          std::size_t threads = 1);

/// KSG mutual information in nats with the constant terms restored:
/// psi(k) + psi(B) - mean[psi(n_s + 1) + psi(n_a + 1)] per batch, averaged
/// over consecutive batches of size `batch` (in input order).
double ksg_absolute_mi(const knn::LatentPairSet& pairs, std::size_t k, std::size_t batch);

// ---------------------------------------------------------------------------
// Neural critics

struct CriticOptions {
  std::size_t embed_dim = 8;
  std::vector<std::size_t> hidden{512, 512};
  std::size_t steps = 1000;  // full schedule; MINE/InfoNCE stop at checkpoint_fraction of it
  std::size_t batch_size = 256;
  double learning_rate = 1e-4;
  double checkpoint_fraction = 0.4;
  double ema_alpha = 0.9;  // MINE
  double divergence_limit = 50.0;  // MINE aborts once |estimate| exceeds this many nats
  double gamma = 0.98;     // VIP
};

/// Donsker-Varadhan critic f(s, a) on concatenated standardized inputs.
struct MineModel {
  nn::MlpParams critic;
  Standardizer state_stats;
  Standardizer action_stats;
  std::size_t trained_steps = 0;
  std::vector<double> estimate_trace;  // minibatch DV estimate per step
};

MineModel train_mine(const Matrix& states, const Matrix& actions, const CriticOptions& opts, Rng rng);
StepScores mine_step_scores(const MineModel& model, const Matrix& states, const Matrix& actions);
/// mean f(joint) - ln mean exp f(marginal), marginal pairs from one shuffle of actions.
double mine_estimate(const MineModel& model, const Matrix& states, const Matrix& actions, Rng rng);

/// Two encoders to a shared width; logits are raw dot products.
struct InfoNceModel {
  nn::MlpParams state_encoder;
  nn::MlpParams action_encoder;
  Standardizer state_stats;
  Standardizer action_stats;
  std::size_t batch_size = 0;
  std::size_t trained_steps = 0;
  std::vector<double> loss_trace;
  std::vector<double> implied_mi_trace;  // ln B - loss, per step
};

/// Symmetric cross-entropy over a B x B logit matrix with matching pairs on
/// the diagonal. Optionally returns d loss / d logits.
double symmetric_infonce_loss(const Matrix& logits, Matrix* grad = nullptr);

InfoNceModel train_infonce(const Matrix& states, const Matrix& actions, const CriticOptions& opts, Rng rng);
StepScores infonce_step_scores(const InfoNceModel& model, const Matrix& states, const Matrix& actions);
/// Loss of the trained encoders on the given (already paired) batch.
double infonce_batch_loss(const InfoNceModel& model, const Matrix& states, const Matrix& actions);

/// Goal-conditioned embedding; value V(s, g) = -|f(s) - f(g)|.
struct VipModel {
  nn::MlpParams encoder;
  Standardizer stats;
  double gamma = 0.98;
  std::vector<double> loss_trace;
};

VipModel train_vip(const DemoDataset& dataset, const CriticOptions& opts, Rng rng);
/// h_t = |f(s_t) - f(g)| - |f(s_{t+1}) - f(g)| with g the final state; the
/// last step of every trajectory scores 0.
StepScores vip_step_scores(const VipModel& model, const DemoDataset& dataset);

// ---------------------------------------------------------------------------
// Behavior-cloning ensemble scorers

struct PolicyEnsemble {
  std::vector<nn::MlpParams> members;
  Standardizer state_stats;
  Standardizer action_stats;
  std::size_t chunk = 1;
  std::vector<std::vector<double>> loss_traces;
};

struct EnsembleOptions {
  std::size_t members = 5;
  double dropout = 0.5;
  nn::RegressionOptions regression;
  std::size_t chunk = 1;
  std::size_t threads = 1;
};

PolicyEnsemble train_bc_ensemble(const DemoDataset& dataset, const EnsembleOptions& opts, const Rng& rng);

/// Member predictions for standardized states; one matrix per member, in
/// standardized action-chunk units.
std::vector<Matrix> ensemble_predictions(const PolicyEnsemble& ensemble, const Matrix& raw_states);

/// Population std across members, averaged over action dimensions.
std::vector<double> ensemble_std(const std::vector<Matrix>& predictions);

StepScores uncertainty_step_scores(const PolicyEnsemble& ensemble, const DemoDataset& dataset);
StepScores compatibility_step_scores(const PolicyEnsemble& ensemble, const DemoDataset& dataset,
                                     double eta, double lambda);
StepScores policy_loss_step_scores(const PolicyEnsemble& ensemble, const DemoDataset& dataset);

/// The piecewise compatibility rule for one step.
double compatibility_score(double ensemble_std, double mean_l2_loss, double eta, double lambda);

}  // namespace deminf::est
