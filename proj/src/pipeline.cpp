#include "deminf/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "deminf/error.hpp"
#include "deminf/simd/kernels.hpp"

namespace deminf {

vae::TrainOptions vae_options(const CurationConfig& config, std::size_t latent_dim) {
  vae::TrainOptions o;
  o.latent_dim = latent_dim;
  o.beta = config.beta;
  o.hidden = {config.hidden_width, config.hidden_width};
  o.steps = config.train_steps;
  o.batch_size = config.train_batch_size;
  o.learning_rate = config.learning_rate;
  return o;
}

knn::PassPlan pass_plan(const CurationConfig& config) {
  return {config.k_list, config.batch_size, config.passes, config.seed};
}

est::CriticOptions critic_options(const CurationConfig& config) {
  est::CriticOptions o;
  o.hidden = {config.hidden_width, config.hidden_width};
  o.steps = config.train_steps;
  o.batch_size = config.train_batch_size;
  o.learning_rate = config.learning_rate;
  return o;
}

est::EnsembleOptions ensemble_options(const CurationConfig& config, std::size_t threads) {
  est::EnsembleOptions o;
  o.regression.hidden = {config.hidden_width, config.hidden_width};
  o.regression.steps = config.train_steps;
  o.regression.batch_size = config.train_batch_size;
  o.regression.learning_rate = config.learning_rate;
  o.chunk = config.chunk;
  o.threads = threads;
  return o;
}

knn::LatentPairSet embed_dataset(const DemoDataset& dataset, const CurationConfig& config,
                                 nlohmann::json* metadata) {
  const auto [S, A] = flatten(dataset, config.chunk);
  const std::size_t zs = std::min(config.z_s_dim, S.cols());
  const std::size_t za = std::min(config.z_a_dim, A.cols());
  const auto state_vae = vae::train_vae(S, vae_options(config, zs), Rng(config.seed, streams::kStateVae));
  const auto action_vae = vae::train_vae(A, vae_options(config, za), Rng(config.seed, streams::kActionVae));
  if (metadata != nullptr) {
    (*metadata)["z_s_dim_effective"] = zs;
    (*metadata)["z_a_dim_effective"] = za;
    (*metadata)["state_vae_recon_mse"] = vae::reconstruction_mse(state_vae, S);
    (*metadata)["action_vae_recon_mse"] = vae::reconstruction_mse(action_vae, A);
  }
  return {vae::embed(state_vae, S), vae::embed(action_vae, A)};
}

ScoreRun score_dataset(est::Method method, const DemoDataset& dataset, const CurationConfig& config,
                       std::size_t threads) {
  config.validate();
  if (dataset.num_steps() == 0) throw std::invalid_argument("score: dataset has no steps");
  ScoreRun run;
  nlohmann::json extra = nlohmann::json::object();
  using est::Method;
  switch (method) {
    case Method::DemInf:
    case Method::BiKsg:
    case Method::Kl: {
      const auto pairs = embed_dataset(dataset, config, &extra);
      const auto plan = pass_plan(config);
      run.steps = method == Method::DemInf  ? est::ksg_step_scores(pairs, plan, threads)
                  : method == Method::BiKsg ? est::biksg_step_scores(pairs, plan, threads)
                                            : est::kl_step_scores(pairs, plan, threads);
      break;
    }
    case Method::Mine: {
      const auto [S, A] = flatten(dataset, config.chunk);
      const auto model = est::train_mine(S, A, critic_options(config), Rng(config.seed, streams::kMine));
      run.steps = est::mine_step_scores(model, S, A);
      break;
    }
    case Method::InfoNce: {
      const auto [S, A] = flatten(dataset, config.chunk);
      const auto model = est::train_infonce(S, A, critic_options(config), Rng(config.seed, streams::kInfoNce));
      run.steps = est::infonce_step_scores(model, S, A);
      break;
    }
    case Method::Vip: {
      const auto model = est::train_vip(dataset, critic_options(config), Rng(config.seed, streams::kVip));
      run.steps = est::vip_step_scores(model, dataset);
      break;
    }
    case Method::Compat:
    case Method::Uncertainty:
    case Method::PolicyLoss: {
      const auto ens = est::train_bc_ensemble(dataset, ensemble_options(config, threads),
                                              Rng(config.seed, streams::kEnsemble));
      run.steps = method == Method::Compat        ? est::compatibility_step_scores(ens, dataset, config.eta, config.lambda)
                  : method == Method::Uncertainty ? est::uncertainty_step_scores(ens, dataset)
                                                  : est::policy_loss_step_scores(ens, dataset);
      break;
    }
  }
  for (double v : run.steps.values) {
    if (!std::isfinite(v)) throw NumericalError("non-finite step score from " + std::string(est::method_name(method)));
  }
  run.steps.metadata.update(extra);
  run.steps.metadata["method"] = est::method_name(method);
  run.steps.metadata["seed"] = config.seed;
  run.steps.metadata["k_list"] = config.k_list;
  run.steps.metadata["config_hash"] = config.hash();
  run.clipped = curation::clip_scores(run.steps, config.clip_lo, config.clip_hi, &run.bounds);
  run.trajectories = curation::trajectory_scores(run.clipped, dataset);
  return run;
}

nlohmann::json step_sidecar(const ScoreRun& run, est::Method method, const CurationConfig& config) {
  nlohmann::json j = run.steps.metadata;
  j["method"] = est::method_name(method);
  j["clip_lo_percentile"] = config.clip_lo;
  j["clip_hi_percentile"] = config.clip_hi;
  j["clip_lo_value"] = run.bounds.lo;
  j["clip_hi_value"] = run.bounds.hi;
  const double m = mean(run.clipped.values);
  double var = 0.0;
  for (double v : run.clipped.values) var += (v - m) * (v - m);
  j["clipped_mean"] = m;
  j["clipped_std"] = std::sqrt(var / static_cast<double>(run.clipped.values.size()));
  j["score_column"] = "raw (unclipped); clip to [clip_lo_value, clip_hi_value] then z-score with clipped_mean/clipped_std";
  return j;
}

nlohmann::json RunManifest::to_json() const {
  return {{"command", command},
          {"version", kVersion},
          {"config", config},
          {"seed", seed},
          {"inputs", inputs},
          {"outputs", outputs},
          {"threads", threads},
          {"kernels", simd::active().name},
          {"wall_seconds", wall_seconds}};
}

void RunManifest::write(const std::filesystem::path& path) const {
  curation::write_file_atomic(path, to_json().dump(2) + "\n");
}

}  // namespace deminf
