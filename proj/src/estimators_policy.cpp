#include <cmath>
#include <stdexcept>
#include <string>

#include "deminf/estimators.hpp"

namespace deminf::est {

std::string_view method_name(Method m) {
  switch (m) {
    case Method::DemInf: return "deminf";
    case Method::BiKsg: return "biksg";
    case Method::Kl: return "kl";
    case Method::Mine: return "mine";
    case Method::InfoNce: return "infonce";
    case Method::Vip: return "vip";
    case Method::Compat: return "compat";
    case Method::Uncertainty: return "uncertainty";
    case Method::PolicyLoss: return "policyloss";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  for (Method m : {Method::DemInf, Method::BiKsg, Method::Kl, Method::Mine, Method::InfoNce, Method::Vip,
                   Method::Compat, Method::Uncertainty, Method::PolicyLoss}) {
    if (method_name(m) == name) return m;
  }
  throw std::invalid_argument("unknown method '" + std::string(name) + "'");
}

PolicyEnsemble train_bc_ensemble(const DemoDataset& dataset, const EnsembleOptions& opts, const Rng& rng) {
  const auto [states, actions] = flatten(dataset, opts.chunk);
  PolicyEnsemble ens;
  ens.chunk = opts.chunk;
  ens.state_stats = Standardizer::fit(states);
  ens.action_stats = Standardizer::fit(actions);
  nn::RegressionOptions reg = opts.regression;
  reg.dropout = opts.dropout;
  auto results = nn::train_ensemble(ens.state_stats.apply(states), ens.action_stats.apply(actions),
                                    opts.members, reg, rng, opts.threads);
  for (auto& r : results) {
    ens.members.push_back(std::move(r.params));
    ens.loss_traces.push_back(std::move(r.loss_trace));
  }
  return ens;
}

std::vector<Matrix> ensemble_predictions(const PolicyEnsemble& ensemble, const Matrix& raw_states) {
  const Matrix s = ensemble.state_stats.apply(raw_states);
  std::vector<Matrix> preds;
  preds.reserve(ensemble.members.size());
  for (const auto& m : ensemble.members) preds.push_back(nn::forward(m, s));
  return preds;
}

std::vector<double> ensemble_std(const std::vector<Matrix>& predictions) {
  if (predictions.empty()) throw std::invalid_argument("ensemble_std: no members");
  const std::size_t n = predictions.front().rows();
  const std::size_t d = predictions.front().cols();
  const double M = static_cast<double>(predictions.size());
  std::vector<double> out(n, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      // Shift by the first member so identical members give exactly zero.
      const double ref = predictions.front()(r, c);
      double shift = 0.0;
      for (const Matrix& p : predictions) shift += p(r, c) - ref;
      const double mu = ref + shift / M;
      double var = 0.0;
      for (const Matrix& p : predictions) var += (p(r, c) - mu) * (p(r, c) - mu);
      acc += std::sqrt(var / M);
    }
    out[r] = acc / static_cast<double>(d);
  }
  return out;
}

double compatibility_score(double ensemble_std, double mean_l2_loss, double eta, double lambda) {
  if (ensemble_std < eta) return 1.0 - std::min(mean_l2_loss / lambda, 1.0);
  return 1.0;
}

namespace {

struct EnsembleEval {
  std::vector<Matrix> preds;
  Matrix targets;
};

EnsembleEval evaluate(const PolicyEnsemble& ens, const DemoDataset& dataset) {
  const auto [states, actions] = flatten(dataset, ens.chunk);
  return {ensemble_predictions(ens, states), ens.action_stats.apply(actions)};
}

nlohmann::json ensemble_metadata(const char* method, const PolicyEnsemble& ens) {
  return {{"method", method}, {"ensemble_size", ens.members.size()}, {"std_convention", "population"},
          {"chunk", ens.chunk}};
}

}  // namespace

StepScores uncertainty_step_scores(const PolicyEnsemble& ensemble, const DemoDataset& dataset) {
  const auto ev = evaluate(ensemble, dataset);
  return {ensemble_std(ev.preds), ensemble_metadata("uncertainty", ensemble)};
}

StepScores compatibility_step_scores(const PolicyEnsemble& ensemble, const DemoDataset& dataset, double eta,
                                     double lambda) {
  const auto ev = evaluate(ensemble, dataset);
  const auto sd = ensemble_std(ev.preds);
  const std::size_t d = ev.targets.cols();
  StepScores s;
  s.values.resize(ev.targets.rows());
  for (std::size_t r = 0; r < ev.targets.rows(); ++r) {
    double loss = 0.0;
    for (const Matrix& p : ev.preds) {
      for (std::size_t c = 0; c < d; ++c) {
        const double e = p(r, c) - ev.targets(r, c);
        loss += e * e;
      }
    }
    loss /= static_cast<double>(ev.preds.size() * d);
    s.values[r] = compatibility_score(sd[r], loss, eta, lambda);
  }
  s.metadata = ensemble_metadata("compat", ensemble);
  s.metadata["eta"] = eta;
  s.metadata["lambda"] = lambda;
  return s;
}

StepScores policy_loss_step_scores(const PolicyEnsemble& ensemble, const DemoDataset& dataset) {
  const auto ev = evaluate(ensemble, dataset);
  const std::size_t d = ev.targets.cols();
  const double M = static_cast<double>(ev.preds.size());
  StepScores s;
  s.values.resize(ev.targets.rows());
  for (std::size_t r = 0; r < ev.targets.rows(); ++r) {
    double loss = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      double mu = 0.0;
      for (const Matrix& p : ev.preds) mu += p(r, c);
      const double e = mu / M - ev.targets(r, c);
      loss += e * e;
    }
    s.values[r] = -loss / static_cast<double>(d);
  }
  s.metadata = ensemble_metadata("policyloss", ensemble);
  return s;
}

}  // namespace deminf::est
