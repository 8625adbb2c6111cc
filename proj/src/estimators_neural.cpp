#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "deminf/error.hpp"
#include "deminf/estimators.hpp"
#include "deminf/simd/kernels.hpp"

namespace deminf::est {
namespace {

std::vector<std::size_t> sizes_for(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
  std::vector<std::size_t> s{in};
  s.insert(s.end(), hidden.begin(), hidden.end());
  s.push_back(out);
  return s;
}

std::size_t checkpoint_steps(const CriticOptions& opts) {
  const auto n = static_cast<std::size_t>(std::llround(opts.checkpoint_fraction * static_cast<double>(opts.steps)));
  return std::max<std::size_t>(1, n);
}

// ln(mean(exp(v))) computed around the maximum.
double log_mean_exp(std::span<const double> v) {
  double m = v[0];
  for (double x : v) m = std::max(m, x);
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s / static_cast<double>(v.size()));
}

Matrix vstack(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("vstack: column mismatch");
  Matrix out(a.rows() + b.rows(), a.cols());
  std::copy(a.values().begin(), a.values().end(), out.values().begin());
  std::copy(b.values().begin(), b.values().end(),
            out.values().begin() + static_cast<std::ptrdiff_t>(a.size()));
  return out;
}

void check_pair_rows(const Matrix& s, const Matrix& a) {
  if (s.rows() != a.rows() || s.rows() < 2) {
    throw std::invalid_argument("critic: states and actions need equal row counts >= 2");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// MINE

MineModel train_mine(const Matrix& states, const Matrix& actions, const CriticOptions& opts, Rng rng) {
  check_pair_rows(states, actions);
  MineModel model;
  model.state_stats = Standardizer::fit(states);
  model.action_stats = Standardizer::fit(actions);
  const Matrix S = model.state_stats.apply(states);
  const Matrix A = model.action_stats.apply(actions);

  Rng init_rng = rng.substream(0);
  Rng batch_rng = rng.substream(1);
  Rng perm_rng = rng.substream(2);
  model.critic = nn::init_mlp(sizes_for(S.cols() + A.cols(), opts.hidden, 1), init_rng);
  auto adam = nn::AdamState::for_params(model.critic);

  const std::size_t B = std::min(opts.batch_size, S.rows());
  const double inv_b = 1.0 / static_cast<double>(B);
  const std::size_t steps = checkpoint_steps(opts);
  double ema = 0.0;
  nn::ForwardCache cache;
  std::vector<double> t_joint(B), t_marg(B);
  for (std::size_t step = 0; step < steps; ++step) {
    const auto idx = nn::sample_batch(S.rows(), B, batch_rng);
    const auto perm = shuffle(B, perm_rng);
    const Matrix sb = gather_rows(S, idx);
    const Matrix ab = gather_rows(A, idx);
    const Matrix am = gather_rows(ab, perm);
    const Matrix input = vstack(hconcat(sb, ab), hconcat(sb, am));
    const Matrix out = nn::forward(model.critic, input, &cache);
    double mean_joint = 0.0;
    double mean_exp = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
      t_joint[b] = out(b, 0);
      t_marg[b] = out(B + b, 0);
      mean_joint += t_joint[b];
      mean_exp += std::exp(t_marg[b]);
    }
    mean_joint *= inv_b;
    mean_exp *= inv_b;
    const double estimate = mean_joint - log_mean_exp(t_marg);
    if (!std::isfinite(estimate) || std::abs(estimate) > opts.divergence_limit || !std::isfinite(mean_exp)) {
      std::ostringstream msg;
      msg << "MINE diverged at step " << step << ": estimate=" << estimate << " E[exp f]=" << mean_exp;
      throw NumericalError(msg.str());
    }
    model.estimate_trace.push_back(estimate);
    ema = step == 0 ? mean_exp : opts.ema_alpha * ema + (1.0 - opts.ema_alpha) * mean_exp;

    // Ascend the bound: minimize -(E_joint f - ln E_marg e^f) with the
    // marginal denominator replaced by its moving average.
    Matrix grad(2 * B, 1);
    for (std::size_t b = 0; b < B; ++b) {
      grad(b, 0) = -inv_b;
      grad(B + b, 0) = std::exp(t_marg[b]) * inv_b / ema;
    }
    const nn::Gradients g = nn::backward(model.critic, cache, grad);
    nn::adam_step(model.critic, g.params, adam, opts.learning_rate);
  }
  model.trained_steps = steps;
  return model;
}

StepScores mine_step_scores(const MineModel& model, const Matrix& states, const Matrix& actions) {
  check_pair_rows(states, actions);
  const Matrix input = hconcat(model.state_stats.apply(states), model.action_stats.apply(actions));
  const Matrix out = nn::forward(model.critic, input);
  StepScores s;
  s.values.resize(out.rows());
  for (std::size_t i = 0; i < out.rows(); ++i) s.values[i] = out(i, 0);
  s.metadata = {{"method", "mine"}, {"trained_steps", model.trained_steps}};
  return s;
}

double mine_estimate(const MineModel& model, const Matrix& states, const Matrix& actions, Rng rng) {
  check_pair_rows(states, actions);
  const Matrix S = model.state_stats.apply(states);
  const Matrix A = model.action_stats.apply(actions);
  const auto perm = shuffle(A.rows(), rng);
  const Matrix joint = nn::forward(model.critic, hconcat(S, A));
  const Matrix marg = nn::forward(model.critic, hconcat(S, gather_rows(A, perm)));
  return mean(joint.values()) - log_mean_exp(marg.values());
}

// ---------------------------------------------------------------------------
// InfoNCE

double symmetric_infonce_loss(const Matrix& logits, Matrix* grad) {
  const std::size_t B = logits.rows();
  if (B == 0 || logits.cols() != B) throw std::invalid_argument("infonce: logits must be square");
  const double inv_b = 1.0 / static_cast<double>(B);
  if (grad != nullptr) *grad = Matrix(B, B);
  double row_loss = 0.0;
  double col_loss = 0.0;
  std::vector<double> p(B);
  // Each term lse - diag is >= 0 exactly: lse = max + ln(sum) with sum >= 1.
  for (std::size_t i = 0; i < B; ++i) {
    double m = logits(i, 0);
    for (std::size_t j = 1; j < B; ++j) m = std::max(m, logits(i, j));
    double s = 0.0;
    for (std::size_t j = 0; j < B; ++j) s += (p[j] = std::exp(logits(i, j) - m));
    row_loss += (m + std::log(s)) - logits(i, i);
    if (grad != nullptr) {
      for (std::size_t j = 0; j < B; ++j) {
        (*grad)(i, j) += 0.5 * inv_b * (p[j] / s - (i == j ? 1.0 : 0.0));
      }
    }
  }
  for (std::size_t j = 0; j < B; ++j) {
    double m = logits(0, j);
    for (std::size_t i = 1; i < B; ++i) m = std::max(m, logits(i, j));
    double s = 0.0;
    for (std::size_t i = 0; i < B; ++i) s += (p[i] = std::exp(logits(i, j) - m));
    col_loss += (m + std::log(s)) - logits(j, j);
    if (grad != nullptr) {
      for (std::size_t i = 0; i < B; ++i) {
        (*grad)(i, j) += 0.5 * inv_b * (p[i] / s - (i == j ? 1.0 : 0.0));
      }
    }
  }
  return 0.5 * (row_loss + col_loss) * inv_b;
}

namespace {

Matrix dot_logits(const Matrix& es, const Matrix& ea) {
  const auto& k = simd::active();
  Matrix logits(es.rows(), ea.rows());
  for (std::size_t i = 0; i < es.rows(); ++i) {
    for (std::size_t j = 0; j < ea.rows(); ++j) {
      logits(i, j) = k.dot(es.row(i).data(), ea.row(j).data(), es.cols());
    }
  }
  return logits;
}

}  // namespace

InfoNceModel train_infonce(const Matrix& states, const Matrix& actions, const CriticOptions& opts, Rng rng) {
  check_pair_rows(states, actions);
  InfoNceModel model;
  model.state_stats = Standardizer::fit(states);
  model.action_stats = Standardizer::fit(actions);
  const Matrix S = model.state_stats.apply(states);
  const Matrix A = model.action_stats.apply(actions);
  Rng init_rng = rng.substream(0);
  Rng batch_rng = rng.substream(1);
  model.state_encoder = nn::init_mlp(sizes_for(S.cols(), opts.hidden, opts.embed_dim), init_rng);
  model.action_encoder = nn::init_mlp(sizes_for(A.cols(), opts.hidden, opts.embed_dim), init_rng);
  auto adam_s = nn::AdamState::for_params(model.state_encoder);
  auto adam_a = nn::AdamState::for_params(model.action_encoder);

  const std::size_t B = std::min(opts.batch_size, S.rows());
  model.batch_size = B;
  const double log_b = std::log(static_cast<double>(B));
  const std::size_t steps = checkpoint_steps(opts);
  const auto& k = simd::active();
  nn::ForwardCache cache_s, cache_a;
  for (std::size_t step = 0; step < steps; ++step) {
    const auto idx = nn::sample_batch(S.rows(), B, batch_rng);
    const Matrix es = nn::forward(model.state_encoder, gather_rows(S, idx), &cache_s);
    const Matrix ea = nn::forward(model.action_encoder, gather_rows(A, idx), &cache_a);
    Matrix g_logits;
    const double loss = symmetric_infonce_loss(dot_logits(es, ea), &g_logits);
    if (!std::isfinite(loss)) {
      throw NumericalError("InfoNCE diverged at step " + std::to_string(step));
    }
    const double implied = log_b - loss;
    if (implied > log_b) throw std::logic_error("InfoNCE: implied MI exceeded ln(batch size)");
    model.loss_trace.push_back(loss);
    model.implied_mi_trace.push_back(implied);

    Matrix g_es(B, es.cols()), g_ea(B, ea.cols());
    for (std::size_t i = 0; i < B; ++i) {
      for (std::size_t j = 0; j < B; ++j) {
        const double g = g_logits(i, j);
        k.axpy(es.cols(), g, ea.row(j).data(), g_es.row(i).data());
        k.axpy(ea.cols(), g, es.row(i).data(), g_ea.row(j).data());
      }
    }
    const nn::Gradients gs = nn::backward(model.state_encoder, cache_s, g_es);
    const nn::Gradients ga = nn::backward(model.action_encoder, cache_a, g_ea);
    nn::adam_step(model.state_encoder, gs.params, adam_s, opts.learning_rate);
    nn::adam_step(model.action_encoder, ga.params, adam_a, opts.learning_rate);
  }
  model.trained_steps = steps;
  return model;
}

StepScores infonce_step_scores(const InfoNceModel& model, const Matrix& states, const Matrix& actions) {
  check_pair_rows(states, actions);
  const Matrix es = nn::forward(model.state_encoder, model.state_stats.apply(states));
  const Matrix ea = nn::forward(model.action_encoder, model.action_stats.apply(actions));
  const auto& k = simd::active();
  StepScores s;
  s.values.resize(es.rows());
  for (std::size_t i = 0; i < es.rows(); ++i) s.values[i] = k.dot(es.row(i).data(), ea.row(i).data(), es.cols());
  s.metadata = {{"method", "infonce"}, {"temperature", 1.0}, {"normalized_embeddings", false},
                {"trained_steps", model.trained_steps}};
  return s;
}

double infonce_batch_loss(const InfoNceModel& model, const Matrix& states, const Matrix& actions) {
  check_pair_rows(states, actions);
  const Matrix es = nn::forward(model.state_encoder, model.state_stats.apply(states));
  const Matrix ea = nn::forward(model.action_encoder, model.action_stats.apply(actions));
  return symmetric_infonce_loss(dot_logits(es, ea));
}

// ---------------------------------------------------------------------------
// VIP

namespace {

double norm_diff(std::span<const double> a, std::span<const double> b, std::vector<double>* diff = nullptr) {
  double s = 0.0;
  if (diff != nullptr) diff->resize(a.size());
  for (std::size_t d = 0; d < a.size(); ++d) {
    const double v = a[d] - b[d];
    if (diff != nullptr) (*diff)[d] = v;
    s += v * v;
  }
  return std::sqrt(s);
}

// g += scale * u / |u| (no-op at u = 0).
void add_unit(std::span<double> g, const std::vector<double>& u, double norm, double scale) {
  if (norm <= 0.0) return;
  for (std::size_t d = 0; d < g.size(); ++d) g[d] += scale * u[d] / norm;
}

}  // namespace

VipModel train_vip(const DemoDataset& dataset, const CriticOptions& opts, Rng rng) {
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < dataset.num_trajectories(); ++i) {
    if (dataset.trajectory(i).length() >= 2) usable.push_back(i);
  }
  if (usable.empty()) throw std::invalid_argument("train_vip: no trajectory has two or more steps");
  VipModel model;
  model.gamma = opts.gamma;
  const auto [raw_states, unused] = flatten(dataset, 1);
  model.stats = Standardizer::fit(raw_states);
  const Matrix S = model.stats.apply(raw_states);

  Rng init_rng = rng.substream(0);
  Rng batch_rng = rng.substream(1);
  model.encoder = nn::init_mlp(sizes_for(S.cols(), opts.hidden, opts.embed_dim), init_rng);
  auto adam = nn::AdamState::for_params(model.encoder);
  const std::size_t B = opts.batch_size;
  const double inv_b = 1.0 / static_cast<double>(B);
  const std::size_t E = opts.embed_dim;

  nn::ForwardCache cache;
  std::vector<std::size_t> rows(4 * B);
  std::vector<double> x(B), u_first, u_t, u_next;
  std::vector<bool> at_goal(B);
  for (std::size_t step = 0; step < opts.steps; ++step) {
    // Row layout: [s_1 | g | s_t | s_{t+1}], B each.
    for (std::size_t b = 0; b < B; ++b) {
      const std::size_t traj = usable[batch_rng.uniform_index(usable.size())];
      const std::size_t T = dataset.trajectory(traj).length();
      const std::size_t t = static_cast<std::size_t>(batch_rng.uniform_index(T - 1));
      const std::size_t g = t + 1 + static_cast<std::size_t>(batch_rng.uniform_index(T - 1 - t));
      rows[b] = dataset.row_of(traj, 0);
      rows[B + b] = dataset.row_of(traj, g);
      rows[2 * B + b] = dataset.row_of(traj, t);
      rows[3 * B + b] = dataset.row_of(traj, t + 1);
    }
    const Matrix input = gather_rows(S, rows);
    const Matrix e = nn::forward(model.encoder, input, &cache);
    Matrix grad(4 * B, E);

    double first_term = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
      const double n1 = norm_diff(e.row(b), e.row(B + b), &u_first);
      first_term += n1;
      add_unit(grad.row(b), u_first, n1, inv_b);
      add_unit(grad.row(B + b), u_first, n1, -inv_b);
      const double nt = norm_diff(e.row(2 * B + b), e.row(B + b));
      const double nn1 = norm_diff(e.row(3 * B + b), e.row(B + b));
      const auto st = input.row(2 * B + b);
      const auto gs = input.row(B + b);
      at_goal[b] = std::equal(st.begin(), st.end(), gs.begin());
      x[b] = nt - (at_goal[b] ? 1.0 : 0.0) - model.gamma * nn1;
    }
    first_term *= inv_b;
    const double lme = log_mean_exp(x);
    const double loss = first_term + lme;
    if (!std::isfinite(loss)) throw NumericalError("VIP diverged at step " + std::to_string(step));
    model.loss_trace.push_back(loss);

    // d lme / d x_b = softmax(x)_b
    double xmax = x[0];
    for (double v : x) xmax = std::max(xmax, v);
    double z = 0.0;
    for (double v : x) z += std::exp(v - xmax);
    for (std::size_t b = 0; b < B; ++b) {
      const double w = std::exp(x[b] - xmax) / z;
      const double nt = norm_diff(e.row(2 * B + b), e.row(B + b), &u_t);
      const double nn1 = norm_diff(e.row(3 * B + b), e.row(B + b), &u_next);
      add_unit(grad.row(2 * B + b), u_t, nt, w);
      add_unit(grad.row(B + b), u_t, nt, -w);
      add_unit(grad.row(3 * B + b), u_next, nn1, -w * model.gamma);
      add_unit(grad.row(B + b), u_next, nn1, w * model.gamma);
    }
    const nn::Gradients g = nn::backward(model.encoder, cache, grad);
    nn::adam_step(model.encoder, g.params, adam, opts.learning_rate);
  }
  return model;
}

StepScores vip_step_scores(const VipModel& model, const DemoDataset& dataset) {
  const auto [raw_states, unused] = flatten(dataset, 1);
  const Matrix e = nn::forward(model.encoder, model.stats.apply(raw_states));
  StepScores s;
  s.values.assign(dataset.num_steps(), 0.0);
  for (std::size_t i = 0; i < dataset.num_trajectories(); ++i) {
    const std::size_t T = dataset.trajectory(i).length();
    const std::size_t goal = dataset.row_of(i, T - 1);
    for (std::size_t t = 0; t + 1 < T; ++t) {
      const std::size_t r = dataset.row_of(i, t);
      s.values[r] = norm_diff(e.row(r), e.row(goal)) - norm_diff(e.row(r + 1), e.row(goal));
    }
  }
  s.metadata = {{"method", "vip"},
                {"gamma", model.gamma},
                {"goal_sampling", "uniform over strictly-future steps of the same trajectory"},
                {"scoring_goal", "final state"}};
  return s;
}

}  // namespace deminf::est
