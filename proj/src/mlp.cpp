#include "deminf/mlp.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "deminf/error.hpp"
#include "deminf/parallel.hpp"
#include "deminf/simd/kernels.hpp"

namespace deminf::nn {

std::vector<std::size_t> MlpParams::shape() const {
  std::vector<std::size_t> s;
  if (layers.empty()) return s;
  s.push_back(input_size());
  for (const Layer& l : layers) s.push_back(l.weight.rows());
  return s;
}

std::size_t MlpParams::num_parameters() const {
  std::size_t n = 0;
  for (const Layer& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

MlpParams MlpParams::zeros_like() const {
  MlpParams z;
  z.layers.reserve(layers.size());
  for (const Layer& l : layers) {
    z.layers.push_back({Matrix(l.weight.rows(), l.weight.cols()), std::vector<double>(l.bias.size())});
  }
  return z;
}

bool MlpParams::all_finite() const {
  for (const Layer& l : layers) {
    for (double w : l.weight.values()) {
      if (!std::isfinite(w)) return false;
    }
    for (double b : l.bias) {
      if (!std::isfinite(b)) return false;
    }
  }
  return true;
}

bool operator==(const MlpParams& a, const MlpParams& b) {
  if (a.layers.size() != b.layers.size()) return false;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    if (!(a.layers[i].weight == b.layers[i].weight) || a.layers[i].bias != b.layers[i].bias) {
      return false;
    }
  }
  return true;
}

double squared_distance(const MlpParams& a, const MlpParams& b) {
  if (a.shape() != b.shape()) throw std::invalid_argument("squared_distance: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    const auto& wa = a.layers[i].weight.values();
    const auto& wb = b.layers[i].weight.values();
    for (std::size_t k = 0; k < wa.size(); ++k) s += (wa[k] - wb[k]) * (wa[k] - wb[k]);
    for (std::size_t k = 0; k < a.layers[i].bias.size(); ++k) {
      const double d = a.layers[i].bias[k] - b.layers[i].bias[k];
      s += d * d;
    }
  }
  return s;
}

double init_bound(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

MlpParams init_mlp(std::span<const std::size_t> sizes, Rng& rng) {
  if (sizes.size() < 2) throw std::invalid_argument("init_mlp: need at least input and output sizes");
  MlpParams p;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const std::size_t in = sizes[l];
    const std::size_t out = sizes[l + 1];
    if (in == 0 || out == 0) throw std::invalid_argument("init_mlp: zero-width layer");
    const double bound = init_bound(in, out);
    Layer layer{Matrix(out, in), std::vector<double>(out, 0.0)};
    for (double& w : layer.weight.values()) w = rng.uniform(-bound, bound);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

Matrix forward(const MlpParams& params, const Matrix& x, ForwardCache* cache,
               std::optional<Dropout> dropout) {
  if (params.layers.empty()) throw std::invalid_argument("forward: empty network");
  if (x.cols() != params.input_size()) {
    throw std::invalid_argument("forward: input has " + std::to_string(x.cols()) +
                                " columns, network expects " + std::to_string(params.input_size()));
  }
  const auto& k = simd::active();
  if (cache != nullptr) {
    cache->inputs.clear();
    cache->pre.clear();
    cache->masks.clear();
  }
  Matrix h = x;
  const std::size_t L = params.layers.size();
  for (std::size_t l = 0; l < L; ++l) {
    const Layer& layer = params.layers[l];
    const std::size_t in = layer.weight.cols();
    const std::size_t out = layer.weight.rows();
    Matrix z(h.rows(), out);
    for (std::size_t r = 0; r < h.rows(); ++r) {
      const double* hr = h.row(r).data();
      double* zr = z.row(r).data();
      for (std::size_t j = 0; j < out; ++j) {
        zr[j] = layer.bias[j] + k.dot(hr, layer.weight.row(j).data(), in);
      }
    }
    if (cache != nullptr) cache->inputs.push_back(std::move(h));
    if (l + 1 == L) return z;

    Matrix a(z.rows(), z.cols());
    for (std::size_t i = 0; i < z.size(); ++i) a.values()[i] = z.values()[i] > 0.0 ? z.values()[i] : 0.0;
    if (dropout && dropout->rate > 0.0) {
      const double keep = 1.0 - dropout->rate;
      Matrix mask(z.rows(), z.cols());
      for (std::size_t i = 0; i < mask.size(); ++i) {
        mask.values()[i] = dropout->rng->uniform() < keep ? 1.0 / keep : 0.0;
        a.values()[i] *= mask.values()[i];
      }
      if (cache != nullptr) cache->masks.push_back(std::move(mask));
    }
    if (cache != nullptr) cache->pre.push_back(std::move(z));
    h = std::move(a);
  }
  return h;
}

Gradients backward(const MlpParams& params, const ForwardCache& cache, const Matrix& grad_out,
                   bool want_input_grad) {
  const std::size_t L = params.layers.size();
  if (cache.inputs.size() != L || cache.pre.size() + 1 != L) {
    throw std::invalid_argument("backward: cache does not match network");
  }
  const auto& k = simd::active();
  Gradients g{params.zeros_like(), Matrix()};
  Matrix delta = grad_out;
  for (std::size_t l = L; l-- > 0;) {
    const Layer& layer = params.layers[l];
    const Matrix& input = cache.inputs[l];
    const std::size_t in = layer.weight.cols();
    const std::size_t out = layer.weight.rows();
    if (delta.rows() != input.rows() || delta.cols() != out) {
      throw std::invalid_argument("backward: gradient shape mismatch");
    }
    Layer& gl = g.params.layers[l];
    for (std::size_t r = 0; r < delta.rows(); ++r) {
      const double* xr = input.row(r).data();
      for (std::size_t j = 0; j < out; ++j) {
        const double d = delta(r, j);
        if (d == 0.0) continue;
        k.axpy(in, d, xr, gl.weight.row(j).data());
        gl.bias[j] += d;
      }
    }
    if (l == 0 && !want_input_grad) break;
    Matrix prev(delta.rows(), in);
    for (std::size_t r = 0; r < delta.rows(); ++r) {
      double* pr = prev.row(r).data();
      for (std::size_t j = 0; j < out; ++j) {
        const double d = delta(r, j);
        if (d == 0.0) continue;
        k.axpy(in, d, layer.weight.row(j).data(), pr);
      }
    }
    if (l == 0) {
      g.input = std::move(prev);
      break;
    }
    const Matrix& pre = cache.pre[l - 1];
    const bool has_mask = !cache.masks.empty();
    for (std::size_t i = 0; i < prev.size(); ++i) {
      double gi = pre.values()[i] > 0.0 ? prev.values()[i] : 0.0;
      if (has_mask) gi *= cache.masks[l - 1].values()[i];
      prev.values()[i] = gi;
    }
    delta = std::move(prev);
  }
  return g;
}

void accumulate(MlpParams& dst, const MlpParams& src) {
  const auto& k = simd::active();
  for (std::size_t l = 0; l < dst.layers.size(); ++l) {
    auto& dw = dst.layers[l].weight.values();
    k.axpy(dw.size(), 1.0, src.layers[l].weight.data(), dw.data());
    k.axpy(dst.layers[l].bias.size(), 1.0, src.layers[l].bias.data(), dst.layers[l].bias.data());
  }
}

AdamState AdamState::for_params(const MlpParams& params) {
  return AdamState{params.zeros_like(), params.zeros_like(), 0};
}

void adam_step(MlpParams& params, const MlpParams& grads, AdamState& state, double lr) {
  if (params.shape() != grads.shape() || params.shape() != state.m.shape()) {
    throw std::invalid_argument("adam_step: shape mismatch");
  }
  const auto& k = simd::active();
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(AdamState::kBeta1, t);
  const double bc2 = 1.0 - std::pow(AdamState::kBeta2, t);
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    Layer& p = params.layers[l];
    k.adam(p.weight.size(), p.weight.data(), grads.layers[l].weight.data(),
           state.m.layers[l].weight.data(), state.v.layers[l].weight.data(), lr,
           AdamState::kBeta1, AdamState::kBeta2, AdamState::kEps, bc1, bc2);
    k.adam(p.bias.size(), p.bias.data(), grads.layers[l].bias.data(), state.m.layers[l].bias.data(),
           state.v.layers[l].bias.data(), lr, AdamState::kBeta1, AdamState::kBeta2,
           AdamState::kEps, bc1, bc2);
  }
}

double mse(const Matrix& pred, const Matrix& target, Matrix* grad) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw std::invalid_argument("mse: shape mismatch");
  }
  const double n = static_cast<double>(pred.size());
  if (grad != nullptr) *grad = Matrix(pred.rows(), pred.cols());
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred.values()[i] - target.values()[i];
    s += d * d;
    if (grad != nullptr) grad->values()[i] = 2.0 * d / n;
  }
  return s / n;
}

std::vector<std::size_t> sample_batch(std::size_t n, std::size_t batch, Rng& rng) {
  std::vector<std::size_t> idx(batch);
  for (auto& i : idx) i = static_cast<std::size_t>(rng.uniform_index(n));
  return idx;
}

RegressionResult train_regression(const Matrix& x, const Matrix& y, const RegressionOptions& opts,
                                  Rng rng) {
  if (x.rows() != y.rows() || x.rows() == 0) throw std::invalid_argument("train_regression: bad data");
  std::vector<std::size_t> sizes{x.cols()};
  sizes.insert(sizes.end(), opts.hidden.begin(), opts.hidden.end());
  sizes.push_back(y.cols());
  Rng init_rng = rng.substream(0);
  Rng batch_rng = rng.substream(1);
  Rng drop_rng = rng.substream(2);
  RegressionResult res{init_mlp(sizes, init_rng), {}};
  AdamState adam = AdamState::for_params(res.params);
  const std::size_t batch = std::min(opts.batch_size, x.rows());
  res.loss_trace.reserve(opts.steps);
  std::optional<Dropout> dropout;
  if (opts.dropout > 0.0) dropout = Dropout{opts.dropout, &drop_rng};
  ForwardCache cache;
  for (std::size_t step = 0; step < opts.steps; ++step) {
    const auto idx = sample_batch(x.rows(), batch, batch_rng);
    const Matrix xb = gather_rows(x, idx);
    const Matrix yb = gather_rows(y, idx);
    const Matrix pred = forward(res.params, xb, &cache, dropout);
    Matrix grad;
    const double loss = mse(pred, yb, &grad);
    if (!std::isfinite(loss)) {
      throw NumericalError("regression training diverged at step " + std::to_string(step) +
                           ": loss " + std::to_string(loss));
    }
    res.loss_trace.push_back(loss);
    const Gradients g = backward(res.params, cache, grad);
    adam_step(res.params, g.params, adam, opts.learning_rate);
  }
  return res;
}

std::vector<RegressionResult> train_ensemble(const Matrix& x, const Matrix& y, std::size_t n_models,
                                             const RegressionOptions& opts, const Rng& rng,
                                             std::size_t threads) {
  if (n_models < 2) throw std::invalid_argument("train_ensemble: need at least 2 members");
  std::vector<RegressionResult> members(n_models);
  parallel_for(n_models, threads, [&](std::size_t m) {
    members[m] = train_regression(x, y, opts, rng.substream(m));
  });
  return members;
}

nlohmann::json to_json(const MlpParams& params) {
  nlohmann::json layers = nlohmann::json::array();
  for (const Layer& l : params.layers) {
    layers.push_back({{"rows", l.weight.rows()},
                      {"cols", l.weight.cols()},
                      {"weight", l.weight.values()},
                      {"bias", l.bias}});
  }
  return {{"format", kCheckpointFormat}, {"layers", layers}};
}

MlpParams mlp_from_json(const nlohmann::json& j) {
  if (!j.contains("format") || j["format"] != kCheckpointFormat) {
    throw ParseError(std::string("checkpoint: expected format ") + kCheckpointFormat);
  }
  MlpParams p;
  for (const auto& jl : j.at("layers")) {
    const auto rows = jl.at("rows").get<std::size_t>();
    const auto cols = jl.at("cols").get<std::size_t>();
    Layer l{Matrix(rows, cols, jl.at("weight").get<std::vector<double>>()),
            jl.at("bias").get<std::vector<double>>()};
    if (l.bias.size() != rows) throw ParseError("checkpoint: bias length mismatch");
    if (!p.layers.empty() && p.layers.back().weight.rows() != cols) {
      throw ParseError("checkpoint: consecutive layer sizes disagree");
    }
    p.layers.push_back(std::move(l));
  }
  if (p.layers.empty()) throw ParseError("checkpoint: no layers");
  return p;
}

void save_checkpoint(const MlpParams& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json(params).dump() << '\n';
}

MlpParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  nlohmann::json j;
  in >> j;
  return mlp_from_json(j);
}

}  // namespace deminf::nn
