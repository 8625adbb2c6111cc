#pragma once

// Helpers shared by the unit tests and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "deminf/knn.hpp"
#include "deminf/matrix.hpp"
#include "deminf/mlp.hpp"
#include "deminf/numerics.hpp"

namespace deminf::testing {

inline Matrix random_normal(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.normal();
  return m;
}

/// Haar-ish random orthogonal matrix by Gram-Schmidt on Gaussian columns.
inline Matrix random_orthogonal(std::size_t d, Rng& rng) {
  Matrix q = random_normal(d, d, rng);
  for (std::size_t c = 0; c < d; ++c) {
    for (std::size_t p = 0; p < c; ++p) {
      double dot = 0.0;
      for (std::size_t r = 0; r < d; ++r) dot += q(r, c) * q(r, p);
      for (std::size_t r = 0; r < d; ++r) q(r, c) -= dot * q(r, p);
    }
    double norm = 0.0;
    for (std::size_t r = 0; r < d; ++r) norm += q(r, c) * q(r, c);
    norm = std::sqrt(norm);
    for (std::size_t r = 0; r < d; ++r) q(r, c) /= norm;
  }
  return q;
}

/// x * q + shift for every row.
inline Matrix rigid_transform(const Matrix& x, const Matrix& q, const std::vector<double>& shift) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t c = 0; c < x.cols(); ++c) {
      double v = 0.0;
      for (std::size_t r = 0; r < x.cols(); ++r) v += x(i, r) * q(r, c);
      out(i, c) = v + shift[c];
    }
  }
  return out;
}

inline knn::LatentPairSet rigid_transform(const knn::LatentPairSet& pairs, Rng& rng) {
  auto move = [&rng](const Matrix& z) {
    std::vector<double> shift(z.cols());
    for (double& s : shift) s = rng.uniform(-5.0, 5.0);
    return rigid_transform(z, random_orthogonal(z.cols(), rng), shift);
  };
  knn::LatentPairSet out;
  out.zs = move(pairs.zs);
  out.za = move(pairs.za);
  return out;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Largest elementwise relative error between backward() and central
/// differences of the loss sum(weights .* f(x)), over every parameter and
/// every input entry. Entries where both derivatives are below `floor`
/// in magnitude are compared against `floor`.
inline double gradient_check(nn::MlpParams params, const Matrix& x, const Matrix& weights, double h,
                             double floor = 1e-6) {
  auto loss = [&](const nn::MlpParams& p, const Matrix& in) {
    const Matrix y = nn::forward(p, in);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y.values()[i] * weights.values()[i];
    return s;
  };
  nn::ForwardCache cache;
  nn::forward(params, x, &cache);
  const auto grads = nn::backward(params, cache, weights, true);

  double worst = 0.0;
  auto compare = [&](double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    worst = std::max(worst, std::abs(analytic - numeric) / denom);
  };
  auto probe = [&](double& slot, double analytic, const Matrix& in) {
    const double saved = slot;
    slot = saved + h;
    const double up = loss(params, in);
    slot = saved - h;
    const double down = loss(params, in);
    slot = saved;
    compare(analytic, (up - down) / (2.0 * h));
  };
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto& layer = params.layers[l];
    for (std::size_t i = 0; i < layer.weight.size(); ++i) {
      probe(layer.weight.values()[i], grads.params.layers[l].weight.values()[i], x);
    }
    for (std::size_t i = 0; i < layer.bias.size(); ++i) {
      probe(layer.bias[i], grads.params.layers[l].bias[i], x);
    }
  }
  Matrix xin = x;
  for (std::size_t i = 0; i < xin.size(); ++i) {
    const double saved = xin.values()[i];
    xin.values()[i] = saved + h;
    const double up = loss(params, xin);
    xin.values()[i] = saved - h;
    const double down = loss(params, xin);
    xin.values()[i] = saved;
    compare(grads.input.values()[i], (up - down) / (2.0 * h));
  }
  return worst;
}

/// A random net with widths <= 16 and depth <= 3 plus matching inputs and
/// output weights, all drawn from `rng`.
struct GradientCase {
  nn::MlpParams params;
  Matrix x;
  Matrix weights;
};

inline GradientCase random_gradient_case(Rng& rng) {
  const std::size_t hidden_layers = rng.uniform_index(3);  // 1 to 3 affine layers
  std::vector<std::size_t> sizes;
  for (std::size_t i = 0; i < hidden_layers + 2; ++i) sizes.push_back(1 + rng.uniform_index(16));
  GradientCase c;
  c.params = nn::init_mlp(sizes, rng);
  // Non-zero biases so the check also covers bias gradients away from init.
  for (auto& layer : c.params.layers) {
    for (double& b : layer.bias) b = rng.uniform(-0.5, 0.5);
  }
  const std::size_t batch = 1 + rng.uniform_index(6);
  c.x = random_normal(batch, sizes.front(), rng);
  c.weights = random_normal(batch, sizes.back(), rng);
  return c;
}

}  // namespace deminf::testing
