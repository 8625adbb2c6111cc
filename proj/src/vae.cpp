#include "deminf/vae.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "deminf/error.hpp"

namespace deminf::vae {

Posterior encode(const VaeModel& model, const Matrix& x) {
  const Matrix out = nn::forward(model.encoder, x);
  const std::size_t L = model.latent_dim;
  if (out.cols() != 2 * L) throw std::invalid_argument("encode: encoder width is not 2*latent_dim");
  Posterior p{Matrix(x.rows(), L), Matrix(x.rows(), L)};
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t j = 0; j < L; ++j) {
      p.mu(r, j) = out(r, j);
      p.logvar(r, j) = out(r, L + j);
    }
  }
  return p;
}

double kl_term(const Matrix& mu, const Matrix& logvar) {
  if (mu.rows() != logvar.rows() || mu.cols() != logvar.cols()) {
    throw std::invalid_argument("kl_term: shape mismatch");
  }
  if (mu.rows() == 0) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const double m = mu.values()[i];
    const double lv = logvar.values()[i];
    s += m * m + std::exp(lv) - 1.0 - lv;
  }
  return std::max(0.0, 0.5 * s / static_cast<double>(mu.rows()));
}

VaeModel train_vae(const Matrix& x, const TrainOptions& opts, Rng rng, TrainTrace* trace) {
  if (x.rows() == 0) throw std::invalid_argument("train_vae: empty data");
  if (opts.latent_dim == 0) throw std::invalid_argument("train_vae: latent_dim must be positive");
  if (opts.latent_dim > x.cols()) throw std::invalid_argument("train_vae: latent_dim exceeds input width");
  const std::size_t d = x.cols();
  const std::size_t L = opts.latent_dim;

  VaeModel model;
  model.latent_dim = L;
  model.stats = Standardizer::fit(x);
  const Matrix xs = model.stats.apply(x);

  Rng init_rng = rng.substream(0);
  Rng batch_rng = rng.substream(1);
  Rng noise_rng = rng.substream(2);

  std::vector<std::size_t> enc_sizes{d};
  enc_sizes.insert(enc_sizes.end(), opts.hidden.begin(), opts.hidden.end());
  enc_sizes.push_back(2 * L);
  std::vector<std::size_t> dec_sizes{L};
  dec_sizes.insert(dec_sizes.end(), opts.hidden.rbegin(), opts.hidden.rend());
  dec_sizes.push_back(d);
  model.encoder = nn::init_mlp(enc_sizes, init_rng);
  model.decoder = nn::init_mlp(dec_sizes, init_rng);

  auto enc_adam = nn::AdamState::for_params(model.encoder);
  auto dec_adam = nn::AdamState::for_params(model.decoder);
  const std::size_t B = std::min(opts.batch_size, xs.rows());
  const double inv_b = 1.0 / static_cast<double>(B);

  nn::ForwardCache enc_cache;
  nn::ForwardCache dec_cache;
  for (std::size_t step = 0; step < opts.steps; ++step) {
    const Matrix xb = gather_rows(xs, nn::sample_batch(xs.rows(), B, batch_rng));
    const Matrix enc_out = nn::forward(model.encoder, xb, &enc_cache);

    Matrix mu(B, L), logvar(B, L), eps(B, L), z(B, L);
    for (std::size_t r = 0; r < B; ++r) {
      for (std::size_t j = 0; j < L; ++j) {
        mu(r, j) = enc_out(r, j);
        logvar(r, j) = std::clamp(enc_out(r, L + j), -kLogvarClamp, kLogvarClamp);
        eps(r, j) = noise_rng.normal();
        z(r, j) = mu(r, j) + std::exp(0.5 * logvar(r, j)) * eps(r, j);
      }
    }

    const Matrix rec = nn::forward(model.decoder, z, &dec_cache);
    Matrix grad_rec;
    const double recon = nn::mse(rec, xb, &grad_rec);
    const double kl = kl_term(mu, logvar);
    const double total = recon + opts.beta * kl;
    if (!std::isfinite(total)) {
      std::ostringstream msg;
      msg << "VAE training diverged at step " << step << ": recon=" << recon << " kl=" << kl;
      throw NumericalError(msg.str());
    }
    if (trace != nullptr) {
      trace->total.push_back(total);
      trace->recon.push_back(recon);
      trace->kl.push_back(kl);
    }

    const nn::Gradients dec_grad = nn::backward(model.decoder, dec_cache, grad_rec, true);
    Matrix grad_enc(B, 2 * L);
    for (std::size_t r = 0; r < B; ++r) {
      for (std::size_t j = 0; j < L; ++j) {
        const double dz = dec_grad.input(r, j);
        const double lv = logvar(r, j);
        const double sigma = std::exp(0.5 * lv);
        grad_enc(r, j) = dz + opts.beta * mu(r, j) * inv_b;
        const double raw = enc_out(r, L + j);
        const bool clamped = raw < -kLogvarClamp || raw > kLogvarClamp;
        grad_enc(r, L + j) =
            clamped ? 0.0 : dz * eps(r, j) * 0.5 * sigma + opts.beta * 0.5 * (std::exp(lv) - 1.0) * inv_b;
      }
    }
    const nn::Gradients enc_grad = nn::backward(model.encoder, enc_cache, grad_enc);
    nn::adam_step(model.decoder, dec_grad.params, dec_adam, opts.learning_rate);
    nn::adam_step(model.encoder, enc_grad.params, enc_adam, opts.learning_rate);
  }
  return model;
}

Matrix embed(const VaeModel& model, const Matrix& raw) {
  return encode(model, model.stats.apply(raw)).mu;
}

Matrix reconstruct(const VaeModel& model, const Matrix& raw) {
  return nn::forward(model.decoder, embed(model, raw));
}

double reconstruction_mse(const VaeModel& model, const Matrix& raw) {
  return nn::mse(reconstruct(model, raw), model.stats.apply(raw));
}

void save(const VaeModel& model, const std::filesystem::path& path) {
  nlohmann::json j{{"format", "deminf-vae-v1"},
                   {"latent_dim", model.latent_dim},
                   {"stats", model.stats},
                   {"encoder", nn::to_json(model.encoder)},
                   {"decoder", nn::to_json(model.decoder)}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump() << '\n';
}

VaeModel load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  nlohmann::json j;
  in >> j;
  if (j.value("format", "") != "deminf-vae-v1") throw ParseError("VAE checkpoint: bad format header");
  VaeModel m;
  m.latent_dim = j.at("latent_dim").get<std::size_t>();
  m.stats = j.at("stats").get<Standardizer>();
  m.encoder = nn::mlp_from_json(j.at("encoder"));
  m.decoder = nn::mlp_from_json(j.at("decoder"));
  if (m.encoder.output_size() != 2 * m.latent_dim || m.decoder.output_size() != m.stats.dim()) {
    throw ParseError("VAE checkpoint: inconsistent shapes");
  }
  return m;
}

}  // namespace deminf::vae
