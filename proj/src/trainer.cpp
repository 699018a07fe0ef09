#include "saesteer/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "saesteer/kernels.hpp"

namespace saesteer {
namespace {

enum RngStream : std::uint32_t { kMedianSample = 1, kWeights = 2, kShuffle = 3 };

std::mt19937_64 make_rng(std::uint64_t seed, RngStream stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

// y += alpha * x
template <class Real>
void accumulate(Real alpha, std::span<const Real> x, std::span<Real> y) {
  if constexpr (std::is_same_v<Real, float>) {
    kernels::axpy(alpha, x, y);
  } else {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = y[i] + alpha * x[i];
  }
}

template <class Real>
bool all_finite(const std::vector<Real>& v) {
  return std::all_of(v.begin(), v.end(), [](Real x) { return std::isfinite(x); });
}

// Selected latents with their (positive) activation.
struct Selection {
  std::vector<std::size_t> index;
  std::vector<double> value;
};

template <class Real>
struct SampleForward {
  std::vector<Real> centered;  // z - b_pre
  std::vector<Real> pre;       // W_enc (z - b_pre) + b_enc
  Selection kept;              // Top-k, positive only
  Selection aux;               // Top-k_aux among dead latents, positive only
  std::vector<double> error;   // z - z_hat
  std::vector<double> aux_residual;  // error - W_dec h_aux
  double mse = 0.0;
  double aux_loss = 0.0;
};

template <class Real>
Selection select_positive(const std::vector<std::size_t>& ranked, std::span<const Real> values) {
  Selection s;
  std::vector<std::size_t> idx;
  for (const std::size_t j : ranked) {
    if (values[j] > Real(0)) idx.push_back(j);
  }
  std::sort(idx.begin(), idx.end());
  s.index = idx;
  s.value.reserve(idx.size());
  for (const std::size_t j : idx) s.value.push_back(static_cast<double>(values[j]));
  return s;
}

template <class Real>
SampleForward<Real> forward(std::span<const Real> z, const BasicSaeParams<Real>& params,
                            std::span<const std::uint8_t> dead_mask, std::size_t k_aux) {
  const std::size_t d = params.d;
  const std::size_t m = params.m;
  SampleForward<Real> f;
  f.pre = pre_activations(z, params);
  f.centered.resize(d);
  for (std::size_t i = 0; i < d; ++i) f.centered[i] = z[i] - params.b_pre[i];

  std::vector<Real> relu(f.pre);
  for (auto& v : relu) v = std::max(v, Real(0));
  const std::span<const Real> relu_view(relu);
  f.kept = select_positive(top_k_indices(relu_view, params.k), relu_view);

  f.error.resize(d);
  for (std::size_t i = 0; i < d; ++i) {
    double recon = 0.0;
    for (std::size_t s = 0; s < f.kept.index.size(); ++s) {
      recon += static_cast<double>(params.decoder_at(i, f.kept.index[s])) * f.kept.value[s];
    }
    recon += static_cast<double>(params.b_pre[i]);
    f.error[i] = static_cast<double>(z[i]) - recon;
    f.mse += f.error[i] * f.error[i];
  }

  // Zero residual (and zero loss) unless some latent is dead.
  f.aux_residual.assign(d, 0.0);
  if (dead_mask.empty() || k_aux == 0) return f;
  check_dimension("dead latent mask", m, dead_mask.size());
  std::vector<Real> dead_relu(m, Real(0));
  bool any_dead = false;
  for (std::size_t j = 0; j < m; ++j) {
    if (dead_mask[j] != 0) {
      dead_relu[j] = relu[j];
      any_dead = true;
    }
  }
  if (!any_dead) return f;

  const std::span<const Real> dead_view(dead_relu);
  f.aux = select_positive(top_k_indices(dead_view, k_aux), dead_view);
  for (std::size_t i = 0; i < d; ++i) {
    double recon = 0.0;
    for (std::size_t s = 0; s < f.aux.index.size(); ++s) {
      recon += static_cast<double>(params.decoder_at(i, f.aux.index[s])) * f.aux.value[s];
    }
    f.aux_residual[i] = f.error[i] - recon;
    f.aux_loss += f.aux_residual[i] * f.aux_residual[i];
  }
  return f;
}

}  // namespace

void FeatureMatrix::append(std::span<const float> z) {
  if (d == 0) d = z.size();
  check_dimension("feature vector", d, z.size());
  values.insert(values.end(), z.begin(), z.end());
}

std::size_t TrainConfig::resolved_k_aux(std::size_t m) const {
  return k_aux == 0 ? std::min(2 * k, m) : k_aux;
}

void TrainConfig::validate(std::size_t d) const {
  if (d == 0) throw ValidationError("input dimension must be positive");
  if (expansion_factor == 0) throw ValidationError("expansion_factor must be positive");
  const std::size_t m = latent_dim(d);
  if (k < 1 || k > m) {
    throw ValidationError("k=" + std::to_string(k) + " must satisfy 1 <= k <= m=" +
                          std::to_string(m));
  }
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ValidationError("alpha must be >= 0");
  if (resolved_k_aux(m) > m) {
    throw ValidationError("k_aux=" + std::to_string(k_aux) + " exceeds m=" + std::to_string(m));
  }
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (dead_threshold_steps < 1) throw ValidationError("dead_threshold_steps must be >= 1");
  if (!(learning_rate > 0.0f) || !std::isfinite(learning_rate)) {
    throw ValidationError("learning_rate must be positive");
  }
  if (!(beta1 >= 0.0f && beta1 < 1.0f) || !(beta2 >= 0.0f && beta2 < 1.0f)) {
    throw ValidationError("beta1 and beta2 must lie in [0, 1)");
  }
  if (!(epsilon > 0.0f)) throw ValidationError("epsilon must be positive");
  if (median_sample_limit < 1 || median_max_iterations < 1) {
    throw ValidationError("geometric median limits must be positive");
  }
}

SaeParams init_params(const FeatureMatrix& bank, const TrainConfig& config, std::uint64_t seed) {
  if (bank.rows() == 0) throw ValidationError("cannot initialize from an empty feature bank");
  const std::size_t d = bank.d;
  config.validate(d);
  const std::size_t m = config.latent_dim(d);

  std::vector<std::size_t> chosen(bank.rows());
  std::iota(chosen.begin(), chosen.end(), std::size_t{0});
  if (chosen.size() > config.median_sample_limit) {
    auto rng = make_rng(seed, kMedianSample);
    std::vector<std::size_t> sample;
    sample.reserve(config.median_sample_limit);
    std::sample(chosen.begin(), chosen.end(), std::back_inserter(sample),
                static_cast<std::ptrdiff_t>(config.median_sample_limit), rng);
    chosen.swap(sample);
  }
  std::vector<std::span<const float>> points;
  points.reserve(chosen.size());
  for (const std::size_t i : chosen) points.push_back(bank.row(i));
  const auto median =
      geometric_median(points, config.median_tolerance, config.median_max_iterations);

  SaeParams p = SaeParams::zeros(d, m, config.k);
  p.normalize_decoder = config.normalize_decoder;
  for (std::size_t i = 0; i < d; ++i) p.b_pre[i] = static_cast<float>(median[i]);

  auto rng = make_rng(seed, kWeights);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  for (auto& w : p.w_enc) w = static_cast<float>(normal(rng) * scale);
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t i = 0; i < d; ++i) p.w_dec[i * m + j] = p.w_enc[j * d + i];
  }
  p.normalize_decoder_columns();
  return p;
}

template <class Real>
BasicGradients<Real> BasicGradients<Real>::zeros_like(const BasicSaeParams<Real>& params) {
  BasicGradients g;
  g.w_enc.assign(params.w_enc.size(), Real(0));
  g.b_enc.assign(params.b_enc.size(), Real(0));
  g.w_dec.assign(params.w_dec.size(), Real(0));
  g.b_pre.assign(params.b_pre.size(), Real(0));
  return g;
}

template <class Real>
void BasicGradients<Real>::set_zero() {
  std::fill(w_enc.begin(), w_enc.end(), Real(0));
  std::fill(b_enc.begin(), b_enc.end(), Real(0));
  std::fill(w_dec.begin(), w_dec.end(), Real(0));
  std::fill(b_pre.begin(), b_pre.end(), Real(0));
}

template <class Real>
double aux_loss(std::span<const Real> z, const BasicSaeParams<Real>& params,
                std::span<const std::uint8_t> dead_mask, std::size_t k_aux) {
  check_dimension("dead latent mask", params.m, dead_mask.size());
  return forward(z, params, dead_mask, k_aux).aux_loss;
}

template <class Real>
LossTerms sae_loss(std::span<const std::span<const Real>> batch,
                   const BasicSaeParams<Real>& params, std::span<const std::uint8_t> dead_mask,
                   std::size_t k_aux, double /*alpha*/) {
  if (batch.empty()) throw ValidationError("loss requires a non-empty batch");
  LossTerms terms;
  for (const auto& z : batch) {
    const auto f = forward(z, params, dead_mask, k_aux);
    terms.mse += f.mse;
    terms.aux += f.aux_loss;
  }
  const double n = static_cast<double>(batch.size());
  terms.mse /= n;
  terms.aux /= n;
  return terms;
}

NonFiniteGradientError::NonFiniteGradientError(std::string parameter)
    : Error("non-finite gradient for parameter " + parameter), parameter_(std::move(parameter)) {}

template <class Real>
LossTerms compute_gradients(std::span<const std::span<const Real>> batch,
                            const BasicSaeParams<Real>& params,
                            std::span<const std::uint8_t> dead_mask, std::size_t k_aux,
                            double alpha, BasicGradients<Real>& grads,
                            std::span<std::uint8_t> fired) {
  if (batch.empty()) throw ValidationError("gradient requires a non-empty batch");
  const std::size_t d = params.d;
  const std::size_t m = params.m;
  if (grads.w_enc.size() != params.w_enc.size()) grads = BasicGradients<Real>::zeros_like(params);
  if (!fired.empty()) check_dimension("fired latent mask", m, fired.size());

  const double scale = 1.0 / static_cast<double>(batch.size());
  std::vector<double> grad_error(d);
  std::vector<std::pair<std::size_t, double>> latent_grad;
  LossTerms terms;

  for (const auto& z : batch) {
    const auto f = forward(z, params, dead_mask, k_aux);
    terms.mse += f.mse;
    terms.aux += f.aux_loss;

    // dL/de with e = z - z_hat and u = e - W_dec h_aux.
    for (std::size_t i = 0; i < d; ++i) {
      grad_error[i] = 2.0 * f.error[i] + 2.0 * alpha * f.aux_residual[i];
      grads.b_pre[i] = static_cast<Real>(grads.b_pre[i] - scale * grad_error[i]);
    }

    latent_grad.clear();
    for (std::size_t s = 0; s < f.kept.index.size(); ++s) {
      const std::size_t j = f.kept.index[s];
      const double h = f.kept.value[s];
      double dh = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        const double w = params.decoder_at(i, j);
        dh -= w * grad_error[i];
        Real& g = grads.w_dec[i * m + j];
        g = static_cast<Real>(g - scale * grad_error[i] * h);
      }
      latent_grad.emplace_back(j, dh);
      if (!fired.empty()) fired[j] = 1;
    }
    for (std::size_t s = 0; s < f.aux.index.size(); ++s) {
      const std::size_t j = f.aux.index[s];
      const double h = f.aux.value[s];
      double dh = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        const double du = 2.0 * alpha * f.aux_residual[i];
        const double w = params.decoder_at(i, j);
        dh -= w * du;
        Real& g = grads.w_dec[i * m + j];
        g = static_cast<Real>(g - scale * du * h);
      }
      latent_grad.emplace_back(j, dh);
    }

    // Through ReLU (all selected activations are positive) into the encoder.
    const std::span<const Real> centered(f.centered);
    for (const auto& [j, da] : latent_grad) {
      grads.b_enc[j] = static_cast<Real>(grads.b_enc[j] + scale * da);
      accumulate(static_cast<Real>(scale * da), centered,
                 std::span<Real>(grads.w_enc.data() + j * d, d));
      accumulate(static_cast<Real>(-scale * da), params.encoder_row(j),
                 std::span<Real>(grads.b_pre));
    }
  }

  if (!all_finite(grads.w_enc)) throw NonFiniteGradientError("W_enc");
  if (!all_finite(grads.b_enc)) throw NonFiniteGradientError("b_enc");
  if (!all_finite(grads.w_dec)) throw NonFiniteGradientError("W_dec");
  if (!all_finite(grads.b_pre)) throw NonFiniteGradientError("b_pre");

  terms.mse *= scale;
  terms.aux *= scale;
  return terms;
}

LatentMask TrainState::dead_mask(std::uint32_t threshold) const {
  LatentMask mask(steps_since_fired.size(), 0);
  for (std::size_t j = 0; j < mask.size(); ++j) {
    mask[j] = steps_since_fired[j] >= threshold ? 1 : 0;
  }
  return mask;
}

DivergenceError::DivergenceError(TrainState last_finite, std::size_t step)
    : Error("training diverged at step " + std::to_string(step) +
            " (loss or gradient became non-finite)"),
      state_(std::move(last_finite)),
      step_(step) {}

Trainer::Trainer(const FeatureMatrix& bank, TrainConfig config)
    : bank_(bank), config_(config), shuffle_rng_(make_rng(config.seed, kShuffle)) {
  config_.validate(bank_.d);
  if (bank_.rows() < config_.batch_size) {
    throw ValidationError("feature bank has " + std::to_string(bank_.rows()) +
                          " vectors, fewer than batch_size=" +
                          std::to_string(config_.batch_size));
  }
  state_.params = init_params(bank_, config_, config_.seed);
  const std::size_t m = state_.params.m;
  k_aux_ = config_.resolved_k_aux(m);
  state_.moment1 = Gradients::zeros_like(state_.params);
  state_.moment2 = Gradients::zeros_like(state_.params);
  state_.steps_since_fired.assign(m, 0);
  grads_ = Gradients::zeros_like(state_.params);
  order_.resize(bank_.rows());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  cursor_ = order_.size();
}

void Trainer::next_batch(std::vector<std::span<const float>>& batch) {
  batch.clear();
  if (cursor_ + config_.batch_size > order_.size()) {
    std::shuffle(order_.begin(), order_.end(), shuffle_rng_);
    cursor_ = 0;
  }
  for (std::size_t b = 0; b < config_.batch_size; ++b) {
    batch.push_back(bank_.row(order_[cursor_ + b]));
  }
  cursor_ += config_.batch_size;
}

void Trainer::step() {
  SaeParams& p = state_.params;
  const std::size_t d = p.d;
  const std::size_t m = p.m;

  std::vector<std::span<const float>> batch;
  next_batch(batch);
  const LatentMask dead = state_.dead_mask(config_.dead_threshold_steps);
  LatentMask fired(m, 0);

  grads_.set_zero();
  LossTerms loss;
  try {
    loss = compute_gradients<float>(batch, p, dead, k_aux_, config_.alpha, grads_, fired);
  } catch (const NonFiniteGradientError&) {
    throw DivergenceError(state_, state_.step);
  }
  if (!std::isfinite(loss.total(config_.alpha))) throw DivergenceError(state_, state_.step);

  if (state_.step % kHistoryInterval == 0) {
    state_.loss_history.push_back({state_.step, loss.mse, loss.aux});
  }

  if (config_.normalize_decoder) {
    // Remove the gradient component parallel to each unit decoder column.
    for (std::size_t j = 0; j < m; ++j) {
      double along = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        along += static_cast<double>(grads_.w_dec[i * m + j]) * p.w_dec[i * m + j];
      }
      if (along == 0.0) continue;
      for (std::size_t i = 0; i < d; ++i) {
        grads_.w_dec[i * m + j] =
            static_cast<float>(grads_.w_dec[i * m + j] - along * p.w_dec[i * m + j]);
      }
    }
  }

  const double t = static_cast<double>(state_.step + 1);
  const kernels::AdamCoefficients coeffs{
      config_.learning_rate,
      config_.beta1,
      config_.beta2,
      config_.epsilon,
      static_cast<float>(1.0 - std::pow(static_cast<double>(config_.beta1), t)),
      static_cast<float>(1.0 - std::pow(static_cast<double>(config_.beta2), t)),
  };
  const auto& k = kernels::active();
  const auto update = [&](std::vector<float>& param, const std::vector<float>& grad,
                          std::vector<float>& m1, std::vector<float>& m2) {
    k.adam_update_f32(param.data(), grad.data(), m1.data(), m2.data(), param.size(), coeffs);
  };
  update(p.w_enc, grads_.w_enc, state_.moment1.w_enc, state_.moment2.w_enc);
  update(p.b_enc, grads_.b_enc, state_.moment1.b_enc, state_.moment2.b_enc);
  update(p.w_dec, grads_.w_dec, state_.moment1.w_dec, state_.moment2.w_dec);
  update(p.b_pre, grads_.b_pre, state_.moment1.b_pre, state_.moment2.b_pre);

  if (config_.normalize_decoder) p.normalize_decoder_columns();

  for (std::size_t j = 0; j < m; ++j) {
    auto& since = state_.steps_since_fired[j];
    if (fired[j] != 0) {
      since = 0;
    } else if (since < std::numeric_limits<std::uint32_t>::max()) {
      ++since;
    }
  }
  ++state_.step;
}

void Trainer::run(std::size_t steps) {
  for (std::size_t s = 0; s < steps; ++s) step();
}

TrainState train(const FeatureMatrix& bank, const TrainConfig& config) {
  Trainer trainer(bank, config);
  trainer.run(config.total_steps);
  return trainer.release();
}

double windowed_mse(std::span<const LossRecord> history, std::size_t window, bool from_end) {
  if (history.empty() || window == 0) throw ValidationError("empty loss history window");
  window = std::min(window, history.size());
  const auto first = from_end ? history.end() - static_cast<std::ptrdiff_t>(window)
                              : history.begin();
  double sum = 0.0;
  for (auto it = first; it != first + static_cast<std::ptrdiff_t>(window); ++it) sum += it->mse;
  return sum / static_cast<double>(window);
}

#define SAESTEER_INSTANTIATE(Real)                                                              \
  template struct BasicGradients<Real>;                                                         \
  template double aux_loss(std::span<const Real>, const BasicSaeParams<Real>&,                  \
                           std::span<const std::uint8_t>, std::size_t);                         \
  template LossTerms sae_loss(std::span<const std::span<const Real>>,                           \
                              const BasicSaeParams<Real>&, std::span<const std::uint8_t>,       \
                              std::size_t, double);                                             \
  template LossTerms compute_gradients(std::span<const std::span<const Real>>,                  \
                                       const BasicSaeParams<Real>&,                             \
                                       std::span<const std::uint8_t>, std::size_t, double,      \
                                       BasicGradients<Real>&, std::span<std::uint8_t>);

SAESTEER_INSTANTIATE(float)
SAESTEER_INSTANTIATE(double)

#undef SAESTEER_INSTANTIATE

}  // namespace saesteer
