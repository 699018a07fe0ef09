#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "saesteer/error.hpp"
#include "saesteer/sae.hpp"

namespace saesteer {

// Row-major bank of residual feature vectors held in memory for training.
struct FeatureMatrix {
  std::size_t d = 0;
  std::vector<float> values;

  std::size_t rows() const { return d == 0 ? 0 : values.size() / d; }
  std::span<const float> row(std::size_t i) const { return {values.data() + i * d, d}; }
  void append(std::span<const float> z);
};

struct TrainConfig {
  std::size_t k = 32;
  std::size_t expansion_factor = 32;
  double alpha = 1.0 / 32.0;
  std::size_t k_aux = 0;  // 0 selects min(2k, m)
  std::uint32_t dead_threshold_steps = 1000;
  std::size_t batch_size = 128;
  std::size_t total_steps = 5000;
  float learning_rate = 1e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float epsilon = 1e-8f;
  bool normalize_decoder = true;
  std::uint64_t seed = 0;

  std::size_t median_sample_limit = 100000;
  std::size_t median_max_iterations = 100;
  double median_tolerance = 1e-6;

  std::size_t latent_dim(std::size_t d) const { return expansion_factor * d; }
  std::size_t resolved_k_aux(std::size_t m) const;
  // Throws ValidationError when the config cannot be used with input dimension d.
  void validate(std::size_t d) const;
};

// Weiszfeld iteration started from the centroid. Points coinciding with the
// current iterate are skipped in the reweighting step.
std::vector<double> geometric_median(std::span<const std::span<const float>> points,
                                     double tolerance, std::size_t max_iterations);

SaeParams init_params(const FeatureMatrix& bank, const TrainConfig& config, std::uint64_t seed);

// One flag per latent; nonzero marks the latent as dead.
using LatentMask = std::vector<std::uint8_t>;

template <class Real>
struct BasicGradients {
  std::vector<Real> w_enc;
  std::vector<Real> b_enc;
  std::vector<Real> w_dec;
  std::vector<Real> b_pre;

  static BasicGradients zeros_like(const BasicSaeParams<Real>& params);
  void set_zero();
};

using Gradients = BasicGradients<float>;

struct LossTerms {
  double mse = 0.0;  // batch mean of ||z - z_hat||^2
  double aux = 0.0;  // batch mean of the auxiliary loss

  double total(double alpha) const { return mse + alpha * aux; }
};

// ||e - W_dec h_aux||^2 where e = z - decode(encode_train(z)) and h_aux keeps
// the k_aux largest positive pre-activations among dead latents. Zero when no
// latent is dead.
template <class Real>
double aux_loss(std::span<const Real> z, const BasicSaeParams<Real>& params,
                std::span<const std::uint8_t> dead_mask, std::size_t k_aux);

template <class Real>
LossTerms sae_loss(std::span<const std::span<const Real>> batch,
                   const BasicSaeParams<Real>& params, std::span<const std::uint8_t> dead_mask,
                   std::size_t k_aux, double alpha);

class NonFiniteGradientError : public Error {
 public:
  explicit NonFiniteGradientError(std::string parameter);
  const std::string& parameter() const noexcept { return parameter_; }

 private:
  std::string parameter_;
};

// Gradients of mse + alpha * aux averaged over the batch. Top-k selections are
// held fixed. `fired`, when non-empty, is set for every latent kept by Top-k
// with a positive activation for some batch element.
template <class Real>
LossTerms compute_gradients(std::span<const std::span<const Real>> batch,
                            const BasicSaeParams<Real>& params,
                            std::span<const std::uint8_t> dead_mask, std::size_t k_aux,
                            double alpha, BasicGradients<Real>& grads,
                            std::span<std::uint8_t> fired = {});

struct LossRecord {
  std::size_t step;
  double mse;
  double aux;

  bool operator==(const LossRecord&) const = default;
};

struct TrainState {
  SaeParams params;
  Gradients moment1;
  Gradients moment2;
  std::vector<std::uint32_t> steps_since_fired;
  std::size_t step = 0;
  std::vector<LossRecord> loss_history;

  LatentMask dead_mask(std::uint32_t threshold) const;
};

class DivergenceError : public Error {
 public:
  DivergenceError(TrainState last_finite, std::size_t step);
  const TrainState& last_finite_state() const noexcept { return state_; }
  std::size_t step() const noexcept { return step_; }

 private:
  TrainState state_;
  std::size_t step_;
};

class Trainer {
 public:
  static constexpr std::size_t kHistoryInterval = 10;

  // Keeps a reference to `bank`; it must outlive the trainer.
  Trainer(const FeatureMatrix& bank, TrainConfig config);

  // One shuffled mini-batch update. Throws DivergenceError when the loss or a
  // gradient stops being finite; the state is left at the last finite values.
  void step();
  void run(std::size_t steps);

  const TrainState& state() const { return state_; }
  TrainState release() { return std::move(state_); }
  const TrainConfig& config() const { return config_; }

 private:
  void next_batch(std::vector<std::span<const float>>& batch);

  const FeatureMatrix& bank_;
  TrainConfig config_;
  std::size_t k_aux_;
  TrainState state_;
  Gradients grads_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::mt19937_64 shuffle_rng_;
};

TrainState train(const FeatureMatrix& bank, const TrainConfig& config);

// Mean MSE over `window` consecutive history records, starting at the front
// (from_end = false) or ending at the back.
double windowed_mse(std::span<const LossRecord> history, std::size_t window, bool from_end);

}  // namespace saesteer
