#include "saesteer/steering.hpp"

#include <algorithm>
#include <cmath>

#include "saesteer/checkpoint.hpp"

namespace saesteer {

void SteeringConfig::validate() const {
  if (!std::isfinite(gamma)) throw ValidationError("gamma must be finite");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ValidationError("temperature must be a positive finite number, got " +
                          std::to_string(temperature));
  }
}

std::string_view route_name(Route r) { return r == Route::Known ? "known" : "softmax"; }

std::optional<std::size_t> route_known(std::string_view profession, const DirectionBank& bank) {
  return bank.find(profession);
}

namespace {

std::string fold_separators(std::string_view name) {
  std::string s(name);
  std::replace(s.begin(), s.end(), '-', ' ');
  std::replace(s.begin(), s.end(), '_', ' ');
  return canonical_name(s);
}

}  // namespace

std::optional<std::size_t> route_fuzzy(std::string_view profession, const DirectionBank& bank) {
  if (auto id = route_known(profession, bank)) return id;
  const std::string folded = fold_separators(profession);
  if (folded.empty()) return std::nullopt;
  for (std::size_t i = 0; i < bank.entries.size(); ++i) {
    if (fold_separators(bank.entries[i].name) == folded) return i;
  }
  return std::nullopt;
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  check_dimension("cosine operand", a.size(), b.size());
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<double> softmax_weights(std::span<const float> h_job, const DirectionBank& bank,
                                    double temperature) {
  if (bank.empty()) throw ValidationError("direction bank is empty");
  if (!(temperature > 0.0)) throw ValidationError("temperature must be positive");
  check_dimension("job latent", bank.m, h_job.size());
  if (std::all_of(h_job.begin(), h_job.end(), [](float v) { return v == 0.0f; })) {
    throw DegenerateLatentError();
  }
  std::vector<double> logits(bank.size());
  for (std::size_t i = 0; i < bank.size(); ++i) {
    logits[i] = cosine_similarity(h_job, bank.entries[i].direction) / temperature;
  }
  const double top = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (auto& v : logits) {
    v = std::exp(v - top);
    total += v;
  }
  for (auto& v : logits) v /= total;
  return logits;
}

FinalDirection final_direction(std::span<const float> h_job, const DirectionBank& bank,
                               std::string_view profession, const SteeringConfig& config) {
  FinalDirection out;
  out.entry = config.exact_match_required ? route_known(profession, bank)
                                          : route_fuzzy(profession, bank);
  if (out.entry) {
    out.route = Route::Known;
    out.direction = bank.entries[*out.entry].direction;
    return out;
  }
  if (config.exact_match_required) throw UnknownProfessionError(profession);

  out.route = Route::Softmax;
  out.weights = softmax_weights(h_job, bank, config.temperature);
  std::vector<double> acc(bank.m, 0.0);
  for (std::size_t i = 0; i < bank.size(); ++i) {
    const auto& dir = bank.entries[i].direction;
    for (std::size_t j = 0; j < bank.m; ++j) acc[j] += out.weights[i] * dir[j];
  }
  out.direction.assign(acc.begin(), acc.end());
  return out;
}

std::vector<float> decode_direction(std::span<const float> direction, double gamma,
                                    const SaeParams& params) {
  check_dimension("latent direction", params.m, direction.size());
  std::vector<double> scaled(direction.size());
  for (std::size_t j = 0; j < direction.size(); ++j) scaled[j] = gamma * direction[j];
  std::vector<float> delta(params.d);
  for (std::size_t i = 0; i < params.d; ++i) {
    const auto row = params.decoder_row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < params.m; ++j) acc += static_cast<double>(row[j]) * scaled[j];
    delta[i] = static_cast<float>(acc);
  }
  return delta;
}

Steerer::Steerer(const DirectionBank& bank, const SaeParams& params, SteeringConfig config)
    : Steerer(bank, params, sae_fingerprint(params), config) {}

Steerer::Steerer(const DirectionBank& bank, const SaeParams& params,
                 const Fingerprint& params_fingerprint, SteeringConfig config)
    : bank_(bank), params_(params), config_(config) {
  config_.validate();
  check_dimension("bank latent width vs checkpoint m", params.m, bank.m);
  bank.check_fingerprint(params_fingerprint);
}

SteeringDelta Steerer::emit(const PromptInput& prompt) const {
  check_dimension("job residual", params_.d, prompt.z_job.size());
  SteeringDelta out;
  out.prompt_id = prompt.prompt_id;
  out.profession = prompt.profession;
  out.token_position = prompt.token_position;

  const auto h_job = encode_inference<float>(prompt.z_job, params_);
  FinalDirection fin;
  try {
    fin = final_direction(h_job.values, bank_, prompt.profession, config_);
  } catch (const DegenerateLatentError&) {
    out.route = Route::Softmax;
    out.degenerate = true;
    out.delta.assign(params_.d, 0.0f);
    return out;
  }
  out.route = fin.route;
  for (std::size_t i = 0; i < fin.weights.size(); ++i) {
    out.weights.emplace_back(bank_.entries[i].name, fin.weights[i]);
  }
  out.delta = decode_direction(fin.direction, config_.gamma, params_);
  return out;
}

SteeringDelta emit_delta(const PromptInput& prompt, const DirectionBank& bank,
                         const SaeParams& params, const SteeringConfig& config) {
  return Steerer(bank, params, config).emit(prompt);
}

std::vector<float> apply_delta(std::span<const float> z, std::span<const float> delta) {
  check_dimension("steering delta", z.size(), delta.size());
  std::vector<float> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] + delta[i];
  return out;
}

void DeltaBatch::validate() const {
  if (!std::isfinite(gamma)) throw ValidationError("delta batch gamma is not finite");
  if (!(temperature > 0.0)) throw ValidationError("delta batch temperature must be positive");
  for (const auto& rec : deltas) {
    check_dimension("delta", d, rec.delta.size());
    if (rec.route == Route::Known && !rec.weights.empty()) {
      throw ValidationError("known-route delta " + std::to_string(rec.prompt_id) +
                            " carries softmax weights");
    }
    if (!rec.weights.empty()) {
      double total = 0.0;
      for (const auto& [name, w] : rec.weights) {
        if (!(w >= 0.0)) throw ValidationError("negative softmax weight for " + name);
        total += w;
      }
      if (std::abs(total - 1.0) > 1e-6) {
        throw ValidationError("softmax weights of delta " + std::to_string(rec.prompt_id) +
                              " sum to " + std::to_string(total));
      }
    }
  }
}

}  // namespace saesteer
