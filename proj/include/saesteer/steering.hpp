#pragma once

// Routing a prompt's job-token latent to a debiasing direction, and the
// embedding-space delta W_dec * (gamma * dir) that the generation side adds
// to the residual at the job token.
//
// Delta files come in two shapes:
//   JSON Lines: one object per prompt with prompt_id, profession,
//     token_position, gamma, temperature, route, weights, delta, degenerate
//     and sae_fingerprint.
//   "SAED" binary:
//     "SAED" | version u16 | d u32 | count u32 | fingerprint (32 bytes)
//     gamma f64 | temperature f64
//     count x { prompt_id u64 | token_position u32 | route u8 | degenerate u8
//               profession (u16 len + bytes) | weight_count u32
//               weight_count x { name (u16 len + bytes) | weight f64 } | d x f32 }
//     crc32 u32 over every preceding byte

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "saesteer/direction_bank.hpp"
#include "saesteer/sae.hpp"
#include "saesteer/types.hpp"

namespace saesteer {

inline constexpr std::uint16_t kDeltaFileVersion = 1;

struct SteeringConfig {
  double gamma = -4.0;
  double temperature = 0.1;
  // Off: canonical match, then a looser match treating '-' and '_' as
  // spaces, then the softmax blend. On: only a canonical match is accepted
  // and a missing profession is an error.
  bool exact_match_required = false;

  void validate() const;
};

class DegenerateLatentError : public ValidationError {
 public:
  DegenerateLatentError() : ValidationError("degenerate job latent: every activation is zero") {}
};

class UnknownProfessionError : public ValidationError {
 public:
  explicit UnknownProfessionError(std::string_view name)
      : ValidationError("profession '" + std::string(name) + "' is not in the direction bank") {}
};

// Canonical-name lookup; nullopt when the bank has no such profession.
std::optional<std::size_t> route_known(std::string_view profession, const DirectionBank& bank);
// Canonical lookup first, then '-' and '_' folded to spaces on both sides.
std::optional<std::size_t> route_fuzzy(std::string_view profession, const DirectionBank& bank);

double cosine_similarity(std::span<const float> a, std::span<const float> b);

// Temperature softmax over cosine similarities, indexed by bank-local id.
std::vector<double> softmax_weights(std::span<const float> h_job, const DirectionBank& bank,
                                    double temperature);

enum class Route : std::uint8_t { Known = 0, Softmax = 1 };
std::string_view route_name(Route r);

struct FinalDirection {
  Route route = Route::Known;
  std::optional<std::size_t> entry;  // set on the known route
  std::vector<double> weights;       // per bank entry on the softmax route, empty otherwise
  std::vector<float> direction;
};

FinalDirection final_direction(std::span<const float> h_job, const DirectionBank& bank,
                               std::string_view profession, const SteeringConfig& config);

// W_dec * (gamma * dir), no b_pre. Accumulated in 64 bits and rounded once.
std::vector<float> decode_direction(std::span<const float> direction, double gamma,
                                    const SaeParams& params);

struct SteeringDelta {
  std::uint64_t prompt_id = 0;
  std::string profession;
  std::uint32_t token_position = 0;
  Route route = Route::Known;
  // Set when the job latent was all zero; the delta is then zero.
  bool degenerate = false;
  // Bank profession name and weight, bank order; empty on the known route.
  std::vector<std::pair<std::string, double>> weights;
  std::vector<float> delta;

  bool operator==(const SteeringDelta&) const = default;
};

struct PromptInput {
  std::uint64_t prompt_id = 0;
  std::string profession;
  std::uint32_t token_position = 0;
  std::span<const float> z_job;
};

// Holds a bank and checkpoint whose fingerprints were checked to agree.
class Steerer {
 public:
  Steerer(const DirectionBank& bank, const SaeParams& params, SteeringConfig config);
  Steerer(const DirectionBank& bank, const SaeParams& params, const Fingerprint& params_fingerprint,
          SteeringConfig config);

  // A degenerate job latent on the softmax route yields a zero delta with
  // `degenerate` set instead of an error.
  SteeringDelta emit(const PromptInput& prompt) const;

  const SteeringConfig& config() const { return config_; }
  const Fingerprint& fingerprint() const { return bank_.sae_fingerprint; }

 private:
  const DirectionBank& bank_;
  const SaeParams& params_;
  SteeringConfig config_;
};

SteeringDelta emit_delta(const PromptInput& prompt, const DirectionBank& bank,
                         const SaeParams& params, const SteeringConfig& config);

// z + delta, elementwise in 32-bit.
std::vector<float> apply_delta(std::span<const float> z, std::span<const float> delta);

struct DeltaBatch {
  double gamma = -4.0;
  double temperature = 0.1;
  Fingerprint sae_fingerprint{};
  std::uint32_t d = 0;
  std::vector<SteeringDelta> deltas;

  void validate() const;
  bool operator==(const DeltaBatch&) const = default;
};

std::string delta_jsonl(const DeltaBatch& batch);
DeltaBatch parse_delta_jsonl(std::string_view text, const std::string& path);

std::vector<std::uint8_t> serialize_delta_batch(const DeltaBatch& batch);
DeltaBatch parse_delta_batch(std::span<const std::uint8_t> bytes, const std::string& path);

// Binary when the path ends in ".saed", JSON Lines otherwise.
void write_delta_file(const std::string& path, const DeltaBatch& batch);
// Detects the shape from the magic.
DeltaBatch read_delta_file(const std::string& path);

}  // namespace saesteer
