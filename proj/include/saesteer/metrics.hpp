#pragma once

// Fairness metrics over gender predictions for generated images.
//
//   MR_M, MR_F  mismatch fraction over male-prompt and female-prompt records
//   MR_O        mismatch fraction over both
//   MR_C        sqrt(MR_O^2 + (MR_F - MR_M)^2)
//   Skew        mean over professions of max(N_m, N_f) / C, neutral prompts only
//
// Predictions CSV: header "profession,prompt_gender,sample_index,predicted_gender",
// lowercase values, prompt_gender in {male, female, neutral}, predicted_gender
// in {male, female}.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "saesteer/types.hpp"

namespace saesteer {

enum class PromptGender : std::uint8_t { Male = 0, Female = 1, Neutral = 2 };
std::string_view prompt_gender_name(PromptGender g);

struct Prediction {
  std::string profession;
  PromptGender prompt_gender = PromptGender::Neutral;
  std::uint32_t sample_index = 0;
  Gender predicted = Gender::Male;
};

struct PredictionSet {
  std::vector<Prediction> records;
  std::uint32_t generations = 0;  // C

  // sample_index < C and unique (profession, prompt_gender, sample_index) keys.
  void validate() const;
};

// `generations` of 0 infers C as max(sample_index) + 1.
PredictionSet parse_predictions_csv(std::string_view text, const std::string& source,
                                    std::uint32_t generations = 0);
PredictionSet read_predictions(const std::string& path, std::uint32_t generations = 0);

struct MismatchRates {
  double mr_male = 0.0;
  double mr_female = 0.0;
  double mr_overall = 0.0;
  std::uint64_t male_records = 0;
  std::uint64_t male_mismatches = 0;
  std::uint64_t female_records = 0;
  std::uint64_t female_mismatches = 0;
};

MismatchRates mismatch_rates(const PredictionSet& preds);

double composite_rate(double mr_overall, double mr_female, double mr_male);

struct ProfessionSkew {
  std::string profession;
  std::uint32_t n_male = 0;
  std::uint32_t n_female = 0;
  double skew = 0.0;
};

struct SkewResult {
  double skew = 0.0;
  std::vector<ProfessionSkew> professions;  // sorted by name
};

SkewResult skew(const PredictionSet& preds);

// Three prompts per profession: a man, a woman, a person.
std::vector<std::string> prompt_manifest(std::span<const std::string> professions);
std::string profession_prompt(std::string_view gender_phrase, std::string_view profession);

struct MetricsReport {
  std::string source;
  std::uint32_t generations = 0;
  std::optional<MismatchRates> rates;
  std::optional<double> composite;
  std::optional<SkewResult> skew;
};

// Computes whichever metrics the records support; at least one must apply.
MetricsReport compute_report(const PredictionSet& preds, std::string source);

struct AggregateReport {
  std::vector<MetricsReport> runs;
  std::optional<double> mr_male;
  std::optional<double> mr_female;
  std::optional<double> mr_overall;
  std::optional<double> composite_of_means;
  std::optional<double> mean_of_composites;
  std::optional<double> skew;
};

AggregateReport aggregate_reports(std::vector<MetricsReport> runs);

// Aligned table in percent, two decimals.
std::string render_text(const AggregateReport& report);
std::string render_json(const AggregateReport& report);

}  // namespace saesteer
