#pragma once

// Per-profession gender directions in the sparse latent space.
//
// For profession P with male latents {h_m} and female latents {h_f}:
//   JobTokenDiff, EosDiff:  dir = mean(h_m) - mean(h_f)
//   ProfessionAverage:      dir = (N_m mean(h_m) + N_f mean(h_f)) / (N_m + N_f)
// The two diff strategies share the formula and differ in which token's
// residual the feature file holds.
//
// Bank file ("SAEB"):
//   "SAEB" | version u16 | strategy u8 | m u32 | count u32 | fingerprint (32 bytes)
//   count x { name_len u16 | name (UTF-8) | n_male u32 | n_female u32 | m x f32 }
//   crc32 u32 over every preceding byte

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "saesteer/feature_file.hpp"
#include "saesteer/manifest.hpp"
#include "saesteer/sae.hpp"
#include "saesteer/types.hpp"

namespace saesteer {

inline constexpr std::uint16_t kBankFileVersion = 1;

enum class DirectionStrategy : std::uint8_t { JobTokenDiff = 0, EosDiff = 1, ProfessionAverage = 2 };

std::string_view strategy_name(DirectionStrategy s);
DirectionStrategy parse_strategy(std::string_view name);
// Token position a strategy's feature file must hold.
PositionKind required_position(DirectionStrategy s);

struct LabeledLatent {
  std::vector<float> latent;
  Gender gender = Gender::Male;
  std::uint32_t profession_id = 0;
};

struct GenderMeans {
  std::vector<double> male;
  std::vector<double> female;
  std::uint32_t n_male = 0;
  std::uint32_t n_female = 0;
};

class MissingGenderError : public ValidationError {
 public:
  MissingGenderError(std::uint32_t profession_id, Gender missing);
  std::uint32_t profession_id() const noexcept { return profession_id_; }
  Gender missing() const noexcept { return missing_; }

 private:
  std::uint32_t profession_id_;
  Gender missing_;
};

// Elementwise male and female means for one profession, 64-bit accumulation.
// Throws MissingGenderError when either gender has no sample.
GenderMeans compute_means(std::span<const LabeledLatent> latents, std::uint32_t profession_id);

std::vector<float> compute_direction(const GenderMeans& means, DirectionStrategy strategy);

struct BankEntry {
  std::string name;  // canonical
  std::uint32_t n_male = 0;
  std::uint32_t n_female = 0;
  std::vector<float> direction;

  bool operator==(const BankEntry&) const = default;
};

struct DirectionBank {
  DirectionStrategy strategy = DirectionStrategy::JobTokenDiff;
  std::size_t m = 0;
  Fingerprint sae_fingerprint{};
  std::vector<BankEntry> entries;  // index is the bank-local profession id

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
  // Bank-local id of the entry whose canonical name equals canonical_name(name).
  std::optional<std::size_t> find(std::string_view name) const;
  void validate() const;
  // Throws ValidationError naming both hashes when the bank was built from another checkpoint.
  void check_fingerprint(const Fingerprint& checkpoint) const;

  bool operator==(const DirectionBank&) const = default;
};

struct SkippedProfession {
  std::uint32_t profession_id = 0;
  std::string name;
  Gender missing = Gender::Male;
  std::uint64_t records = 0;
};

struct BankBuildReport {
  std::uint64_t records = 0;
  PositionKind position_kind = PositionKind::JobToken;
  // The file's token position differs from the one the strategy expects.
  bool position_mismatch = false;
  std::vector<SkippedProfession> skipped;
};

struct BankBuildOptions {
  DirectionStrategy strategy = DirectionStrategy::JobTokenDiff;
  EncodeMode encoder = EncodeMode::InferenceDense;
};

struct BankBuildResult {
  DirectionBank bank;
  BankBuildReport report;
};

// Encodes every record, groups by profession and computes one direction per
// profession that has both genders. Entries are ordered by source profession id.
BankBuildResult build_bank(FeatureFileReader& features, const FeatureManifest& manifest,
                           const SaeParams& params, const BankBuildOptions& options);

BankBuildResult build_bank(const std::string& feature_path, const std::string& checkpoint_path,
                           const BankBuildOptions& options);

std::vector<std::uint8_t> serialize_bank(const DirectionBank& bank);
DirectionBank parse_bank(std::span<const std::uint8_t> bytes, const std::string& path);
void write_bank(const std::string& path, const DirectionBank& bank);
DirectionBank read_bank(const std::string& path);

std::string bank_report_json(const DirectionBank& bank, const BankBuildReport& report);

}  // namespace saesteer
