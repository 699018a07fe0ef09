#include "saesteer/direction_bank.hpp"

#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include <json.hpp>

#include "binary_io.hpp"
#include "saesteer/checkpoint.hpp"

namespace saesteer {

std::string_view strategy_name(DirectionStrategy s) {
  switch (s) {
    case DirectionStrategy::JobTokenDiff:
      return "job-token-diff";
    case DirectionStrategy::EosDiff:
      return "eos-diff";
    case DirectionStrategy::ProfessionAverage:
      return "profession-average";
  }
  return "unknown";
}

DirectionStrategy parse_strategy(std::string_view name) {
  if (name == "job-token-diff") return DirectionStrategy::JobTokenDiff;
  if (name == "eos-diff") return DirectionStrategy::EosDiff;
  if (name == "profession-average") return DirectionStrategy::ProfessionAverage;
  throw ValidationError("unknown direction strategy '" + std::string(name) +
                        "' (expected job-token-diff, eos-diff or profession-average)");
}

PositionKind required_position(DirectionStrategy s) {
  return s == DirectionStrategy::EosDiff ? PositionKind::Eos : PositionKind::JobToken;
}

MissingGenderError::MissingGenderError(std::uint32_t profession_id, Gender missing)
    : ValidationError("profession " + std::to_string(profession_id) + " has no " +
                      std::string(gender_name(missing)) + " samples"),
      profession_id_(profession_id),
      missing_(missing) {}

namespace {

struct GenderSums {
  std::vector<double> male;
  std::vector<double> female;
  std::uint32_t n_male = 0;
  std::uint32_t n_female = 0;

  explicit GenderSums(std::size_t m) : male(m, 0.0), female(m, 0.0) {}

  void add(std::span<const float> latent, Gender g) {
    auto& sum = g == Gender::Male ? male : female;
    for (std::size_t j = 0; j < latent.size(); ++j) sum[j] += latent[j];
    ++(g == Gender::Male ? n_male : n_female);
  }

  GenderMeans means(std::uint32_t profession_id) const {
    if (n_male == 0) throw MissingGenderError(profession_id, Gender::Male);
    if (n_female == 0) throw MissingGenderError(profession_id, Gender::Female);
    GenderMeans out{male, female, n_male, n_female};
    for (auto& v : out.male) v /= n_male;
    for (auto& v : out.female) v /= n_female;
    return out;
  }
};

}  // namespace

GenderMeans compute_means(std::span<const LabeledLatent> latents, std::uint32_t profession_id) {
  std::size_t m = 0;
  for (const auto& l : latents) {
    if (l.profession_id != profession_id) continue;
    if (m == 0) m = l.latent.size();
    check_dimension("labeled latent", m, l.latent.size());
  }
  GenderSums sums(m);
  for (const auto& l : latents) {
    if (l.profession_id == profession_id) sums.add(l.latent, l.gender);
  }
  return sums.means(profession_id);
}

std::vector<float> compute_direction(const GenderMeans& means, DirectionStrategy strategy) {
  check_dimension("female mean", means.male.size(), means.female.size());
  std::vector<float> dir(means.male.size());
  if (strategy == DirectionStrategy::ProfessionAverage) {
    const double nm = means.n_male;
    const double nf = means.n_female;
    for (std::size_t j = 0; j < dir.size(); ++j) {
      dir[j] = static_cast<float>((nm * means.male[j] + nf * means.female[j]) / (nm + nf));
    }
  } else {
    for (std::size_t j = 0; j < dir.size(); ++j) {
      dir[j] = static_cast<float>(means.male[j] - means.female[j]);
    }
  }
  return dir;
}

std::optional<std::size_t> DirectionBank::find(std::string_view name) const {
  const std::string canon = canonical_name(name);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].name == canon) return i;
  }
  return std::nullopt;
}

void DirectionBank::validate() const {
  if (m == 0) throw ValidationError("direction bank has zero latent dimension");
  std::set<std::string> names;
  for (const auto& e : entries) {
    if (e.name.empty()) throw ValidationError("direction bank entry has an empty name");
    if (!names.insert(e.name).second) {
      throw ValidationError("direction bank has duplicate profession '" + e.name + "'");
    }
    if (e.n_male < 1 || e.n_female < 1) {
      throw ValidationError("direction bank entry '" + e.name + "' lacks samples of a gender");
    }
    check_dimension("bank direction", m, e.direction.size());
    for (const float v : e.direction) {
      if (!std::isfinite(v)) {
        throw ValidationError("direction bank entry '" + e.name + "' is not finite");
      }
    }
  }
}

void DirectionBank::check_fingerprint(const Fingerprint& checkpoint) const {
  if (checkpoint != sae_fingerprint) {
    throw ValidationError("direction bank was built from a different checkpoint (bank " +
                          to_hex(sae_fingerprint) + ", checkpoint " + to_hex(checkpoint) + ")");
  }
}

BankBuildResult build_bank(FeatureFileReader& features, const FeatureManifest& manifest,
                           const SaeParams& params, const BankBuildOptions& options) {
  const auto& header = features.header();
  check_dimension("feature file d vs checkpoint d", params.d, header.d);
  if (header.record_count == 0) {
    throw ValidationError("feature file " + features.path() + " has no records");
  }
  std::map<std::uint32_t, GenderSums> groups;
  BankBuildResult result;
  result.report.position_kind = header.position_kind;
  result.report.position_mismatch = header.position_kind != required_position(options.strategy);
  FeatureRecord rec;
  while (features.next(rec)) {
    const auto code = encode<float>(rec.features, params, options.encoder);
    auto it = groups.try_emplace(rec.profession_id, params.m).first;
    it->second.add(code.values, rec.gender);
    ++result.report.records;
  }

  result.bank.strategy = options.strategy;
  result.bank.m = params.m;
  result.bank.sae_fingerprint = sae_fingerprint(params);
  for (const auto& [id, sums] : groups) {
    const std::string name = manifest.name_or_placeholder(id);
    if (sums.n_male == 0 || sums.n_female == 0) {
      result.report.skipped.push_back({id, name,
                                       sums.n_male == 0 ? Gender::Male : Gender::Female,
                                       static_cast<std::uint64_t>(sums.n_male) + sums.n_female});
      continue;
    }
    const GenderMeans means = sums.means(id);
    result.bank.entries.push_back(
        {name, means.n_male, means.n_female, compute_direction(means, options.strategy)});
  }
  result.bank.validate();
  return result;
}

BankBuildResult build_bank(const std::string& feature_path, const std::string& checkpoint_path,
                           const BankBuildOptions& options) {
  const SaeParams params = read_checkpoint(checkpoint_path);
  FeatureManifest manifest;
  if (const auto mpath = manifest_path_for(feature_path); std::filesystem::exists(mpath)) {
    manifest = read_manifest(mpath);
  }
  FeatureFileReader reader(feature_path);
  return build_bank(reader, manifest, params, options);
}

std::vector<std::uint8_t> serialize_bank(const DirectionBank& bank) {
  bank.validate();
  io::ByteWriter w;
  w.magic("SAEB");
  w.u16(kBankFileVersion);
  w.u8(static_cast<std::uint8_t>(bank.strategy));
  w.u32(static_cast<std::uint32_t>(bank.m));
  w.u32(static_cast<std::uint32_t>(bank.entries.size()));
  w.raw(bank.sae_fingerprint);
  for (const auto& e : bank.entries) {
    w.string16(e.name);
    w.u32(e.n_male);
    w.u32(e.n_female);
    w.f32s(e.direction);
  }
  w.seal();
  return std::move(w.bytes());
}

DirectionBank parse_bank(std::span<const std::uint8_t> bytes, const std::string& path) {
  io::ByteReader r(bytes, path);
  r.expect_magic("SAEB");
  const std::uint64_t version_at = r.offset();
  const std::uint16_t version = r.u16();
  if (version != kBankFileVersion) {
    r.fail("unsupported bank version " + std::to_string(version), version_at);
  }
  DirectionBank bank;
  const std::uint64_t strategy_at = r.offset();
  const std::uint8_t strategy = r.u8();
  if (strategy > 2) r.fail("unknown direction strategy " + std::to_string(strategy), strategy_at);
  bank.strategy = static_cast<DirectionStrategy>(strategy);
  const std::uint64_t m_at = r.offset();
  bank.m = r.u32();
  if (bank.m == 0) r.fail("latent dimension is zero", m_at);
  const std::uint32_t count = r.u32();
  for (auto& b : bank.sae_fingerprint) b = r.u8();
  bank.entries.reserve(std::min<std::size_t>(count, r.remaining()));
  for (std::uint32_t i = 0; i < count; ++i) {
    BankEntry e;
    e.name = r.string16();
    e.n_male = r.u32();
    e.n_female = r.u32();
    e.direction.resize(bank.m);
    r.f32s(e.direction);
    bank.entries.push_back(std::move(e));
  }
  r.verify_seal();
  try {
    bank.validate();
  } catch (const ValidationError& e) {
    throw FormatError(path, 0, std::string("bank violates invariants: ") + e.what());
  }
  return bank;
}

void write_bank(const std::string& path, const DirectionBank& bank) {
  io::write_file_atomic(path, serialize_bank(bank));
}

DirectionBank read_bank(const std::string& path) { return parse_bank(io::read_file(path), path); }

std::string bank_report_json(const DirectionBank& bank, const BankBuildReport& report) {
  nlohmann::ordered_json doc;
  doc["strategy"] = strategy_name(bank.strategy);
  doc["m"] = bank.m;
  doc["sae_fingerprint"] = to_hex(bank.sae_fingerprint);
  doc["records"] = report.records;
  doc["position_kind"] = position_kind_name(report.position_kind);
  doc["position_mismatch"] = report.position_mismatch;
  doc["profession_count"] = bank.entries.size();
  doc["professions"] = nlohmann::ordered_json::array();
  for (const auto& e : bank.entries) {
    doc["professions"].push_back({{"name", e.name}, {"n_male", e.n_male}, {"n_female", e.n_female}});
  }
  doc["skipped"] = nlohmann::ordered_json::array();
  for (const auto& s : report.skipped) {
    doc["skipped"].push_back({{"profession_id", s.profession_id},
                              {"name", s.name},
                              {"missing_gender", gender_name(s.missing)},
                              {"records", s.records}});
  }
  return doc.dump(2) + "\n";
}

}  // namespace saesteer
