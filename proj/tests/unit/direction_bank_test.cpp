#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "saesteer/checkpoint.hpp"
#include "saesteer/direction_bank.hpp"
#include "saesteer/feature_file.hpp"
#include "saesteer/manifest.hpp"

using namespace saesteer;

namespace {

// d=4, m=8: latent i < 4 reads feature i, the rest never fire.
SaeParams passthrough_sae() {
  auto p = SaeParams::zeros(4, 8, 2);
  for (std::size_t i = 0; i < 4; ++i) {
    p.w_enc[i * 4 + i] = 1.0f;
    p.w_dec[i * 8 + i] = 1.0f;
  }
  return p;
}

LabeledLatent latent(std::vector<float> v, Gender g, std::uint32_t prof = 0) {
  return {std::move(v), g, prof};
}

struct RandomFixture {
  SaeParams params;
  std::vector<oracle::OracleRecord> records;
};

RandomFixture random_fixture(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  RandomFixture f;
  f.params = oracle::random_params(8, 32, 4, rng).cast<float>();
  std::normal_distribution<float> n01(0.0f, 1.0f);
  for (std::uint32_t prof = 0; prof < 2; ++prof) {
    for (const Gender g : {Gender::Male, Gender::Female}) {
      for (int s = 0; s < 5 + static_cast<int>(prof); ++s) {
        std::vector<float> z(8);
        for (auto& v : z) v = n01(rng) + (g == Gender::Male ? 0.3f : -0.3f);
        f.records.push_back({g, prof, std::move(z)});
      }
    }
  }
  return f;
}

void write_fixture(const RandomFixture& f, const std::string& path, PositionKind kind,
                   bool swap_gender = false) {
  std::vector<FeatureRecord> recs;
  for (const auto& r : f.records) {
    Gender g = r.gender;
    if (swap_gender) g = g == Gender::Male ? Gender::Female : Gender::Male;
    recs.push_back({g, r.profession_id, 3, r.z});
  }
  write_feature_file(path, 8, kind, recs);
  FeatureManifest manifest;
  manifest.intern("Nurse");
  manifest.intern("Software  Engineer");
  write_manifest(manifest_path_for(path), manifest);
}

}  // namespace

TEST(DirectionMeans, HandExample) {
  const std::vector<LabeledLatent> ls{latent({1, 0}, Gender::Male), latent({3, 0}, Gender::Male),
                                      latent({0, 2}, Gender::Female),
                                      latent({0, 4}, Gender::Female),
                                      latent({9, 9}, Gender::Female, 1)};
  const auto means = compute_means(ls, 0);
  EXPECT_EQ(means.male, (std::vector<double>{2, 0}));
  EXPECT_EQ(means.female, (std::vector<double>{0, 3}));
  EXPECT_EQ(means.n_male, 2u);
  EXPECT_EQ(means.n_female, 2u);
  EXPECT_EQ(compute_direction(means, DirectionStrategy::JobTokenDiff),
            (std::vector<float>{2, -3}));
  EXPECT_EQ(compute_direction(means, DirectionStrategy::EosDiff), (std::vector<float>{2, -3}));
  EXPECT_EQ(compute_direction(means, DirectionStrategy::ProfessionAverage),
            (std::vector<float>{1, 1.5f}));
}

TEST(DirectionMeans, SingleSamplePerGender) {
  const std::vector<LabeledLatent> ls{latent({0.25f, 7}, Gender::Male),
                                      latent({1, 0.5f}, Gender::Female)};
  const auto means = compute_means(ls, 0);
  EXPECT_EQ(means.male, (std::vector<double>{0.25, 7}));
  EXPECT_EQ(means.female, (std::vector<double>{1, 0.5}));
}

TEST(DirectionMeans, DuplicationLeavesMeansUnchanged) {
  std::vector<LabeledLatent> ls{latent({0.1f, 0.7f}, Gender::Male),
                                latent({0.3f, 0.2f}, Gender::Male),
                                latent({0.9f, 0.4f}, Gender::Female)};
  const auto once = compute_means(ls, 0);
  const auto copy = ls;
  ls.insert(ls.end(), copy.begin(), copy.end());
  const auto twice = compute_means(ls, 0);
  EXPECT_EQ(once.male, twice.male);
  EXPECT_EQ(once.female, twice.female);
}

TEST(DirectionMeans, MissingGenderNamed) {
  const std::vector<LabeledLatent> ls{latent({1, 0}, Gender::Male, 7)};
  try {
    compute_means(ls, 7);
    FAIL();
  } catch (const MissingGenderError& e) {
    EXPECT_EQ(e.profession_id(), 7u);
    EXPECT_EQ(e.missing(), Gender::Female);
  }
}

TEST(DirectionMeans, DegenerateDirections) {
  const GenderMeans same{{1, 2}, {1, 2}, 3, 4};
  EXPECT_EQ(compute_direction(same, DirectionStrategy::JobTokenDiff), (std::vector<float>{0, 0}));
  const GenderMeans opposite{{1, -2}, {-1, 2}, 5, 5};
  EXPECT_EQ(compute_direction(opposite, DirectionStrategy::ProfessionAverage),
            (std::vector<float>{0, 0}));
}

TEST(BuildBank, HandBuiltFile) {
  oracle::TempDir dir;
  const auto sae = passthrough_sae();
  const std::string feats = dir.file("hand.saef");
  write_feature_file(feats, 4, PositionKind::JobToken,
                     {{Gender::Male, 0, 2, {1, 0, 0, 0}},
                      {Gender::Male, 0, 2, {3, 0, 0, 0}},
                      {Gender::Female, 0, 2, {0, 2, 0, 0}},
                      {Gender::Female, 0, 2, {0, 4, -5, 0}},
                      {Gender::Male, 1, 4, {0, 0, 1, 1}},
                      {Gender::Male, 1, 4, {0, 0, 1, 3}},
                      {Gender::Female, 1, 4, {0, 0, 2, 0}},
                      {Gender::Female, 1, 4, {0, 0, 0, 0}}});
  FeatureManifest manifest;
  manifest.intern("Nurse");
  manifest.intern("Pilot");
  FeatureFileReader reader(feats);
  const auto result = build_bank(reader, manifest, sae, {});
  ASSERT_EQ(result.bank.size(), 2u);
  EXPECT_EQ(result.bank.entries[0].name, "nurse");
  EXPECT_EQ(result.bank.entries[0].direction, (std::vector<float>{2, -3, 0, 0, 0, 0, 0, 0}));
  EXPECT_EQ(result.bank.entries[1].name, "pilot");
  EXPECT_EQ(result.bank.entries[1].direction, (std::vector<float>{0, 0, 0, 2, 0, 0, 0, 0}));
  EXPECT_EQ(result.bank.sae_fingerprint, sae_fingerprint(sae));
  EXPECT_EQ(result.report.records, 8u);
  EXPECT_TRUE(result.report.skipped.empty());
  EXPECT_FALSE(result.report.position_mismatch);
}

TEST(BuildBank, MatchesBruteForceOracle) {
  oracle::TempDir dir;
  const auto f = random_fixture(17);
  write_fixture(f, dir.file("f.saef"), PositionKind::JobToken);
  write_checkpoint(dir.file("sae.saem"), f.params);
  const auto result = build_bank(dir.file("f.saef"), dir.file("sae.saem"), {});
  ASSERT_EQ(result.bank.size(), 2u);
  EXPECT_EQ(result.bank.entries[1].name, "software engineer");
  for (std::uint32_t prof = 0; prof < 2; ++prof) {
    const auto ref = oracle::brute_force_direction(f.records, prof, f.params);
    const auto& got = result.bank.entries[prof].direction;
    for (std::size_t j = 0; j < ref.size(); ++j) EXPECT_NEAR(got[j], ref[j], 1e-6) << j;
  }
  EXPECT_EQ(result.bank.entries[0].n_male, 5u);
  EXPECT_EQ(result.bank.entries[1].n_female, 6u);
}

TEST(BuildBank, SwappingGendersNegatesDirections) {
  oracle::TempDir dir;
  const auto f = random_fixture(18);
  write_fixture(f, dir.file("a.saef"), PositionKind::JobToken);
  write_fixture(f, dir.file("b.saef"), PositionKind::JobToken, true);
  write_checkpoint(dir.file("sae.saem"), f.params);
  const auto a = build_bank(dir.file("a.saef"), dir.file("sae.saem"), {});
  const auto b = build_bank(dir.file("b.saef"), dir.file("sae.saem"), {});
  ASSERT_EQ(a.bank.size(), b.bank.size());
  for (std::size_t e = 0; e < a.bank.size(); ++e) {
    for (std::size_t j = 0; j < a.bank.m; ++j) {
      EXPECT_EQ(a.bank.entries[e].direction[j], -b.bank.entries[e].direction[j]);
    }
  }
}

TEST(BuildBank, OneGenderOnlyIsSkipped) {
  oracle::TempDir dir;
  const std::string feats = dir.file("m.saef");
  write_feature_file(feats, 4, PositionKind::JobToken,
                     {{Gender::Male, 3, 0, {1, 0, 0, 0}}, {Gender::Male, 3, 0, {2, 0, 0, 0}}});
  FeatureFileReader reader(feats);
  const auto result = build_bank(reader, FeatureManifest{}, passthrough_sae(), {});
  EXPECT_TRUE(result.bank.empty());
  ASSERT_EQ(result.report.skipped.size(), 1u);
  EXPECT_EQ(result.report.skipped[0].profession_id, 3u);
  EXPECT_EQ(result.report.skipped[0].name, "profession_3");
  EXPECT_EQ(result.report.skipped[0].missing, Gender::Female);
}

TEST(BuildBank, EosStrategyOnCoincidingPositions) {
  oracle::TempDir dir;
  const auto f = random_fixture(19);
  write_fixture(f, dir.file("f.saef"), PositionKind::JobToken);
  write_checkpoint(dir.file("sae.saem"), f.params);
  const auto job = build_bank(dir.file("f.saef"), dir.file("sae.saem"), {});
  BankBuildOptions eos;
  eos.strategy = DirectionStrategy::EosDiff;
  const auto e = build_bank(dir.file("f.saef"), dir.file("sae.saem"), eos);
  EXPECT_EQ(job.bank.entries, e.bank.entries);
  EXPECT_TRUE(e.report.position_mismatch);
  EXPECT_FALSE(job.report.position_mismatch);
}

TEST(BuildBank, DimensionMismatchAndEmptyFile) {
  oracle::TempDir dir;
  write_feature_file(dir.file("d3.saef"), 3, PositionKind::JobToken,
                     {{Gender::Male, 0, 0, {1, 2, 3}}});
  FeatureFileReader r3(dir.file("d3.saef"));
  EXPECT_THROW(build_bank(r3, {}, passthrough_sae(), {}), DimensionError);
  write_feature_file(dir.file("empty.saef"), 4, PositionKind::JobToken, {});
  FeatureFileReader r0(dir.file("empty.saef"));
  EXPECT_THROW(build_bank(r0, {}, passthrough_sae(), {}), ValidationError);
}

TEST(BuildBank, ReportCountsMatchBank) {
  oracle::TempDir dir;
  const auto f = random_fixture(20);
  write_fixture(f, dir.file("f.saef"), PositionKind::JobToken);
  write_checkpoint(dir.file("sae.saem"), f.params);
  const auto r = build_bank(dir.file("f.saef"), dir.file("sae.saem"), {});
  std::uint64_t total = 0;
  for (const auto& e : r.bank.entries) total += e.n_male + e.n_female;
  EXPECT_EQ(total, r.report.records);
  const auto json = bank_report_json(r.bank, r.report);
  EXPECT_NE(json.find("\"profession_count\": 2"), std::string::npos);
}

TEST(Bank, FindCanonicalizesAndFingerprintCheck) {
  DirectionBank bank;
  bank.m = 2;
  bank.entries.push_back({"nurse", 1, 1, {1, 0}});
  EXPECT_EQ(bank.find("  NURSE "), 0u);
  EXPECT_FALSE(bank.find("doctor").has_value());
  Fingerprint other{};
  other[0] = 1;
  try {
    bank.check_fingerprint(other);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find(to_hex(other)), std::string::npos);
    EXPECT_NE(std::string(e.what()).find(to_hex(bank.sae_fingerprint)), std::string::npos);
  }
}

TEST(Bank, StrategyNames) {
  for (const auto s : {DirectionStrategy::JobTokenDiff, DirectionStrategy::EosDiff,
                       DirectionStrategy::ProfessionAverage}) {
    EXPECT_EQ(parse_strategy(strategy_name(s)), s);
  }
  EXPECT_THROW(parse_strategy("median"), ValidationError);
  EXPECT_EQ(required_position(DirectionStrategy::EosDiff), PositionKind::Eos);
  EXPECT_EQ(required_position(DirectionStrategy::ProfessionAverage), PositionKind::JobToken);
}
