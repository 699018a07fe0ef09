#include <gtest/gtest.h>

#include <cstring>
#include <functional>
#include <random>

#include "oracles.hpp"
#include "saesteer/checkpoint.hpp"
#include "saesteer/direction_bank.hpp"
#include "saesteer/feature_file.hpp"
#include "saesteer/manifest.hpp"
#include "saesteer/steering.hpp"

using namespace saesteer;

namespace {

std::vector<FeatureRecord> random_records(std::size_t n, std::uint32_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n01(0.0f, 1.0f);
  std::vector<FeatureRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    FeatureRecord r;
    r.gender = (i % 2) ? Gender::Female : Gender::Male;
    r.profession_id = static_cast<std::uint32_t>(i % 3);
    r.token_position = static_cast<std::uint32_t>(i % 7 + 1);
    r.features.resize(d);
    for (auto& v : r.features) v = n01(rng);
    out.push_back(std::move(r));
  }
  return out;
}

SaeParams sample_params() {
  std::mt19937_64 rng(3);
  return oracle::random_params(4, 8, 2, rng).cast<float>();
}

DirectionBank sample_bank() {
  DirectionBank bank;
  bank.strategy = DirectionStrategy::ProfessionAverage;
  bank.m = 8;
  bank.sae_fingerprint = sae_fingerprint(sample_params());
  bank.entries.push_back({"nurse", 3, 4, {0.5f, -1e-30f, 0, 1, 2, 3, -0.0f, 7}});
  bank.entries.push_back({"software engineer", 1, 9, {1, 2, 3, 4, 5, 6, 7, 8}});
  return bank;
}

DeltaBatch sample_deltas() {
  DeltaBatch batch;
  batch.gamma = -4.0;
  batch.temperature = 0.1;
  batch.sae_fingerprint = sae_fingerprint(sample_params());
  batch.d = 4;
  SteeringDelta a;
  a.prompt_id = 0;
  a.profession = "nurse";
  a.token_position = 5;
  a.route = Route::Known;
  a.delta = {0.1f, -0.2f, 3.4028235e38f, 1e-45f};
  SteeringDelta b;
  b.prompt_id = 1ull << 40;
  b.profession = "astronaut";
  b.token_position = 6;
  b.route = Route::Softmax;
  b.weights = {{"nurse", 0.3}, {"software engineer", 0.7}};
  b.delta = {0.1f / 3.0f, 1.0f / 7.0f, -0.0f, 2.0f};
  SteeringDelta c;
  c.prompt_id = 2;
  c.profession = "unseen";
  c.token_position = 1;
  c.route = Route::Softmax;
  c.degenerate = true;
  c.delta = {0, 0, 0, 0};
  batch.deltas = {a, b, c};
  return batch;
}

bool same_bits(const std::vector<float>& a, const std::vector<float>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * 4) == 0;
}

// Runs `load` and returns the offset of the FormatError it throws, or -1.
std::int64_t error_offset(const std::function<void()>& load) {
  try {
    load();
  } catch (const FormatError& e) {
    return static_cast<std::int64_t>(e.offset());
  }
  return -1;
}

void check_truncations(const std::vector<std::uint8_t>& bytes,
                       const std::function<void(const std::vector<std::uint8_t>&)>& load) {
  for (std::size_t len = 0; len < bytes.size(); ++len) {
    const std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(len));
    EXPECT_EQ(error_offset([&] { load(cut); }), static_cast<std::int64_t>(len)) << "length " << len;
  }
}

void check_crc(std::vector<std::uint8_t> bytes, std::size_t flip_at,
               const std::function<void(const std::vector<std::uint8_t>&)>& load) {
  bytes[flip_at] ^= 0x01;
  EXPECT_EQ(error_offset([&] { load(bytes); }), static_cast<std::int64_t>(bytes.size() - 4));
}

}  // namespace

TEST(FeatureFile, RoundTrip) {
  oracle::TempDir dir;
  const auto records = random_records(37, 6, 1);
  const auto path = dir.file("a.saef");
  write_feature_file(path, 6, PositionKind::JobToken, records);
  const auto [header, back] = read_feature_file(path);
  EXPECT_EQ(header.d, 6u);
  EXPECT_EQ(header.record_count, 37u);
  EXPECT_EQ(header.position_kind, PositionKind::JobToken);
  ASSERT_EQ(back.size(), records.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].gender, records[i].gender);
    EXPECT_EQ(back[i].profession_id, records[i].profession_id);
    EXPECT_EQ(back[i].token_position, records[i].token_position);
    EXPECT_TRUE(same_bits(back[i].features, records[i].features));
  }
  const auto bytes = oracle::slurp(path);
  EXPECT_EQ(bytes.size(), kFeatureHeaderSize + 37 * (9 + 4 * 6) + 4);
  write_feature_file(dir.file("b.saef"), 6, PositionKind::JobToken, back);
  EXPECT_EQ(oracle::slurp(dir.file("b.saef")), bytes);

  const auto [mh, matrix] = load_feature_matrix(path);
  EXPECT_EQ(matrix.rows(), 37u);
  EXPECT_TRUE(same_bits(std::vector<float>(matrix.row(36).begin(), matrix.row(36).end()),
                        records[36].features));
}

TEST(FeatureFile, StreamingWriterMatchesBulk) {
  oracle::TempDir dir;
  const auto records = random_records(5, 3, 2);
  write_feature_file(dir.file("bulk"), 3, PositionKind::Eos, records);
  {
    FeatureFileWriter w(dir.file("stream"), 3, PositionKind::Eos);
    for (const auto& r : records) w.write(r);
    w.finish();
  }
  EXPECT_EQ(oracle::slurp(dir.file("stream")), oracle::slurp(dir.file("bulk")));
  {
    FeatureFileWriter w(dir.file("abandoned"), 3, PositionKind::Eos);
    w.write(records[0]);
  }
  EXPECT_FALSE(std::filesystem::exists(dir.file("abandoned")));
  EXPECT_FALSE(std::filesystem::exists(dir.file("abandoned.tmp")));
}

TEST(FeatureFile, WriterRejectsWrongDimension) {
  oracle::TempDir dir;
  FeatureFileWriter w(dir.file("x"), 3, PositionKind::Eos);
  FeatureRecord r;
  r.features = {1, 2};
  EXPECT_THROW(w.write(r), DimensionError);
}

TEST(FeatureFile, CorruptionOffsets) {
  oracle::TempDir dir;
  const auto path = dir.file("a.saef");
  write_feature_file(path, 3, PositionKind::JobToken, random_records(4, 3, 4));
  const auto bytes = oracle::slurp(path);
  auto load = [&](const std::vector<std::uint8_t>& b) {
    oracle::spit(dir.file("c.saef"), b);
    read_feature_file(dir.file("c.saef"));
  };
  check_truncations(bytes, load);
  check_crc(bytes, kFeatureHeaderSize + 9, load);  // low mantissa byte of a feature

  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_EQ(error_offset([&] { load(bad); }), 0);
  bad = bytes;
  bad[4] = 9;
  EXPECT_EQ(error_offset([&] { load(bad); }), 4);
  bad = bytes;
  bad[18] = 7;
  EXPECT_EQ(error_offset([&] { load(bad); }), 18);
  bad = bytes;
  bad[kFeatureHeaderSize + 21] = 5;  // gender of the second record
  EXPECT_EQ(error_offset([&] { load(bad); }), static_cast<std::int64_t>(kFeatureHeaderSize + 21));
  bad = bytes;
  bad.push_back(0);
  EXPECT_EQ(error_offset([&] { load(bad); }), static_cast<std::int64_t>(bytes.size()));
}

TEST(Checkpoint, RoundTripBitExact) {
  oracle::TempDir dir;
  auto p = sample_params();
  p.b_enc[1] = -0.0f;
  p.w_dec[3] = 1e-42f;
  const auto path = dir.file("c.saem");
  write_checkpoint(path, p);
  const auto back = read_checkpoint(path);
  EXPECT_TRUE(same_bits(back.w_enc, p.w_enc));
  EXPECT_TRUE(same_bits(back.b_enc, p.b_enc));
  EXPECT_TRUE(same_bits(back.w_dec, p.w_dec));
  EXPECT_TRUE(same_bits(back.b_pre, p.b_pre));
  EXPECT_EQ(back.k, p.k);
  EXPECT_EQ(back.normalize_decoder, p.normalize_decoder);
  EXPECT_EQ(serialize_checkpoint(back), oracle::slurp(path));
  EXPECT_EQ(sae_fingerprint(back), sae_fingerprint(p));
  EXPECT_EQ(to_hex(sae_fingerprint(p)).size(), 64u);
}

TEST(Checkpoint, CorruptionOffsets) {
  const auto bytes = serialize_checkpoint(sample_params());
  auto load = [](const std::vector<std::uint8_t>& b) { parse_checkpoint(b, "c.saem"); };
  check_truncations(bytes, load);
  check_crc(bytes, 40, load);
  auto bad = bytes;
  bad[2] = 'Z';
  EXPECT_EQ(error_offset([&] { load(bad); }), 0);
  bad = bytes;
  bad[5] = 1;
  EXPECT_EQ(error_offset([&] { load(bad); }), 4);
}

TEST(Checkpoint, FingerprintTracksEveryByte) {
  const auto p = sample_params();
  auto q = p;
  q.b_pre[0] = std::nextafter(q.b_pre[0], 10.0f);
  EXPECT_NE(sae_fingerprint(p), sae_fingerprint(q));
}

TEST(Bank, RoundTripBitExact) {
  oracle::TempDir dir;
  const auto bank = sample_bank();
  write_bank(dir.file("b.saeb"), bank);
  const auto back = read_bank(dir.file("b.saeb"));
  EXPECT_EQ(back.strategy, bank.strategy);
  EXPECT_EQ(back.m, bank.m);
  EXPECT_EQ(back.sae_fingerprint, bank.sae_fingerprint);
  ASSERT_EQ(back.size(), bank.size());
  for (std::size_t i = 0; i < bank.size(); ++i) {
    EXPECT_EQ(back.entries[i].name, bank.entries[i].name);
    EXPECT_EQ(back.entries[i].n_male, bank.entries[i].n_male);
    EXPECT_EQ(back.entries[i].n_female, bank.entries[i].n_female);
    EXPECT_TRUE(same_bits(back.entries[i].direction, bank.entries[i].direction));
  }
  EXPECT_EQ(serialize_bank(back), oracle::slurp(dir.file("b.saeb")));
}

TEST(Bank, CorruptionOffsets) {
  const auto bytes = serialize_bank(sample_bank());
  auto load = [](const std::vector<std::uint8_t>& b) { parse_bank(b, "b.saeb"); };
  check_truncations(bytes, load);
  check_crc(bytes, bytes.size() - 10, load);
  auto bad = bytes;
  bad[3] = 0;
  EXPECT_EQ(error_offset([&] { load(bad); }), 0);
  bad = bytes;
  bad[4] = 2;
  EXPECT_EQ(error_offset([&] { load(bad); }), 4);
}

TEST(Bank, InvalidContentRejected) {
  auto bank = sample_bank();
  bank.entries[1].name = "nurse";
  EXPECT_THROW(serialize_bank(bank), ValidationError);
  bank = sample_bank();
  bank.entries[0].direction.pop_back();
  EXPECT_THROW(serialize_bank(bank), ValidationError);
}

TEST(Deltas, BinaryRoundTripBitExact) {
  oracle::TempDir dir;
  const auto batch = sample_deltas();
  write_delta_file(dir.file("d.saed"), batch);
  const auto bytes = oracle::slurp(dir.file("d.saed"));
  ASSERT_GE(bytes.size(), 4u);
  EXPECT_EQ(std::memcmp(bytes.data(), "SAED", 4), 0);
  const auto back = read_delta_file(dir.file("d.saed"));
  EXPECT_EQ(back.gamma, batch.gamma);
  EXPECT_EQ(back.sae_fingerprint, batch.sae_fingerprint);
  ASSERT_EQ(back.deltas.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_TRUE(same_bits(back.deltas[i].delta, batch.deltas[i].delta));
    EXPECT_EQ(back.deltas[i].weights, batch.deltas[i].weights);
    EXPECT_EQ(back.deltas[i].prompt_id, batch.deltas[i].prompt_id);
    EXPECT_EQ(back.deltas[i].degenerate, batch.deltas[i].degenerate);
  }
  EXPECT_EQ(serialize_delta_batch(back), bytes);
}

TEST(Deltas, JsonLinesRoundTripBitExact) {
  oracle::TempDir dir;
  const auto batch = sample_deltas();
  write_delta_file(dir.file("d.jsonl"), batch);
  const auto back = read_delta_file(dir.file("d.jsonl"));
  ASSERT_EQ(back.deltas.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_TRUE(same_bits(back.deltas[i].delta, batch.deltas[i].delta)) << i;
    EXPECT_EQ(back.deltas[i].weights, batch.deltas[i].weights);
    EXPECT_EQ(back.deltas[i].route, batch.deltas[i].route);
    EXPECT_EQ(back.deltas[i].token_position, batch.deltas[i].token_position);
    EXPECT_EQ(back.deltas[i].profession, batch.deltas[i].profession);
  }
  EXPECT_EQ(back.temperature, batch.temperature);
  EXPECT_EQ(delta_jsonl(back), delta_jsonl(batch));

  const auto text = delta_jsonl(batch);
  const auto first = text.substr(0, text.find('\n'));
  for (const char* key : {"\"prompt_id\"", "\"profession\"", "\"token_position\"", "\"gamma\"",
                          "\"temperature\"", "\"route\"", "\"weights\"", "\"delta\"",
                          "\"degenerate\"", "\"sae_fingerprint\""}) {
    EXPECT_NE(first.find(key), std::string::npos) << key;
  }
}

TEST(Deltas, CorruptionOffsets) {
  const auto bytes = serialize_delta_batch(sample_deltas());
  auto load = [](const std::vector<std::uint8_t>& b) { parse_delta_batch(b, "d.saed"); };
  check_truncations(bytes, load);
  check_crc(bytes, 70, load);
  auto bad = bytes;
  bad[0] = 's';
  EXPECT_EQ(error_offset([&] { load(bad); }), 0);
  bad = bytes;
  bad[4] = 3;
  EXPECT_EQ(error_offset([&] { load(bad); }), 4);
}

TEST(Deltas, InvalidBatchesRejected) {
  auto batch = sample_deltas();
  batch.deltas[1].weights[0].second = 0.4;
  EXPECT_THROW(batch.validate(), ValidationError);
  batch = sample_deltas();
  batch.deltas[0].weights = {{"nurse", 1.0}};
  EXPECT_THROW(batch.validate(), ValidationError);
  batch = sample_deltas();
  batch.deltas[2].delta.push_back(0);
  EXPECT_THROW(batch.validate(), ValidationError);

  const auto lines = delta_jsonl(sample_deltas());
  std::string tampered = lines;
  const auto pos = tampered.rfind("\"gamma\":-4.0");
  ASSERT_NE(pos, std::string::npos);
  tampered.replace(pos, 12, "\"gamma\":-3.0");
  EXPECT_THROW(parse_delta_jsonl(tampered, "t.jsonl"), ValidationError);
  EXPECT_THROW(parse_delta_jsonl("{not json}\n", "t.jsonl"), ValidationError);
}

TEST(Manifest, RoundTrip) {
  oracle::TempDir dir;
  FeatureManifest m;
  EXPECT_EQ(m.intern("Nurse"), 0u);
  EXPECT_EQ(m.intern("Software   Engineer "), 1u);
  EXPECT_EQ(m.intern("nurse"), 0u);
  m.professions[7] = "pilot";
  m.source_model = "clip-vit-l-14";
  m.layer = "11";
  m.extraction_date = "2024-01-01";
  const auto path = manifest_path_for(dir.file("f.saef"));
  EXPECT_EQ(path, dir.file("f.saef") + ".manifest.json");
  write_manifest(path, m);
  auto back = read_manifest(path);
  EXPECT_EQ(back.professions, m.professions);
  EXPECT_EQ(back.source_model, m.source_model);
  EXPECT_EQ(back.layer, m.layer);
  EXPECT_EQ(back.extraction_date, m.extraction_date);
  EXPECT_EQ(back.find("SOFTWARE ENGINEER"), 1u);
  EXPECT_EQ(back.name_or_placeholder(3), "profession_3");
  EXPECT_EQ(back.intern("judge"), 8u);
}

TEST(Manifest, MalformedRejected) {
  oracle::TempDir dir;
  const auto path = dir.file("m.json");
  oracle::spit(path, {'{', '}'});
  EXPECT_THROW(read_manifest(path), ValidationError);
  const std::string dup = R"({"professions": {"0": "nurse", "1": "Nurse"}})";
  oracle::spit(path, std::vector<std::uint8_t>(dup.begin(), dup.end()));
  EXPECT_THROW(read_manifest(path), ValidationError);
  EXPECT_THROW(read_manifest(dir.file("missing.json")), IoError);
}
