#include "saesteer/checkpoint.hpp"

#include <openssl/sha.h>

#include <cstdio>
#include <sstream>

#include "binary_io.hpp"

namespace saesteer {

std::vector<std::uint8_t> serialize_checkpoint(const SaeParams& params) {
  params.validate();
  io::ByteWriter w;
  w.magic("SAEM");
  w.u16(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(params.d));
  w.u32(static_cast<std::uint32_t>(params.m));
  w.u32(static_cast<std::uint32_t>(params.k));
  w.u8(params.normalize_decoder ? 1 : 0);
  w.f32s(params.w_enc);
  w.f32s(params.b_enc);
  w.f32s(params.w_dec);
  w.f32s(params.b_pre);
  w.seal();
  return std::move(w.bytes());
}

SaeParams parse_checkpoint(std::span<const std::uint8_t> bytes, const std::string& path) {
  io::ByteReader r(bytes, path);
  r.expect_magic("SAEM");
  const std::uint64_t version_at = r.offset();
  const std::uint16_t version = r.u16();
  if (version != kCheckpointVersion) {
    r.fail("unsupported checkpoint version " + std::to_string(version), version_at);
  }
  const std::uint64_t dims_at = r.offset();
  const std::size_t d = r.u32();
  const std::size_t m = r.u32();
  const std::size_t k = r.u32();
  if (d == 0 || m == 0 || k == 0 || k > m) r.fail("invalid checkpoint dimensions", dims_at);
  const std::uint64_t flag_at = r.offset();
  const std::uint8_t flag = r.u8();
  if (flag > 1) r.fail("invalid normalize_decoder flag", flag_at);

  const std::uint64_t payload = (2 * m * d + m + d) * 4 + 4;
  if (r.remaining() < payload) r.fail("unexpected end of data", bytes.size());

  SaeParams p = SaeParams::zeros(d, m, k);
  p.normalize_decoder = flag != 0;
  r.f32s(p.w_enc);
  r.f32s(p.b_enc);
  r.f32s(p.w_dec);
  r.f32s(p.b_pre);
  r.verify_seal();
  try {
    p.validate();
  } catch (const ValidationError& e) {
    throw FormatError(path, dims_at, std::string("checkpoint violates invariants: ") + e.what());
  }
  return p;
}

void write_checkpoint(const std::string& path, const SaeParams& params) {
  io::write_file_atomic(path, serialize_checkpoint(params));
}

SaeParams read_checkpoint(const std::string& path) {
  return parse_checkpoint(io::read_file(path), path);
}

Fingerprint sae_fingerprint(const SaeParams& params) {
  const auto bytes = serialize_checkpoint(params);
  Fingerprint fp{};
  SHA256(bytes.data(), bytes.size(), fp.data());
  return fp;
}

void write_loss_history_csv(const std::string& path, std::span<const LossRecord> history) {
  std::ostringstream out;
  out << "step,mse,aux\n";
  char line[96];
  for (const auto& rec : history) {
    std::snprintf(line, sizeof line, "%zu,%.17g,%.17g\n", rec.step, rec.mse, rec.aux);
    out << line;
  }
  io::write_text_atomic(path, out.str());
}

}  // namespace saesteer
