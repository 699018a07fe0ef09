#include <cmath>

#include <json.hpp>

#include "binary_io.hpp"
#include "saesteer/steering.hpp"

namespace saesteer {

namespace {

Fingerprint parse_hex_fingerprint(const std::string& hex, const std::string& path) {
  Fingerprint fp{};
  if (hex.size() != 64) throw ValidationError(path + ": sae_fingerprint must be 64 hex digits");
  auto nibble = [&](char c) -> std::uint8_t {
    if (c >= '0' && c <= '9') return static_cast<std::uint8_t>(c - '0');
    if (c >= 'a' && c <= 'f') return static_cast<std::uint8_t>(c - 'a' + 10);
    if (c >= 'A' && c <= 'F') return static_cast<std::uint8_t>(c - 'A' + 10);
    throw ValidationError(path + ": sae_fingerprint is not hexadecimal");
  };
  for (std::size_t i = 0; i < fp.size(); ++i) {
    fp[i] = static_cast<std::uint8_t>(nibble(hex[2 * i]) << 4 | nibble(hex[2 * i + 1]));
  }
  return fp;
}

Route parse_route(const std::string& s, const std::string& where) {
  if (s == "known") return Route::Known;
  if (s == "softmax") return Route::Softmax;
  throw ValidationError(where + ": unknown route '" + s + "'");
}

}  // namespace

std::string delta_jsonl(const DeltaBatch& batch) {
  batch.validate();
  std::string out;
  const std::string fp = to_hex(batch.sae_fingerprint);
  for (const auto& rec : batch.deltas) {
    nlohmann::ordered_json line;
    line["prompt_id"] = rec.prompt_id;
    line["profession"] = rec.profession;
    line["token_position"] = rec.token_position;
    line["gamma"] = batch.gamma;
    line["temperature"] = batch.temperature;
    line["route"] = route_name(rec.route);
    line["degenerate"] = rec.degenerate;
    line["weights"] = nlohmann::ordered_json::object();
    for (const auto& [name, w] : rec.weights) line["weights"][name] = w;
    auto& delta = line["delta"] = nlohmann::ordered_json::array();
    for (const float v : rec.delta) delta.push_back(static_cast<double>(v));
    line["sae_fingerprint"] = fp;
    out += line.dump();
    out += '\n';
  }
  return out;
}

DeltaBatch parse_delta_jsonl(std::string_view text, const std::string& path) {
  DeltaBatch batch;
  std::size_t line_no = 0;
  std::size_t start = 0;
  bool first = true;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view raw = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (raw.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    try {
      const auto line = nlohmann::ordered_json::parse(raw);
      SteeringDelta rec;
      rec.prompt_id = line.at("prompt_id").get<std::uint64_t>();
      rec.profession = line.value("profession", "");
      rec.token_position = line.at("token_position").get<std::uint32_t>();
      rec.route = parse_route(line.at("route").get<std::string>(), where);
      rec.degenerate = line.value("degenerate", false);
      for (const auto& [name, w] : line.at("weights").items()) {
        rec.weights.emplace_back(name, w.get<double>());
      }
      for (const auto& v : line.at("delta")) {
        const double x = v.get<double>();
        if (!std::isfinite(x)) throw ValidationError(where + ": delta entry is not finite");
        rec.delta.push_back(static_cast<float>(x));
      }
      const double gamma = line.at("gamma").get<double>();
      const double temperature = line.at("temperature").get<double>();
      const Fingerprint fp =
          parse_hex_fingerprint(line.at("sae_fingerprint").get<std::string>(), where);
      if (first) {
        batch.gamma = gamma;
        batch.temperature = temperature;
        batch.sae_fingerprint = fp;
        batch.d = static_cast<std::uint32_t>(rec.delta.size());
        first = false;
      } else if (gamma != batch.gamma || temperature != batch.temperature ||
                 fp != batch.sae_fingerprint) {
        throw ValidationError(where + ": gamma, temperature or fingerprint differs from line 1");
      }
      batch.deltas.push_back(std::move(rec));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(where + ": malformed delta record: " + e.what());
    }
  }
  batch.validate();
  return batch;
}

std::vector<std::uint8_t> serialize_delta_batch(const DeltaBatch& batch) {
  batch.validate();
  io::ByteWriter w;
  w.magic("SAED");
  w.u16(kDeltaFileVersion);
  w.u32(batch.d);
  w.u32(static_cast<std::uint32_t>(batch.deltas.size()));
  w.raw(batch.sae_fingerprint);
  w.f64(batch.gamma);
  w.f64(batch.temperature);
  for (const auto& rec : batch.deltas) {
    w.u64(rec.prompt_id);
    w.u32(rec.token_position);
    w.u8(static_cast<std::uint8_t>(rec.route));
    w.u8(rec.degenerate ? 1 : 0);
    w.string16(rec.profession);
    w.u32(static_cast<std::uint32_t>(rec.weights.size()));
    for (const auto& [name, weight] : rec.weights) {
      w.string16(name);
      w.f64(weight);
    }
    w.f32s(rec.delta);
  }
  w.seal();
  return std::move(w.bytes());
}

DeltaBatch parse_delta_batch(std::span<const std::uint8_t> bytes, const std::string& path) {
  io::ByteReader r(bytes, path);
  r.expect_magic("SAED");
  const std::uint64_t version_at = r.offset();
  const std::uint16_t version = r.u16();
  if (version != kDeltaFileVersion) {
    r.fail("unsupported delta file version " + std::to_string(version), version_at);
  }
  DeltaBatch batch;
  batch.d = r.u32();
  const std::uint32_t count = r.u32();
  for (auto& b : batch.sae_fingerprint) b = r.u8();
  batch.gamma = r.f64();
  batch.temperature = r.f64();
  batch.deltas.reserve(std::min<std::size_t>(count, r.remaining()));
  for (std::uint32_t i = 0; i < count; ++i) {
    SteeringDelta rec;
    rec.prompt_id = r.u64();
    rec.token_position = r.u32();
    const std::uint64_t route_at = r.offset();
    const std::uint8_t route = r.u8();
    if (route > 1) r.fail("unknown route " + std::to_string(route), route_at);
    rec.route = static_cast<Route>(route);
    const std::uint64_t flag_at = r.offset();
    const std::uint8_t flag = r.u8();
    if (flag > 1) r.fail("invalid degenerate flag", flag_at);
    rec.degenerate = flag != 0;
    rec.profession = r.string16();
    const std::uint32_t n_weights = r.u32();
    for (std::uint32_t j = 0; j < n_weights; ++j) {
      std::string name = r.string16();
      rec.weights.emplace_back(std::move(name), r.f64());
    }
    rec.delta.resize(batch.d);
    r.f32s(rec.delta);
    batch.deltas.push_back(std::move(rec));
  }
  r.verify_seal();
  try {
    batch.validate();
  } catch (const ValidationError& e) {
    throw FormatError(path, 0, std::string("delta file violates invariants: ") + e.what());
  }
  return batch;
}

void write_delta_file(const std::string& path, const DeltaBatch& batch) {
  if (path.size() >= 5 && path.compare(path.size() - 5, 5, ".saed") == 0) {
    io::write_file_atomic(path, serialize_delta_batch(batch));
  } else {
    io::write_text_atomic(path, delta_jsonl(batch));
  }
}

DeltaBatch read_delta_file(const std::string& path) {
  const auto bytes = io::read_file(path);
  if (bytes.size() >= 4 && std::equal(bytes.begin(), bytes.begin() + 4, "SAED")) {
    return parse_delta_batch(bytes, path);
  }
  return parse_delta_jsonl(
      std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()), path);
}

}  // namespace saesteer
