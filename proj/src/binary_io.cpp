#include "binary_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <sstream>

#include "saesteer/types.hpp"

namespace saesteer {

std::string_view gender_name(Gender g) { return g == Gender::Male ? "male" : "female"; }

std::string_view position_kind_name(PositionKind kind) {
  return kind == PositionKind::Eos ? "eos" : "job_token";
}

std::string to_hex(const Fingerprint& fp) {
  std::ostringstream out;
  out << std::hex << std::setfill('0');
  for (const auto b : fp) out << std::setw(2) << static_cast<int>(b);
  return out.str();
}

std::string canonical_name(std::string_view name) {
  std::string out;
  out.reserve(name.size());
  bool pending_space = false;
  for (const char c : name) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

namespace io {

std::uint32_t crc32_update(std::uint32_t crc, std::span<const std::uint8_t> bytes) {
  uLong c = crc;
  const std::uint8_t* p = bytes.data();
  std::size_t left = bytes.size();
  while (left > 0) {
    const uInt chunk = static_cast<uInt>(std::min<std::size_t>(left, 1u << 30));
    c = ::crc32(c, p, chunk);
    p += chunk;
    left -= chunk;
  }
  return static_cast<std::uint32_t>(c);
}

std::uint32_t crc32_combine(std::uint32_t crc_a, std::uint32_t crc_b, std::uint64_t length_b) {
  return static_cast<std::uint32_t>(
      ::crc32_combine64(crc_a, crc_b, static_cast<z_off64_t>(length_b)));
}

void ByteWriter::string16(std::string_view s) {
  if (s.size() > 0xFFFF) throw ValidationError("string too long for a u16 length prefix");
  u16(static_cast<std::uint16_t>(s.size()));
  bytes_.insert(bytes_.end(), s.begin(), s.end());
}

const std::uint8_t* ByteReader::take(std::size_t n) {
  if (remaining() < n) fail("unexpected end of data", base_ + bytes_.size());
  const std::uint8_t* p = bytes_.data() + pos_;
  pos_ += n;
  return p;
}

void ByteReader::f32s(std::span<float> out) {
  const std::uint8_t* p = take(out.size() * 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::bit_cast<float>(static_cast<std::uint32_t>(load_le(p + 4 * i, 4)));
  }
}

std::string ByteReader::string16() {
  const std::uint16_t len = u16();
  const std::uint8_t* p = take(len);
  return std::string(reinterpret_cast<const char*>(p), len);
}

void ByteReader::expect_magic(std::string_view magic) {
  const std::uint64_t at = offset();
  const std::uint8_t* p = take(magic.size());
  if (!std::equal(magic.begin(), magic.end(), reinterpret_cast<const char*>(p))) {
    fail("bad magic, expected \"" + std::string(magic) + "\"", at);
  }
}

void ByteReader::verify_seal() {
  const std::size_t covered = pos_;
  const std::uint64_t at = offset();
  const std::uint32_t stored = u32();
  const std::uint32_t actual = crc32(bytes_.first(covered));
  if (stored != actual) fail("CRC32 mismatch", at);
  if (remaining() != 0) fail("trailing bytes after checksum");
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for " + path);
  return bytes;
}

void write_file_atomic(const std::string& path, std::span<const std::uint8_t> bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("write failed for " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp + " to " + path + ": " + ec.message());
}

void write_text_atomic(const std::string& path, std::string_view text) {
  write_file_atomic(path, std::span<const std::uint8_t>(
                              reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string peek_magic(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char buf[4];
  in.read(buf, 4);
  if (in.gcount() != 4) return {};
  return std::string(buf, 4);
}

}  // namespace io
}  // namespace saesteer
