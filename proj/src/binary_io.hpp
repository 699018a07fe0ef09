#pragma once

// Little-endian encoding helpers shared by every artifact format.

#include <bit>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "saesteer/error.hpp"

namespace saesteer::io {

std::uint32_t crc32_update(std::uint32_t crc, std::span<const std::uint8_t> bytes);
inline std::uint32_t crc32(std::span<const std::uint8_t> bytes) { return crc32_update(0, bytes); }
// CRC of A||B from CRC(A), CRC(B) and |B|.
std::uint32_t crc32_combine(std::uint32_t crc_a, std::uint32_t crc_b, std::uint64_t length_b);

class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void f32s(std::span<const float> v) {
    for (const float x : v) f32(x);
  }
  void raw(std::span<const std::uint8_t> v) { bytes_.insert(bytes_.end(), v.begin(), v.end()); }
  void magic(std::string_view m) { bytes_.insert(bytes_.end(), m.begin(), m.end()); }
  // u16 length prefix + UTF-8 bytes.
  void string16(std::string_view s);
  // Appends the CRC32 of everything written so far.
  void seal() { u32(crc32(bytes_)); }

  const std::vector<std::uint8_t>& bytes() const { return bytes_; }
  std::vector<std::uint8_t>& bytes() { return bytes_; }
  void clear() { bytes_.clear(); }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> bytes_;
};

inline std::uint64_t load_le(const std::uint8_t* p, int n) {
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

// Bounds-checked reader over an in-memory artifact. Reads past the end raise
// FormatError at the offset where the data ran out.
class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> bytes, std::string path, std::uint64_t base = 0)
      : bytes_(bytes), path_(std::move(path)), base_(base) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(load_le(take(1), 1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(load_le(take(2), 2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(load_le(take(4), 4)); }
  std::uint64_t u64() { return load_le(take(8), 8); }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  void f32s(std::span<float> out);
  std::string string16();
  void expect_magic(std::string_view magic);
  // Checks the trailing CRC32 over every byte before it, then that nothing follows.
  void verify_seal();

  std::uint64_t offset() const { return base_ + pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  const std::string& path() const { return path_; }
  [[noreturn]] void fail(const std::string& what, std::uint64_t at) const {
    throw FormatError(path_, at, what);
  }
  [[noreturn]] void fail(const std::string& what) const { fail(what, offset()); }

 private:
  const std::uint8_t* take(std::size_t n);

  std::span<const std::uint8_t> bytes_;
  std::string path_;
  std::uint64_t base_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::string& path);

// Writes to "<path>.tmp" then renames over `path`.
void write_file_atomic(const std::string& path, std::span<const std::uint8_t> bytes);
void write_text_atomic(const std::string& path, std::string_view text);

// First four bytes of a file, or an empty string when shorter.
std::string peek_magic(const std::string& path);

}  // namespace saesteer::io
