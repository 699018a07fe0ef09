#include "saesteer/feature_file.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "binary_io.hpp"

namespace saesteer {

FeatureFileReader::FeatureFileReader(std::string path)
    : path_(std::move(path)), in_(path_, std::ios::binary) {
  if (!in_) throw IoError("cannot open " + path_);
  std::uint8_t raw[kFeatureHeaderSize];
  read_exact(raw, kFeatureHeaderSize);
  io::ByteReader r(raw, path_);
  r.expect_magic("SAEF");
  const std::uint64_t version_at = r.offset();
  header_.version = r.u16();
  if (header_.version != kFeatureFileVersion) {
    r.fail("unsupported feature file version " + std::to_string(header_.version), version_at);
  }
  const std::uint64_t d_at = r.offset();
  header_.d = r.u32();
  if (header_.d == 0) r.fail("feature dimension is zero", d_at);
  header_.record_count = r.u64();
  const std::uint64_t kind_at = r.offset();
  const std::uint8_t kind = r.u8();
  if (kind > 1) r.fail("unknown position kind " + std::to_string(kind), kind_at);
  header_.position_kind = static_cast<PositionKind>(kind);
  buffer_.resize(header_.record_size());
}

void FeatureFileReader::read_exact(std::uint8_t* dst, std::size_t n) {
  in_.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
  const auto got = static_cast<std::size_t>(in_.gcount());
  if (got < n) throw FormatError(path_, offset_ + got, "unexpected end of file");
  crc_ = io::crc32_update(crc_, {dst, n});
  offset_ += n;
}

bool FeatureFileReader::next(FeatureRecord& record) {
  if (finished_) return false;
  if (read_ == header_.record_count) {
    const std::uint64_t crc_at = offset_;
    const std::uint32_t expected = crc_;
    std::uint8_t raw[4];
    read_exact(raw, 4);
    if (static_cast<std::uint32_t>(io::load_le(raw, 4)) != expected) {
      throw FormatError(path_, crc_at, "CRC32 mismatch");
    }
    if (in_.peek() != std::char_traits<char>::eof()) {
      throw FormatError(path_, offset_, "trailing bytes after checksum");
    }
    finished_ = true;
    return false;
  }

  const std::uint64_t record_at = offset_;
  read_exact(buffer_.data(), buffer_.size());
  io::ByteReader r(buffer_, path_, record_at);
  const std::uint8_t gender = r.u8();
  if (gender > 1) r.fail("invalid gender byte " + std::to_string(gender), record_at);
  record.gender = static_cast<Gender>(gender);
  record.profession_id = r.u32();
  record.token_position = r.u32();
  record.features.resize(header_.d);
  const std::uint64_t features_at = r.offset();
  r.f32s(record.features);
  for (std::size_t i = 0; i < record.features.size(); ++i) {
    if (!std::isfinite(record.features[i])) {
      r.fail("non-finite feature value", features_at + 4 * i);
    }
  }
  ++read_;
  return true;
}

FeatureFileWriter::FeatureFileWriter(std::string path, std::uint32_t d, PositionKind kind)
    : path_(std::move(path)), tmp_path_(path_ + ".tmp"), d_(d), kind_(kind) {
  if (d_ == 0) throw ValidationError("feature dimension must be positive");
  out_.open(tmp_path_, std::ios::binary | std::ios::trunc);
  if (!out_) throw IoError("cannot open " + tmp_path_ + " for writing");
  // Placeholder header; the record count is patched in finish().
  std::vector<std::uint8_t> zeros(kFeatureHeaderSize, 0);
  out_.write(reinterpret_cast<const char*>(zeros.data()), kFeatureHeaderSize);
}

FeatureFileWriter::~FeatureFileWriter() {
  if (!finished_) {
    out_.close();
    std::error_code ec;
    std::filesystem::remove(tmp_path_, ec);
  }
}

void FeatureFileWriter::write(const FeatureRecord& record) {
  if (finished_) throw ValidationError("feature file writer already finished");
  check_dimension("feature record", d_, record.features.size());
  for (const float v : record.features) {
    if (!std::isfinite(v)) throw ValidationError("refusing to write a non-finite feature value");
  }
  io::ByteWriter w;
  w.u8(static_cast<std::uint8_t>(record.gender));
  w.u32(record.profession_id);
  w.u32(record.token_position);
  w.f32s(record.features);
  records_crc_ = io::crc32_update(records_crc_, w.bytes());
  records_bytes_ += w.bytes().size();
  out_.write(reinterpret_cast<const char*>(w.bytes().data()),
             static_cast<std::streamsize>(w.bytes().size()));
  if (!out_) throw IoError("write failed for " + tmp_path_);
  ++count_;
}

void FeatureFileWriter::finish() {
  if (finished_) return;
  io::ByteWriter header;
  header.magic("SAEF");
  header.u16(kFeatureFileVersion);
  header.u32(d_);
  header.u64(count_);
  header.u8(static_cast<std::uint8_t>(kind_));
  const std::uint32_t crc =
      io::crc32_combine(io::crc32(header.bytes()), records_crc_, records_bytes_);
  io::ByteWriter trailer;
  trailer.u32(crc);

  out_.write(reinterpret_cast<const char*>(trailer.bytes().data()), 4);
  out_.seekp(0);
  out_.write(reinterpret_cast<const char*>(header.bytes().data()),
             static_cast<std::streamsize>(header.bytes().size()));
  out_.flush();
  if (!out_) throw IoError("write failed for " + tmp_path_);
  out_.close();

  std::error_code ec;
  std::filesystem::rename(tmp_path_, path_, ec);
  if (ec) throw IoError("cannot rename " + tmp_path_ + " to " + path_ + ": " + ec.message());
  finished_ = true;
}

void write_feature_file(const std::string& path, std::uint32_t d, PositionKind kind,
                        const std::vector<FeatureRecord>& records) {
  FeatureFileWriter writer(path, d, kind);
  for (const auto& r : records) writer.write(r);
  writer.finish();
}

std::pair<FeatureFileHeader, std::vector<FeatureRecord>> read_feature_file(
    const std::string& path) {
  FeatureFileReader reader(path);
  std::vector<FeatureRecord> records;
  FeatureRecord rec;
  while (reader.next(rec)) records.push_back(rec);
  return {reader.header(), std::move(records)};
}

std::pair<FeatureFileHeader, FeatureMatrix> load_feature_matrix(const std::string& path) {
  FeatureFileReader reader(path);
  FeatureMatrix matrix;
  matrix.d = reader.header().d;
  matrix.values.reserve(static_cast<std::size_t>(reader.header().record_count) * matrix.d);
  FeatureRecord rec;
  while (reader.next(rec)) matrix.append(rec.features);
  return {reader.header(), std::move(matrix)};
}

}  // namespace saesteer
