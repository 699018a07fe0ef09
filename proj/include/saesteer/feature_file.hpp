#pragma once

// SAEF feature files: residual vectors with gender, profession and token
// position labels.
//
//   "SAEF" | version u16 | d u32 | record_count u64 | position_kind u8
//   record_count x { gender u8 | profession_id u32 | token_position u32 | d x f32 }
//   crc32 u32 over every preceding byte
//
// All integers and floats little-endian.

#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "saesteer/trainer.hpp"
#include "saesteer/types.hpp"

namespace saesteer {

inline constexpr std::uint16_t kFeatureFileVersion = 1;
inline constexpr std::size_t kFeatureHeaderSize = 19;

struct FeatureRecord {
  Gender gender = Gender::Male;
  std::uint32_t profession_id = 0;
  std::uint32_t token_position = 0;
  std::vector<float> features;

  bool operator==(const FeatureRecord&) const = default;
};

struct FeatureFileHeader {
  std::uint16_t version = kFeatureFileVersion;
  std::uint32_t d = 0;
  std::uint64_t record_count = 0;
  PositionKind position_kind = PositionKind::Eos;

  std::size_t record_size() const { return 9 + 4 * static_cast<std::size_t>(d); }
};

// Streams records without loading the file. The checksum is verified when
// next() reaches the end, so a corrupted file surfaces as a FormatError
// during the final call at the latest.
class FeatureFileReader {
 public:
  explicit FeatureFileReader(std::string path);

  const FeatureFileHeader& header() const { return header_; }
  bool next(FeatureRecord& record);
  std::uint64_t records_read() const { return read_; }
  const std::string& path() const { return path_; }

 private:
  void read_exact(std::uint8_t* dst, std::size_t n);

  std::string path_;
  std::ifstream in_;
  FeatureFileHeader header_;
  std::uint64_t offset_ = 0;
  std::uint32_t crc_ = 0;
  std::uint64_t read_ = 0;
  bool finished_ = false;
  std::vector<std::uint8_t> buffer_;
};

// Streams records to "<path>.tmp"; finish() fixes up the count and checksum
// and renames onto `path`. An unfinished writer removes its temporary file.
class FeatureFileWriter {
 public:
  FeatureFileWriter(std::string path, std::uint32_t d, PositionKind kind);
  ~FeatureFileWriter();
  FeatureFileWriter(const FeatureFileWriter&) = delete;
  FeatureFileWriter& operator=(const FeatureFileWriter&) = delete;

  void write(const FeatureRecord& record);
  void finish();

 private:
  std::string path_;
  std::string tmp_path_;
  std::ofstream out_;
  std::uint32_t d_;
  PositionKind kind_;
  std::uint64_t count_ = 0;
  std::uint32_t records_crc_ = 0;
  std::uint64_t records_bytes_ = 0;
  bool finished_ = false;
  std::vector<std::uint8_t> buffer_;
};

void write_feature_file(const std::string& path, std::uint32_t d, PositionKind kind,
                        const std::vector<FeatureRecord>& records);

std::pair<FeatureFileHeader, std::vector<FeatureRecord>> read_feature_file(
    const std::string& path);

// Reads every record's features into a dense matrix for training.
std::pair<FeatureFileHeader, FeatureMatrix> load_feature_matrix(const std::string& path);

}  // namespace saesteer
