#include "saesteer/error.hpp"

#include <utility>

namespace saesteer {

FormatError::FormatError(std::string path, std::uint64_t offset, const std::string& what)
    : IoError(path + ": " + what + " (at byte offset " + std::to_string(offset) + ")"),
      path_(std::move(path)),
      offset_(offset) {}

DimensionError::DimensionError(std::string what, std::size_t expected, std::size_t actual)
    : ValidationError("dimension mismatch for " + what + ": expected " + std::to_string(expected) +
                      ", got " + std::to_string(actual)),
      expected_(expected),
      actual_(actual) {}

void check_dimension(const char* what, std::size_t expected, std::size_t actual) {
  if (expected != actual) {
    throw DimensionError(what, expected, actual);
  }
}

}  // namespace saesteer
