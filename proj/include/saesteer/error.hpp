#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace saesteer {

// Base for every error the library raises. The CLI maps ValidationError to
// exit code 1 and IoError to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed, truncated or corrupted artifact. `offset` is the byte offset in
// the file where the problem was detected.
class FormatError : public IoError {
 public:
  FormatError(std::string path, std::uint64_t offset, const std::string& what);

  const std::string& path() const noexcept { return path_; }
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::string path_;
  std::uint64_t offset_;
};

class DimensionError : public ValidationError {
 public:
  DimensionError(std::string what, std::size_t expected, std::size_t actual);

  std::size_t expected() const noexcept { return expected_; }
  std::size_t actual() const noexcept { return actual_; }

 private:
  std::size_t expected_;
  std::size_t actual_;
};

// Checks a length and throws DimensionError naming `what` on mismatch.
void check_dimension(const char* what, std::size_t expected, std::size_t actual);

}  // namespace saesteer
