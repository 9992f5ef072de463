#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mlchain {

/// Base class of every error raised by the library.
class error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file. Carries the 1-based line number when known (0 otherwise).
class parse_error : public error {
 public:
  parse_error(const std::string& source, std::size_t line, const std::string& what)
      : error(source + (line ? ":" + std::to_string(line) : std::string{}) + ": " + what), line_(line) {}

  [[nodiscard]] std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Dataset that parses but violates a dataset contract (empty, non-binary labels, ...).
class dataset_error : public error {
 public:
  using error::error;
};

/// Dataset without instances. Kept distinct so callers that can handle an
/// empty input (e.g. writing a header-only trace) can catch it alone.
class empty_dataset : public dataset_error {
 public:
  empty_dataset() : dataset_error("empty dataset") {}
};

/// Input file that does not exist or cannot be opened.
class file_not_found : public error {
 public:
  explicit file_not_found(const std::string& path, const std::string& what = "dataset")
      : error(what + " not found: " + path) {}
};

}  // namespace mlchain
