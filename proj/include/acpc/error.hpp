#pragma once

#include <stdexcept>
#include <string>

namespace acpc {

// Base for every error the library raises. `category()` is the short tag the
// CLI prints as `ERROR:<category>:`.
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& what)
      : std::runtime_error(what), category_(std::move(category)) {}
  const std::string& category() const noexcept { return category_; }

 private:
  std::string category_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("config", what) {}
};

// Malformed or unusable input data (trace files, datasets).
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error("data", what) {}
  DataError(std::string category, const std::string& what)
      : Error(std::move(category), what) {}
};

class FormatError : public DataError {
 public:
  explicit FormatError(const std::string& what) : DataError("format", what) {}
};

class ParseError : public DataError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : DataError("parse", "line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ShapeError : public DataError {
 public:
  explicit ShapeError(const std::string& what) : DataError("shape", what) {}
};

class VersionError : public DataError {
 public:
  explicit VersionError(const std::string& what) : DataError("version", what) {}
};

class CorruptFileError : public DataError {
 public:
  explicit CorruptFileError(const std::string& what) : DataError("corrupt", what) {}
};

class NumericError : public DataError {
 public:
  explicit NumericError(const std::string& what) : DataError("numeric", what) {}
};

// A broken internal invariant; always a bug.
class InvariantError : public Error {
 public:
  explicit InvariantError(const std::string& what) : Error("internal", what) {}
};

}  // namespace acpc
