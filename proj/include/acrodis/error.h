#pragma once

#include <stdexcept>
#include <string>

namespace acrodis {

/// Broad failure class; the CLI maps each one to a distinct exit code.
enum class ErrorKind { config, data, backend, internal };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

/// Raised when an endpoint fails the private-address check. Thrown before any
/// socket is created.
class PrivacyError : public ConfigError {
 public:
  explicit PrivacyError(const std::string& what) : ConfigError(what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

/// Corpus ingestion failure. `row` is the 1-based data row (header excluded),
/// or 0 when the problem is not tied to a row.
class LoadError : public DataError {
 public:
  LoadError(std::size_t row, const std::string& what)
      : DataError(row == 0 ? what : "row " + std::to_string(row) + ": " + what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

class BackendError : public Error {
 public:
  explicit BackendError(const std::string& what) : Error(ErrorKind::backend, what) {}
};

}  // namespace acrodis
