#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace travelsat {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Schema or config file is malformed, or a table lacks a required column.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// A single data row failed to parse or validate.
class RowError : public Error {
 public:
  RowError(std::size_t row, const std::string& what)
      : Error("row " + std::to_string(row) + ": " + what), row_(row) {}

  /// 1-based data row index (header excluded).
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

class DatasetEmptyError : public Error {
 public:
  using Error::Error;
};

/// Argument outside its contract (wrong length, out-of-range value, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// LLM response could not be parsed. Carries the raw text for retry logic.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::string raw)
      : Error(what), raw_(std::move(raw)) {}

  const std::string& raw_text() const noexcept { return raw_; }

 private:
  std::string raw_;
};

/// Transport failed permanently (retries exhausted or non-retryable status).
class TransportError : public Error {
 public:
  using Error::Error;
};

/// Retryable transport failure: timeout, rate limit, 5xx.
class TransientError : public TransportError {
 public:
  using TransportError::TransportError;
};

/// Authentication rejected; never retried.
class CredentialError : public Error {
 public:
  using Error::Error;
};

/// The scripted mock received a prompt that does not follow the template grammar.
class MockGrammarError : public Error {
 public:
  using Error::Error;
};

class RankDeficientError : public Error {
 public:
  RankDeficientError(const std::string& what, std::vector<std::string> columns,
                     std::vector<std::size_t> indices)
      : Error(what), columns_(std::move(columns)), indices_(std::move(indices)) {}

  /// Names of the columns found to be linearly dependent on earlier ones.
  const std::vector<std::string>& columns() const noexcept { return columns_; }
  /// Indices into the caller's feature matrix (intercept excluded).
  const std::vector<std::size_t>& indices() const noexcept { return indices_; }

 private:
  std::vector<std::string> columns_;
  std::vector<std::size_t> indices_;
};

}  // namespace travelsat
