#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace vbackcheck {

/// Base for every error raised by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dimensions of two operands disagree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Serialized data violates its documented format.
class FormatError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an operation's precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Misconfiguration: bad config file, missing stub table, strict-stub miss.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Backend could not be reached (after any retries). Retryable by nature.
class TransportError : public Error {
 public:
  using Error::Error;
};

/// Backend answered, but the answer does not satisfy the wire contract.
class ProtocolError : public Error {
 public:
  ProtocolError(const std::string& what, std::string raw)
      : Error(what), raw_(std::move(raw)) {}

  const std::string& raw() const noexcept { return raw_; }

 private:
  std::string raw_;
};

/// Line-oriented input failed schema validation. Lines are 1-based.
class IngestionError : public Error {
 public:
  IngestionError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Request body failed validation; `field()` is a JSON-pointer style path.
class ValidationError : public Error {
 public:
  ValidationError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace vbackcheck
