// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gdasjae {

/// Incompatible tensor shapes or layer widths.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Caller broke an API precondition (non-scalar loss, misaligned optimizer state, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Input data or arguments failed validation.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Inconsistent or out-of-range configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Text that does not follow a grammar. `offset()` is a byte offset for
/// genotype strings and a 1-based line number for delimited data files.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t position, const std::string& reason, const std::string& what)
      : std::runtime_error(what), position_(position), reason_(reason) {}

  std::size_t offset() const noexcept { return position_; }
  std::size_t line() const noexcept { return position_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::size_t position_;
  std::string reason_;
};

/// A metric with no defined value (e.g. accuracy over an empty class).
class UndefinedMetricError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace gdasjae
