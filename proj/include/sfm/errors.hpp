#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sfm {

/// Bad argument to a numeric routine (non-finite input, C <= 0, ...).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A feature block carried a NaN or infinity.
class InvalidFeature : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

/// Token sequence the HMM backend cannot score (unknown symbol, too short).
class InvalidSequence : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

/// Caller broke a documented precondition (e.g. a non-unit phi_bar).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Training stopped early: too many degraded examples, or divergent weights.
class TrainingAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file. `line()` is 1-based; 0 when not tied to a line.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace sfm
