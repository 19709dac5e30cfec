#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace evacmix {

// Missing or malformed column mapping.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unreadable cell; `line` is the 1-based line in the source file.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Data that parses but breaks a structural rule (duplicate keys, bad chosen flag, ...).
class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid draw plan, prime list, optimizer settings.
class ConfigurationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Model spec text that could not be turned into a ModelSpec.
class SpecError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Likelihood or utility evaluation produced a non-finite or degenerate value.
class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Estimation could not produce a usable result (bad start, singular Hessian).
class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace evacmix
