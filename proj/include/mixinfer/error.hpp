#pragma once

#include <stdexcept>
#include <string>

namespace mixinfer {

/// Invalid configuration, shape mismatch or malformed input file.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed text input; the message carries the 1-based line number.
class ParseError : public ConfigError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : ConfigError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A non-finite value appeared during evaluation. `where()` names the layer.
class NumericFault : public std::runtime_error {
 public:
  explicit NumericFault(std::string where)
      : std::runtime_error("non-finite value in " + where), where_(std::move(where)) {}
  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

/// Argument outside the mathematical domain of an operation.
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

/// Sampling was requested from an empty store.
struct EmptyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace mixinfer
