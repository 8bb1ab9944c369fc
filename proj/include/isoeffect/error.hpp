#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace isoeffect {

// Base of every error thrown by the library. `module()` names the component
// that raised it so the command-line frontend can tag its messages.
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& what)
      : std::runtime_error(what), module_(std::move(module)) {}

  const std::string& module() const noexcept { return module_; }
  virtual const char* kind() const noexcept { return "error"; }

 private:
  std::string module_;
};

// Missing or malformed column mapping.
class SchemaError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "schema_error"; }
};

// Input data that violates a documented invariant. Carries the offending
// 1-based data-row index when one applies.
class ValidationError : public Error {
 public:
  ValidationError(std::string module, const std::string& what,
                  std::optional<std::size_t> row = std::nullopt)
      : Error(std::move(module), what), row_(row) {}

  std::optional<std::size_t> row() const noexcept { return row_; }
  const char* kind() const noexcept override { return "validation_error"; }

 private:
  std::optional<std::size_t> row_;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "argument_error"; }
};

// A model or statistic that cannot be evaluated (e.g. zero residual variance).
class DegenerateModelError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "degenerate_model"; }
};

class IoError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "io_error"; }
};

}  // namespace isoeffect
