#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace franson {

/// A configuration or argument value violates its documented constraint.
class ValidationError : public std::invalid_argument {
public:
  ValidationError(std::string field, const std::string& constraint)
      : std::invalid_argument(field + ": " + constraint), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

private:
  std::string field_;
};

/// Input is well-formed but carries no usable information (e.g. an empty
/// normalization region).
class DegenerateInputError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

/// A caller broke a precondition that is not a user-facing configuration value.
class ContractViolation : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

/// Text input could not be parsed.
class ParseError : public std::runtime_error {
public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : std::runtime_error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

/// The Monte Carlo run could not complete; carries how many cycles finished.
class SimulationError : public std::runtime_error {
public:
  SimulationError(const std::string& what, std::int64_t cycles_completed)
      : std::runtime_error(what + " (completed " + std::to_string(cycles_completed) + " cycles)"),
        cycles_completed_(cycles_completed) {}

  std::int64_t cycles_completed() const noexcept { return cycles_completed_; }

private:
  std::int64_t cycles_completed_;
};

namespace detail {

inline void require(bool ok, const std::string& field, const std::string& constraint) {
  if (!ok) throw ValidationError(field, constraint);
}

inline void require_unit_interval(double v, const std::string& field) {
  require(v >= 0.0 && v <= 1.0, field, "must be in [0,1], got " + std::to_string(v));
}

} // namespace detail
} // namespace franson
