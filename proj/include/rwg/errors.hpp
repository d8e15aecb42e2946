#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace rwg {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed group spec, measure spec or experiment config. Carries the
/// offending field so callers can locate it.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& reason)
      : Error(field + ": " + reason), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Input that parses but violates a numeric contract (mass sums, empty supports).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Operation applied to the wrong kind of operand (mixed groups, non-wreath
/// projection, unknown series name).
class UsageError : public Error {
 public:
  using Error::Error;
};

/// A configured budget was exceeded. `progress` records how far the
/// computation got before refusing (radius, n, atoms, ...).
class ResourceError : public Error {
 public:
  ResourceError(const std::string& what, long long progress = -1)
      : Error(what), progress_(progress) {}
  long long progress() const noexcept { return progress_; }

 private:
  long long progress_;
};

}  // namespace rwg
