#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace freelunch {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Bad user input: configuration files, CLI flags, invalid plan/model combos.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file (CSV/JSON); carries a location string when known.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Objective evaluation produced a non-finite value or hit a numeric limit.
/// Carries the parameter vector and, when known, the offending observation.
class EvaluationError : public Error {
 public:
  EvaluationError(const std::string& msg, std::vector<double> theta, long observation = -1)
      : Error(msg), theta_(std::move(theta)), observation_(observation) {}
  const std::vector<double>& theta() const { return theta_; }
  long observation() const { return observation_; }

 private:
  std::vector<double> theta_;
  long observation_;
};

/// Conditioning matrix could not be formed (singular after repair).
/// Carries the spectrum of the matrix that failed.
class ConditioningError : public Error {
 public:
  ConditioningError(const std::string& msg, std::vector<double> spectrum)
      : Error(msg), spectrum_(std::move(spectrum)) {}
  const std::vector<double>& spectrum() const { return spectrum_; }

 private:
  std::vector<double> spectrum_;
};

/// Chain is rejecting most proposals; the learning rate is too large.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Operation requires a model capability (e.g. per-observation scores) that
/// the model does not provide.
class CapabilityError : public Error {
 public:
  using Error::Error;
};

}  // namespace freelunch
