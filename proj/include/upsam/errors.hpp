#pragma once

#include <stdexcept>
#include <string>

namespace upsam {

// Base class for everything this library throws on purpose.  Callers that
// just want "did it work" can catch upsam::Error; the subclasses exist so
// the CLI can map failures to sensible messages and tests can pin down
// which contract was violated.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// File could not be opened / read / written.
class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error(msg) {}
};

// File exists but its header or payload is malformed or inconsistent.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& msg) : Error(msg) {}
};

// Image dimensions do not satisfy an operation's requirements
// (e.g. PAN size is not an integer multiple of the MSI size).
class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& msg) : Error(msg) {}
};

// Numeric argument outside its mathematical domain (probability not in
// (0,1), non-positive scale, all-constant regressors, ...).
class DomainError : public Error {
 public:
  explicit DomainError(const std::string& msg) : Error(msg) {}
};

// Bad configuration value (non-positive iteration count, unknown mode...).
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// A computation produced NaN/Inf where the contract promises finite
// values; the message names the layer or quantity that went bad.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

// Optimization produced a non-finite loss; carries the iteration index.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& msg, int iteration)
      : Error(msg), iteration_(iteration) {}
  int iteration() const { return iteration_; }

 private:
  int iteration_ = -1;
};

// Failure inside the end-to-end sharpening pipeline; remembers which
// stage blew up so the CLI can report "failed at stage 3 (detail)".
class PipelineError : public Error {
 public:
  PipelineError(const std::string& msg, int stage, std::string stage_name)
      : Error(msg), stage_(stage), stage_name_(std::move(stage_name)) {}
  int stage() const { return stage_; }
  const std::string& stage_name() const { return stage_name_; }

 private:
  int stage_ = 0;
  std::string stage_name_;
};

}  // namespace upsam
