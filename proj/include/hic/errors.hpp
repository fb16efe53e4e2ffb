#pragma once

#include <stdexcept>
#include <string>

namespace hic {

// Invalid parameters. `field` is the dotted path into the run configuration.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::invalid_argument(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Analysis could not produce a result (no peak, no ring, too few frames).
class AnalysisError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Violated simulation contract, e.g. events delivered out of order.
class SimulationError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace hic
