#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace inhibitor {

// Operand shapes do not conform.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A configuration value is outside its admissible domain (gamma <= 0, bits
// not in {8,16}, ...).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Integer accumulator or message-space overflow. Never raised for silent
// saturation in quantize(), which is counted instead.
class OverflowError : public std::overflow_error {
 public:
  using std::overflow_error::overflow_error;
};

// A lookup table would need more input bits than the configured PBS precision.
class PrecisionError : public OverflowError {
 public:
  PrecisionError(const std::string& what, std::size_t node)
      : OverflowError(what), node_(node) {}
  std::size_t node() const noexcept { return node_; }

 private:
  std::size_t node_;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, std::size_t step)
      : std::runtime_error(what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace inhibitor
