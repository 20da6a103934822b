#pragma once

#include <stdexcept>
#include <string>

namespace qsnn {

// Shape disagreement between operands (matmul, elementwise, neuron steps).
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A value outside the range its declared bit-width or domain allows.
class RangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// Integer accumulation exceeded its container (64-bit or accumulator width).
class OverflowError : public std::overflow_error {
 public:
  using std::overflow_error::overflow_error;
};

// Invalid parameters or inconsistent configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed input files.
class DataFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BadMagicError : public DataFormatError {
 public:
  using DataFormatError::DataFormatError;
};

class TruncatedFileError : public DataFormatError {
 public:
  using DataFormatError::DataFormatError;
};

class CountMismatchError : public DataFormatError {
 public:
  using DataFormatError::DataFormatError;
};

// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace qsnn
