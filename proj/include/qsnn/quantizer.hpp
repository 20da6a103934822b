#pragma once

#include <vector>

#include "qsnn/tensor.hpp"

namespace qsnn {

// How the per-tensor weight step is chosen.
enum class StepRule {
  max_abs,     // step = max|w| / (2^(bits-1) - 1); bits == 1 uses mean|w|
  time_power,  // step = 2^(T-1), the literal fixed-step variant
};

struct QuantScheme {
  int bits = 8;
  Real step = 1.0;
  bool is_signed = true;
  Real clamp_lo = -1.0;
  Real clamp_hi = 1.0;

  // Throws ConfigError when the invariants (step > 0, lo < hi, bits >= 1) fail.
  void validate() const;
};

struct QuantizedWeights {
  IntTensor codes;          // integer codes; dequantized value = code * step
  Real step = 1.0;
  bool degenerate = false;  // all-zero input: step defaulted to 1
  bool full_precision = false;
  QuantScheme scheme;
  RealTensor values;        // weights as used by the forward pass

  const RealTensor& dequantize() const { return values; }
};

struct WeightQuantOptions {
  StepRule rule = StepRule::max_abs;
  int time_steps = 1;  // only read by StepRule::time_power
};

// Symmetric round-to-nearest weight quantizer. Widths >= 32 are treated as
// full precision: codes are still formed, but values holds w unchanged.
QuantizedWeights quantize_weights(const RealTensor& w, int bits, const WeightQuantOptions& opts = {});

// Re-applies a fixed scheme (no step selection). Idempotent.
QuantizedWeights quantize_with_scheme(const RealTensor& w, const QuantScheme& scheme);

constexpr int kFullPrecisionBits = 32;

// Largest representable magnitude in codes for a symmetric `bits`-bit grid.
std::int64_t symmetric_code_limit(int bits);

// a = floor(a' / step) * step. The floor is taken as the largest k with
// k * step <= a', so already-quantized inputs map to themselves exactly.
RealTensor quantize_activation(const RealTensor& pre_activation, Real step);

// Binary planes of an unsigned tensor, least significant first.
struct BitPlanes {
  std::vector<IntTensor> planes;
  int source_bits = 0;

  IntTensor reconstruct() const;
};

BitPlanes bit_planes(const IntTensor& a, int time_steps);

// Straight-through estimator with clipping: gradient passes where
// clamp_lo <= w <= clamp_hi and is zeroed elsewhere.
RealTensor ste_backward(const RealTensor& grad_out, const RealTensor& w, const QuantScheme& scheme);

}  // namespace qsnn
