#include "qsnn/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "qsnn/error.hpp"

namespace qsnn {

void QuantScheme::validate() const {
  if (bits < 1) throw ConfigError("quantizer bits must be >= 1, got " + std::to_string(bits));
  if (!(step > 0.0) || !std::isfinite(step)) throw ConfigError("quantizer step must be positive and finite");
  if (!(clamp_lo < clamp_hi)) throw ConfigError("quantizer clamp range must satisfy lo < hi");
}

std::int64_t symmetric_code_limit(int bits) {
  if (bits < 1 || bits > kFullPrecisionBits) {
    throw ConfigError("weight bits must be in [1, " + std::to_string(kFullPrecisionBits) + "], got " +
                      std::to_string(bits));
  }
  if (bits == 1) return 1;  // sign binarisation: codes in {-1, +1}
  return (std::int64_t{1} << (bits - 1)) - 1;
}

namespace {

// 1-bit codes are {-1, +1}, which need a 2-bit signed container.
int code_container_bits(int bits) { return std::max(bits, 2); }

QuantizedWeights encode(const RealTensor& w, const QuantScheme& scheme) {
  const std::int64_t limit = symmetric_code_limit(scheme.bits);
  std::vector<std::int64_t> codes(w.size());
  std::vector<Real> values(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    std::int64_t c;
    if (scheme.bits == 1) {
      c = w[i] < 0.0 ? -1 : 1;
    } else {
      const Real r = std::round(w[i] / scheme.step);
      c = static_cast<std::int64_t>(std::clamp(r, static_cast<Real>(-limit), static_cast<Real>(limit)));
    }
    codes[i] = c;
    values[i] = static_cast<Real>(c) * scheme.step;
  }
  QuantizedWeights q;
  q.codes = IntTensor(w.shape(), std::move(codes), code_container_bits(scheme.bits), false);
  q.step = scheme.step;
  q.scheme = scheme;
  if (scheme.bits >= kFullPrecisionBits) {
    q.full_precision = true;
    q.values = w;
  } else {
    q.values = RealTensor(w.shape(), std::move(values));
  }
  return q;
}

}  // namespace

QuantizedWeights quantize_weights(const RealTensor& w, int bits, const WeightQuantOptions& opts) {
  const std::int64_t limit = symmetric_code_limit(bits);
  if (!w.all_finite()) throw RangeError("weights contain non-finite values");

  Real max_abs = 0.0, sum_abs = 0.0;
  for (Real v : w.data()) {
    max_abs = std::max(max_abs, std::abs(v));
    sum_abs += std::abs(v);
  }

  QuantScheme scheme;
  scheme.bits = bits;
  scheme.is_signed = true;
  bool degenerate = false;
  if (opts.rule == StepRule::time_power) {
    if (opts.time_steps < 1) throw ConfigError("time_power step rule needs time_steps >= 1");
    scheme.step = std::ldexp(1.0, opts.time_steps - 1);
  } else if (max_abs == 0.0) {
    scheme.step = 1.0;
    degenerate = true;
  } else if (bits == 1) {
    scheme.step = sum_abs / static_cast<Real>(w.size());
  } else {
    scheme.step = max_abs / static_cast<Real>(limit);
  }
  scheme.clamp_hi = static_cast<Real>(limit) * scheme.step;
  if (opts.rule == StepRule::max_abs && max_abs > 0.0) scheme.clamp_hi = std::max(scheme.clamp_hi, max_abs);
  scheme.clamp_lo = -scheme.clamp_hi;

  QuantizedWeights q = encode(w, scheme);
  if (degenerate) {
    // Keep the all-zero tensor at zero instead of binarising to +step.
    std::fill(q.codes.data().begin(), q.codes.data().end(), 0);
    std::fill(q.values.data().begin(), q.values.data().end(), 0.0);
    q.degenerate = true;
  }
  return q;
}

QuantizedWeights quantize_with_scheme(const RealTensor& w, const QuantScheme& scheme) {
  scheme.validate();
  return encode(w, scheme);
}

RealTensor quantize_activation(const RealTensor& pre_activation, Real step) {
  if (!(step > 0.0)) throw ConfigError("activation step must be > 0");
  RealTensor out(pre_activation.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const Real x = pre_activation[i];
    Real k = std::floor(x / step);
    if ((k + 1.0) * step <= x) {
      k += 1.0;
    } else if (k * step > x) {
      k -= 1.0;
    }
    out[i] = k * step;
  }
  return out;
}

IntTensor BitPlanes::reconstruct() const {
  if (planes.empty()) throw ConfigError("no bit planes to reconstruct");
  std::vector<std::int64_t> acc(planes.front().size(), 0);
  for (std::size_t t = 0; t < planes.size(); ++t) {
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += planes[t][i] << t;
  }
  return IntTensor(planes.front().shape(), std::move(acc), std::max(1, source_bits), true);
}

BitPlanes bit_planes(const IntTensor& a, int time_steps) {
  if (time_steps < 1 || time_steps > 62) {
    throw ConfigError("bit plane count must be in [1, 62], got " + std::to_string(time_steps));
  }
  const std::int64_t bound = std::int64_t{1} << time_steps;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] < 0 || a[i] >= bound) {
      throw RangeError("value " + std::to_string(a[i]) + " at index " + std::to_string(i) +
                       " outside [0, 2^" + std::to_string(time_steps) + ")");
    }
  }
  BitPlanes out;
  out.source_bits = time_steps;
  out.planes.reserve(static_cast<std::size_t>(time_steps));
  for (int t = 0; t < time_steps; ++t) {
    std::vector<std::int64_t> plane(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) plane[i] = (a[i] >> t) & 1;
    out.planes.emplace_back(a.shape(), std::move(plane), 1, true);
  }
  return out;
}

RealTensor ste_backward(const RealTensor& grad_out, const RealTensor& w, const QuantScheme& scheme) {
  if (grad_out.shape() != w.shape()) {
    throw ShapeError("ste_backward shape mismatch: " + grad_out.shape().to_string() + " vs " +
                     w.shape().to_string());
  }
  RealTensor out(w.shape());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const bool inside = w[i] >= scheme.clamp_lo && w[i] <= scheme.clamp_hi;
    out[i] = inside ? grad_out[i] : 0.0;
  }
  return out;
}

}  // namespace qsnn
