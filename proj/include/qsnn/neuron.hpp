#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "qsnn/tensor.hpp"

namespace qsnn {

enum class ResetMode { hard, subtract };

struct NeuronParams {
  Real tau = 2.0;              // membrane time constant; leak factor is 1/tau
  Real v_th = 1.0;
  Real v_rst = 0.0;
  ResetMode reset_mode = ResetMode::hard;
  int spike_bits = 1;          // S
  Real surrogate_width = 1.0;  // alpha

  void validate() const;
  Real leak() const { return 1.0 / tau; }
  std::int64_t max_level() const { return (std::int64_t{1} << spike_bits) - 1; }
};

struct NeuronState {
  RealTensor v;
  std::int64_t step_index = 0;

  static NeuronState resting(const Shape& shape, const NeuronParams& p);
};

struct SpikeTensor {
  IntTensor levels;  // unsigned, spike_bits wide
  int spike_bits = 1;

  // Value carried downstream: level * v_th.
  RealTensor values(Real v_th) const;
  std::size_t active_count() const;
};

struct StepResult {
  NeuronState state;
  SpikeTensor spikes;
};

// Binary LIF step: leak, integrate, fire (strict v > v_th), reset.
// Requires p.spike_bits == 1.
StepResult lif_step(const NeuronState& state, const RealTensor& current, const NeuronParams& p);

// Graded-spike step: the firing level is floor(v / v_th) saturated at 2^S - 1.
StepResult graded_step(const NeuronState& state, const RealTensor& current, const NeuronParams& p);

// Rectangular surrogate of dH/dv: (1/alpha) inside |v - v_th| < alpha/2.
RealTensor surrogate_grad(const RealTensor& v, const NeuronParams& p);

// Surrogate of d(level)/dv for graded neurons: one rectangular window per
// level boundary k*v_th, k = 1..2^S-1. Equals surrogate_grad when S == 1.
RealTensor graded_surrogate_grad(const RealTensor& v, const NeuronParams& p);

namespace neuron_math {

inline Real integrate(Real v_prev, Real current, Real leak) { return leak * v_prev + current; }

inline std::int64_t fire_level(Real v, const NeuronParams& p) {
  if (!(v > p.v_th)) return 0;
  const Real q = std::floor(v / p.v_th);
  const auto top = static_cast<Real>(p.max_level());
  return static_cast<std::int64_t>(std::min(q, top));
}

inline Real reset(Real v, std::int64_t level, const NeuronParams& p) {
  if (level == 0) return v;
  if (p.reset_mode == ResetMode::hard) return p.v_rst;
  return v - static_cast<Real>(level) * p.v_th;
}

inline Real window(Real v, Real centre, Real width) {
  return std::abs(v - centre) < 0.5 * width ? 1.0 / width : 0.0;
}

inline Real graded_surrogate(Real v, const NeuronParams& p) {
  const std::int64_t top = p.max_level();
  const Real w = p.surrogate_width;
  // Only boundaries within half a window of v can contribute.
  const Real lo_r = std::max(1.0, std::floor((v - 0.5 * w) / p.v_th));
  const Real hi_r = std::min(static_cast<Real>(top), std::ceil((v + 0.5 * w) / p.v_th));
  if (!(lo_r <= hi_r)) return 0.0;
  const auto lo = static_cast<std::int64_t>(lo_r);
  const auto hi = static_cast<std::int64_t>(hi_r);
  Real g = 0.0;
  for (std::int64_t k = lo; k <= hi; ++k) g += window(v, static_cast<Real>(k) * p.v_th, w);
  return g;
}

// Piecewise-linear stand-in for the level staircase whose exact derivative
// is graded_surrogate. Used for gradient verification only.
inline Real ramp(Real v, Real centre, Real width) {
  return std::clamp((v - centre) / width + 0.5, 0.0, 1.0);
}

inline Real smooth_level(Real v, const NeuronParams& p) {
  Real s = 0.0;
  for (std::int64_t k = 1; k <= p.max_level(); ++k) s += ramp(v, static_cast<Real>(k) * p.v_th, p.surrogate_width);
  return s;
}

}  // namespace neuron_math

}  // namespace qsnn
