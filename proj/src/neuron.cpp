#include "qsnn/neuron.hpp"

#include <string>

#include "qsnn/error.hpp"

namespace qsnn {

void NeuronParams::validate() const {
  if (!(tau > 1.0)) throw ConfigError("neuron tau must be > 1, got " + std::to_string(tau));
  if (!(v_th > 0.0)) throw ConfigError("neuron v_th must be > 0");
  if (!(v_th > v_rst)) throw ConfigError("neuron v_th must exceed v_rst");
  if (spike_bits < 1 || spike_bits > 30) {
    throw ConfigError("spike bits must be in [1, 30], got " + std::to_string(spike_bits));
  }
  if (!(surrogate_width > 0.0)) throw ConfigError("surrogate width must be > 0");
}

NeuronState NeuronState::resting(const Shape& shape, const NeuronParams& p) {
  return NeuronState{RealTensor(shape, p.v_rst), 0};
}

RealTensor SpikeTensor::values(Real v_th) const {
  RealTensor out(levels.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<Real>(levels[i]) * v_th;
  return out;
}

std::size_t SpikeTensor::active_count() const {
  std::size_t n = 0;
  for (std::int64_t l : levels.data()) n += l > 0 ? 1 : 0;
  return n;
}

namespace {

StepResult step(const NeuronState& state, const RealTensor& current, const NeuronParams& p) {
  p.validate();
  if (state.v.shape() != current.shape()) {
    throw ShapeError("neuron step shape mismatch: state " + state.v.shape().to_string() + ", current " +
                     current.shape().to_string());
  }
  const Real leak = p.leak();
  StepResult r{NeuronState{RealTensor(state.v.shape()), state.step_index + 1},
               SpikeTensor{IntTensor(state.v.shape(), p.spike_bits, true), p.spike_bits}};
  for (std::size_t i = 0; i < current.size(); ++i) {
    const Real v = neuron_math::integrate(state.v[i], current[i], leak);
    const std::int64_t level = neuron_math::fire_level(v, p);
    r.spikes.levels[i] = level;
    r.state.v[i] = neuron_math::reset(v, level, p);
  }
  return r;
}

}  // namespace

StepResult lif_step(const NeuronState& state, const RealTensor& current, const NeuronParams& p) {
  p.validate();
  if (p.spike_bits != 1) {
    throw ConfigError("lif_step needs spike_bits == 1, got " + std::to_string(p.spike_bits));
  }
  if (state.v.shape() != current.shape()) {
    throw ShapeError("neuron step shape mismatch: state " + state.v.shape().to_string() + ", current " +
                     current.shape().to_string());
  }
  StepResult r{NeuronState{RealTensor(state.v.shape()), state.step_index + 1},
               SpikeTensor{IntTensor(state.v.shape(), 1, true), 1}};
  const Real leak = p.leak();
  for (std::size_t i = 0; i < current.size(); ++i) {
    Real v = leak * state.v[i] + current[i];
    const bool spike = v > p.v_th;
    if (spike) v = p.reset_mode == ResetMode::hard ? p.v_rst : v - p.v_th;
    r.spikes.levels[i] = spike ? 1 : 0;
    r.state.v[i] = v;
  }
  return r;
}

StepResult graded_step(const NeuronState& state, const RealTensor& current, const NeuronParams& p) {
  return step(state, current, p);
}

RealTensor surrogate_grad(const RealTensor& v, const NeuronParams& p) {
  if (!(p.surrogate_width > 0.0)) throw ConfigError("surrogate width must be > 0");
  RealTensor out(v.shape());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = neuron_math::window(v[i], p.v_th, p.surrogate_width);
  return out;
}

RealTensor graded_surrogate_grad(const RealTensor& v, const NeuronParams& p) {
  p.validate();
  RealTensor out(v.shape());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = neuron_math::graded_surrogate(v[i], p);
  return out;
}

}  // namespace qsnn
