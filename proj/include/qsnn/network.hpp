#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "qsnn/neuron.hpp"
#include "qsnn/quantizer.hpp"
#include "qsnn/tensor.hpp"

namespace qsnn {

// Weight bits W, spike bits S, time steps T. The written form is "W/S/T".
struct BitAllocation {
  int weight_bits = 1;
  int spike_bits = 1;
  int time_steps = 1;

  void validate() const;
  std::string to_string() const;
  static BitAllocation parse(std::string_view text);

  bool operator==(const BitAllocation&) const = default;
};

enum class LayerKind { dense, conv2d, pooling, flatten };
enum class Encoder { direct_current, level_quantized };
enum class Decoder { membrane_sum, spike_count };

std::string to_string(LayerKind kind);
std::string to_string(Encoder e);
std::string to_string(Decoder d);
LayerKind parse_layer_kind(std::string_view s);
Encoder parse_encoder(std::string_view s);
Decoder parse_decoder(std::string_view s);

struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  Shape in_shape;   // per sample
  Shape out_shape;  // per sample
  // dense: [in, out]; conv2d: [c_out, c_in, kh, kw]. Empty for pooling,
  // flatten and for shape-only stubs used by the cost model.
  RealTensor weight;
  QuantizedWeights quantized;
  Conv2dGeometry geometry;    // conv2d
  std::size_t pool_window = 2;  // pooling (max), stride == window
  std::optional<NeuronParams> neuron;
  // Bit class of this layer's MACs when it differs from the allocation.
  std::optional<int> weight_bits;
  std::optional<int> spike_bits;

  bool has_weights() const { return !weight.empty(); }
  bool is_weighted_kind() const { return kind == LayerKind::dense || kind == LayerKind::conv2d; }
  Shape weight_shape() const;
  std::size_t weight_count() const;
  // MACs for one sample at one time step.
  std::int64_t macs_per_step() const;
};

LayerSpec make_dense(std::size_t in, std::size_t out, std::optional<NeuronParams> neuron);
LayerSpec make_conv2d(const Shape& in_shape, std::size_t c_out, std::size_t kernel, Conv2dGeometry g,
                      std::optional<NeuronParams> neuron);
LayerSpec make_max_pool(const Shape& in_shape, std::size_t window);
LayerSpec make_flatten(const Shape& in_shape);

struct NetworkSpec {
  std::vector<LayerSpec> layers;
  BitAllocation allocation;
  Encoder encoder = Encoder::direct_current;
  Decoder decoder = Decoder::membrane_sum;
  StepRule step_rule = StepRule::max_abs;

  Shape input_shape() const;
  Shape output_shape() const;
  int layer_weight_bits(std::size_t i) const;
  int layer_spike_bits(std::size_t i) const;

  // Shape chain, allocation consistency and neuron parameters.
  void validate() const;
  // Recomputes every layer's quantized weights from its real weights.
  void requantize();
  // Sets the allocation, propagates S to every neuron and requantizes.
  void set_allocation(const BitAllocation& alloc);
};

// Random initialisation of every weighted layer (scaled normal), then requantize.
void initialize_weights(NetworkSpec& net, std::uint64_t seed, Real gain = 1.0);

// Presets: "mlp" (784-256-10), "cnn" (2 conv + 2 dense on 1x28x28),
// "event-mlp" (2x16x16 -> 128 -> 4) and "mlp:a-b-c" for custom widths.
NetworkSpec make_mlp(const std::vector<std::size_t>& widths, const BitAllocation& alloc,
                     const NeuronParams& neuron = {});
NetworkSpec make_cnn(const BitAllocation& alloc, const NeuronParams& neuron = {});
NetworkSpec make_preset(std::string_view name, const BitAllocation& alloc, const NeuronParams& neuron = {});

// Per-step network inputs: T tensors of shape [batch, sample dims...].
using StepInputs = std::vector<RealTensor>;

// Static images in [0,1], [batch, ...] -> per-step currents.
// direct_current repeats the pixel at every step; level_quantized presents
// floor(pixel * (2^S - 1)) once at the first step and zeros after.
StepInputs encode_static(const RealTensor& images, const BitAllocation& alloc, Encoder mode);

// Per-step state retained for backpropagation through time.
struct LayerStepCache {
  std::vector<Real> input;             // layer input, [batch x in]
  std::vector<Real> membrane;          // pre-reset potential h, [batch x out]
  std::vector<std::uint32_t> argmax;   // pooling winners, [batch x out]
};

struct ForwardCache {
  std::size_t batch = 0;
  std::vector<std::vector<LayerStepCache>> steps;  // [t][layer]
};

struct ForwardOptions {
  bool record_trace = false;
  // Replace the level staircase by its piecewise-linear integral
  // (gradient verification only).
  bool smooth_spikes = false;
  ForwardCache* cache = nullptr;
};

struct LayerTrace {
  std::size_t layer_index = 0;
  std::vector<SpikeTensor> steps;  // levels [batch, out dims...]
};

// Nonzero counts gathered during a forward pass (exact integers).
struct ActivityCounts {
  std::vector<std::int64_t> active;  // per layer: emitted levels > 0
  std::vector<std::int64_t> slots;   // per layer: neurons x steps x samples
  std::vector<std::int64_t> input_active;  // per layer: nonzero input entries
  std::vector<std::int64_t> input_slots;
};

struct ForwardResult {
  RealTensor logits;  // [batch, classes]
  std::vector<LayerTrace> trace;
  std::vector<std::int64_t> neuron_updates;  // per layer, summed over steps
  ActivityCounts activity;
};

ForwardResult forward(const NetworkSpec& net, const StepInputs& inputs, const ForwardOptions& opts = {});
ForwardResult forward(const NetworkSpec& net, const RealTensor& images, const ForwardOptions& opts = {});

// (weight bits, spike bits) -> MACs per sample per step.
using MacCounts = std::map<std::pair<int, int>, std::int64_t>;
MacCounts count_macs(const NetworkSpec& net);

}  // namespace qsnn
