#include "qsnn/network.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <random>
#include <sstream>

#include "qsnn/error.hpp"

namespace qsnn {

void BitAllocation::validate() const {
  if (weight_bits < 1 || weight_bits > kFullPrecisionBits) {
    throw ConfigError("allocation weight bits must be in [1, 32], got " + std::to_string(weight_bits));
  }
  if (spike_bits < 1 || spike_bits > 30) {
    throw ConfigError("allocation spike bits must be in [1, 30], got " + std::to_string(spike_bits));
  }
  if (time_steps < 1) throw ConfigError("allocation time steps must be >= 1, got " + std::to_string(time_steps));
}

std::string BitAllocation::to_string() const {
  return std::to_string(weight_bits) + "/" + std::to_string(spike_bits) + "/" + std::to_string(time_steps);
}

BitAllocation BitAllocation::parse(std::string_view text) {
  std::vector<int> parts;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t slash = std::min(text.find('/', pos), text.size());
    const std::string_view field = text.substr(pos, slash - pos);
    int value = 0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (field.empty() || ec != std::errc() || ptr != field.data() + field.size()) {
      throw ConfigError("malformed allocation '" + std::string(text) + "': expected W/S/T with integer fields");
    }
    parts.push_back(value);
    pos = slash + 1;
  }
  if (parts.size() != 3) {
    throw ConfigError("malformed allocation '" + std::string(text) + "': expected exactly three fields W/S/T");
  }
  BitAllocation a{parts[0], parts[1], parts[2]};
  a.validate();
  return a;
}

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::dense: return "dense";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::pooling: return "pooling";
    case LayerKind::flatten: return "flatten";
  }
  return "?";
}

std::string to_string(Encoder e) { return e == Encoder::direct_current ? "direct-current" : "level-quantized"; }
std::string to_string(Decoder d) { return d == Decoder::membrane_sum ? "membrane-sum" : "spike-count"; }

LayerKind parse_layer_kind(std::string_view s) {
  if (s == "dense") return LayerKind::dense;
  if (s == "conv2d") return LayerKind::conv2d;
  if (s == "pooling") return LayerKind::pooling;
  if (s == "flatten") return LayerKind::flatten;
  throw ConfigError("unknown layer kind '" + std::string(s) + "'");
}

Encoder parse_encoder(std::string_view s) {
  if (s == "direct-current") return Encoder::direct_current;
  if (s == "level-quantized") return Encoder::level_quantized;
  throw ConfigError("unknown encoder '" + std::string(s) + "'");
}

Decoder parse_decoder(std::string_view s) {
  if (s == "membrane-sum") return Decoder::membrane_sum;
  if (s == "spike-count") return Decoder::spike_count;
  throw ConfigError("unknown decoder '" + std::string(s) + "'");
}

Shape LayerSpec::weight_shape() const {
  if (kind == LayerKind::dense) return Shape{in_shape.numel(), out_shape.numel()};
  if (kind == LayerKind::conv2d && has_weights()) return weight.shape();
  throw ConfigError("layer kind " + qsnn::to_string(kind) + " has no derivable weight shape");
}

std::size_t LayerSpec::weight_count() const {
  if (!is_weighted_kind()) return 0;
  if (has_weights()) return weight.size();
  return weight_shape().numel();
}

std::int64_t LayerSpec::macs_per_step() const {
  switch (kind) {
    case LayerKind::dense:
      return static_cast<std::int64_t>(in_shape.numel()) * static_cast<std::int64_t>(out_shape.numel());
    case LayerKind::conv2d: {
      // c_out * h_out * w_out * c_in * kh * kw == output count * kernel volume.
      const std::size_t kernel_volume = weight_count() / out_shape[0];
      return static_cast<std::int64_t>(out_shape.numel()) * static_cast<std::int64_t>(kernel_volume);
    }
    default: return 0;
  }
}

LayerSpec make_dense(std::size_t in, std::size_t out, std::optional<NeuronParams> neuron) {
  LayerSpec l;
  l.kind = LayerKind::dense;
  l.in_shape = Shape{in};
  l.out_shape = Shape{out};
  l.weight = RealTensor(Shape{in, out});
  l.neuron = neuron;
  return l;
}

LayerSpec make_conv2d(const Shape& in_shape, std::size_t c_out, std::size_t kernel, Conv2dGeometry g,
                      std::optional<NeuronParams> neuron) {
  if (in_shape.rank() != 3) throw ShapeError("conv2d input must be [c, h, w], got " + in_shape.to_string());
  LayerSpec l;
  l.kind = LayerKind::conv2d;
  l.in_shape = in_shape;
  l.geometry = g;
  l.out_shape = Shape{c_out, conv_output_size(in_shape[1], kernel, g), conv_output_size(in_shape[2], kernel, g)};
  l.weight = RealTensor(Shape{c_out, in_shape[0], kernel, kernel});
  l.neuron = neuron;
  return l;
}

LayerSpec make_max_pool(const Shape& in_shape, std::size_t window) {
  if (in_shape.rank() != 3) throw ShapeError("pooling input must be [c, h, w], got " + in_shape.to_string());
  if (window < 1 || window > in_shape[1] || window > in_shape[2]) {
    throw ShapeError("pooling window " + std::to_string(window) + " does not fit " + in_shape.to_string());
  }
  LayerSpec l;
  l.kind = LayerKind::pooling;
  l.in_shape = in_shape;
  l.pool_window = window;
  l.out_shape = Shape{in_shape[0], in_shape[1] / window, in_shape[2] / window};
  return l;
}

LayerSpec make_flatten(const Shape& in_shape) {
  LayerSpec l;
  l.kind = LayerKind::flatten;
  l.in_shape = in_shape;
  l.out_shape = Shape{in_shape.numel()};
  return l;
}

Shape NetworkSpec::input_shape() const {
  if (layers.empty()) throw ConfigError("network has no layers");
  return layers.front().in_shape;
}

Shape NetworkSpec::output_shape() const {
  if (layers.empty()) throw ConfigError("network has no layers");
  return layers.back().out_shape;
}

int NetworkSpec::layer_weight_bits(std::size_t i) const {
  return layers.at(i).weight_bits.value_or(allocation.weight_bits);
}

int NetworkSpec::layer_spike_bits(std::size_t i) const {
  return layers.at(i).spike_bits.value_or(allocation.spike_bits);
}

void NetworkSpec::validate() const {
  allocation.validate();
  if (layers.empty()) throw ConfigError("network has no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    const std::string where = "layer " + std::to_string(i) + " (" + qsnn::to_string(l.kind) + ")";
    if (l.in_shape.rank() == 0 || l.out_shape.rank() == 0) throw ConfigError(where + ": unresolved shapes");
    if (i > 0 && layers[i - 1].out_shape.numel() != l.in_shape.numel()) {
      throw ShapeError(where + ": input " + l.in_shape.to_string() + " does not match previous output " +
                       layers[i - 1].out_shape.to_string());
    }
    if (l.neuron) {
      l.neuron->validate();
      if (l.neuron->spike_bits != allocation.spike_bits) {
        throw ConfigError(where + ": neuron spike bits " + std::to_string(l.neuron->spike_bits) +
                          " differ from allocation S = " + std::to_string(allocation.spike_bits));
      }
    }
    if (l.weight_bits && (*l.weight_bits < 1 || *l.weight_bits > kFullPrecisionBits)) {
      throw ConfigError(where + ": weight bits out of range");
    }
    if (l.spike_bits && (*l.spike_bits < 1 || *l.spike_bits > 30)) throw ConfigError(where + ": spike bits out of range");
    switch (l.kind) {
      case LayerKind::dense:
        if (l.has_weights() && l.weight.shape() != Shape{l.in_shape.numel(), l.out_shape.numel()}) {
          throw ShapeError(where + ": weight shape " + l.weight.shape().to_string() + " does not match " +
                           l.in_shape.to_string() + " -> " + l.out_shape.to_string());
        }
        break;
      case LayerKind::conv2d: {
        if (l.in_shape.rank() != 3 || l.out_shape.rank() != 3) throw ShapeError(where + ": needs [c, h, w] shapes");
        if (!l.has_weights()) throw ConfigError(where + ": conv2d needs a kernel tensor");
        const Shape& ks = l.weight.shape();
        if (ks.rank() != 4 || ks[0] != l.out_shape[0] || ks[1] != l.in_shape[0] ||
            conv_output_size(l.in_shape[1], ks[2], l.geometry) != l.out_shape[1] ||
            conv_output_size(l.in_shape[2], ks[3], l.geometry) != l.out_shape[2]) {
          throw ShapeError(where + ": kernel " + ks.to_string() + " inconsistent with " + l.in_shape.to_string() +
                           " -> " + l.out_shape.to_string());
        }
        break;
      }
      case LayerKind::pooling:
        if (l.in_shape.rank() != 3 || l.out_shape != Shape{l.in_shape[0], l.in_shape[1] / l.pool_window,
                                                           l.in_shape[2] / l.pool_window}) {
          throw ShapeError(where + ": pooling shapes inconsistent");
        }
        if (l.neuron) throw ConfigError(where + ": pooling layers carry no neurons");
        break;
      case LayerKind::flatten:
        if (l.out_shape.numel() != l.in_shape.numel()) throw ShapeError(where + ": flatten changes element count");
        if (l.neuron) throw ConfigError(where + ": flatten layers carry no neurons");
        break;
    }
  }
  if (decoder == Decoder::spike_count && !layers.back().neuron) {
    throw ConfigError("spike-count decoding needs a spiking output layer");
  }
}

void NetworkSpec::requantize() {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    LayerSpec& l = layers[i];
    if (!l.is_weighted_kind() || !l.has_weights()) continue;
    l.quantized = quantize_weights(l.weight, layer_weight_bits(i),
                                   WeightQuantOptions{step_rule, allocation.time_steps});
  }
}

void NetworkSpec::set_allocation(const BitAllocation& alloc) {
  alloc.validate();
  allocation = alloc;
  for (LayerSpec& l : layers) {
    if (l.neuron) l.neuron->spike_bits = alloc.spike_bits;
  }
  requantize();
}

void initialize_weights(NetworkSpec& net, std::uint64_t seed, Real gain) {
  std::mt19937_64 rng(seed);
  for (LayerSpec& l : net.layers) {
    if (!l.is_weighted_kind()) continue;
    if (!l.has_weights()) l.weight = RealTensor(l.weight_shape());
    const std::size_t fan_in = l.kind == LayerKind::dense ? l.in_shape.numel() : l.weight.size() / l.weight.shape()[0];
    std::normal_distribution<Real> dist(0.0, gain * std::sqrt(2.0 / static_cast<Real>(fan_in)));
    for (Real& w : l.weight.data()) w = dist(rng);
  }
  net.requantize();
}

NetworkSpec make_mlp(const std::vector<std::size_t>& widths, const BitAllocation& alloc, const NeuronParams& neuron) {
  if (widths.size() < 2) throw ConfigError("an MLP needs at least an input and an output width");
  alloc.validate();
  NeuronParams p = neuron;
  p.spike_bits = alloc.spike_bits;
  NetworkSpec net;
  net.allocation = alloc;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const bool output = i + 2 == widths.size();
    net.layers.push_back(make_dense(widths[i], widths[i + 1], output ? std::nullopt : std::optional(p)));
  }
  net.requantize();
  return net;
}

NetworkSpec make_cnn(const BitAllocation& alloc, const NeuronParams& neuron) {
  alloc.validate();
  NeuronParams p = neuron;
  p.spike_bits = alloc.spike_bits;
  NetworkSpec net;
  net.allocation = alloc;
  net.layers.push_back(make_conv2d(Shape{1, 28, 28}, 8, 3, {}, p));
  net.layers.push_back(make_max_pool(net.layers.back().out_shape, 2));
  net.layers.push_back(make_conv2d(net.layers.back().out_shape, 16, 3, {}, p));
  net.layers.push_back(make_max_pool(net.layers.back().out_shape, 2));
  net.layers.push_back(make_flatten(net.layers.back().out_shape));
  net.layers.push_back(make_dense(net.layers.back().out_shape.numel(), 64, p));
  net.layers.push_back(make_dense(64, 10, std::nullopt));
  net.requantize();
  return net;
}

NetworkSpec make_preset(std::string_view name, const BitAllocation& alloc, const NeuronParams& neuron) {
  if (name == "mlp") return make_mlp({784, 256, 10}, alloc, neuron);
  if (name == "cnn") return make_cnn(alloc, neuron);
  if (name == "event-mlp") {
    NetworkSpec net = make_mlp({512, 128, 4}, alloc, neuron);
    net.layers.front().in_shape = Shape{2, 16, 16};
    return net;
  }
  if (name.starts_with("mlp:")) {
    std::vector<std::size_t> widths;
    std::string_view rest = name.substr(4);
    while (!rest.empty()) {
      const std::size_t dash = std::min(rest.find('-'), rest.size());
      std::size_t v = 0;
      const auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + dash, v);
      if (ec != std::errc() || ptr != rest.data() + dash || v == 0) {
        throw ConfigError("malformed preset '" + std::string(name) + "'");
      }
      widths.push_back(v);
      rest = dash < rest.size() ? rest.substr(dash + 1) : std::string_view{};
    }
    return make_mlp(widths, alloc, neuron);
  }
  throw ConfigError("unknown architecture preset '" + std::string(name) + "'");
}

StepInputs encode_static(const RealTensor& images, const BitAllocation& alloc, Encoder mode) {
  alloc.validate();
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (!(images[i] >= 0.0 && images[i] <= 1.0)) {
      throw RangeError("pixel " + std::to_string(i) + " = " + std::to_string(images[i]) + " outside [0, 1]");
    }
  }
  StepInputs steps;
  steps.reserve(static_cast<std::size_t>(alloc.time_steps));
  if (mode == Encoder::direct_current) {
    for (int t = 0; t < alloc.time_steps; ++t) steps.push_back(images);
    return steps;
  }
  const auto top = static_cast<Real>((std::int64_t{1} << alloc.spike_bits) - 1);
  RealTensor first(images.shape());
  for (std::size_t i = 0; i < images.size(); ++i) first[i] = std::floor(images[i] * top);
  steps.push_back(std::move(first));
  for (int t = 1; t < alloc.time_steps; ++t) steps.emplace_back(images.shape(), 0.0);
  return steps;
}

namespace {

void run_pool(const LayerSpec& l, std::size_t batch, std::span<const Real> x, std::span<Real> z,
              std::vector<std::uint32_t>* argmax) {
  const std::size_t c = l.in_shape[0], h = l.in_shape[1], w = l.in_shape[2];
  const std::size_t p = l.pool_window, ho = l.out_shape[1], wo = l.out_shape[2];
  const std::size_t in_n = l.in_shape.numel(), out_n = l.out_shape.numel();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t oy = 0; oy < ho; ++oy) {
        for (std::size_t ox = 0; ox < wo; ++ox) {
          std::size_t best = (ch * h + oy * p) * w + ox * p;
          for (std::size_t dy = 0; dy < p; ++dy) {
            for (std::size_t dx = 0; dx < p; ++dx) {
              const std::size_t idx = (ch * h + oy * p + dy) * w + ox * p + dx;
              if (x[b * in_n + idx] > x[b * in_n + best]) best = idx;
            }
          }
          const std::size_t o = b * out_n + (ch * ho + oy) * wo + ox;
          z[o] = x[b * in_n + best];
          if (argmax) (*argmax)[o] = static_cast<std::uint32_t>(best);
        }
      }
    }
  }
}

std::int64_t count_nonzero(std::span<const Real> x) {
  std::int64_t n = 0;
  for (Real v : x) n += v != 0.0 ? 1 : 0;
  return n;
}

}  // namespace

ForwardResult forward(const NetworkSpec& net, const StepInputs& inputs, const ForwardOptions& opts) {
  net.validate();
  const auto steps = static_cast<std::size_t>(net.allocation.time_steps);
  if (inputs.size() != steps) {
    throw ShapeError("forward expects " + std::to_string(steps) + " step inputs, got " + std::to_string(inputs.size()));
  }
  const std::size_t in_numel = net.input_shape().numel();
  const Shape& first_shape = inputs.front().shape();
  if (first_shape.rank() < 2 || first_shape.numel() % in_numel != 0 || first_shape.numel() / first_shape[0] != in_numel) {
    throw ShapeError("input " + first_shape.to_string() + " does not match network input " +
                     net.input_shape().to_string() + " with a leading batch dimension");
  }
  const std::size_t batch = first_shape[0];
  for (const RealTensor& x : inputs) {
    if (x.shape() != first_shape) throw ShapeError("step inputs must share one shape");
  }
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& l = net.layers[i];
    if (l.is_weighted_kind() && (!l.has_weights() || l.quantized.values.size() != l.weight.size())) {
      throw ConfigError("layer " + std::to_string(i) + " has no resolved weights; cannot run forward");
    }
  }

  const std::size_t n_layers = net.layers.size();
  const std::size_t classes = net.output_shape().numel();
  std::vector<std::size_t> out_dims{batch};
  for (std::size_t d : net.output_shape().dims()) out_dims.push_back(d);

  ForwardResult result;
  result.logits = RealTensor(Shape{batch, classes});
  result.neuron_updates.assign(n_layers, 0);
  result.activity.active.assign(n_layers, 0);
  result.activity.slots.assign(n_layers, 0);
  result.activity.input_active.assign(n_layers, 0);
  result.activity.input_slots.assign(n_layers, 0);
  if (opts.record_trace) {
    for (std::size_t i = 0; i < n_layers; ++i) {
      if (net.layers[i].neuron) result.trace.push_back(LayerTrace{i, {}});
    }
  }
  if (opts.cache) {
    opts.cache->batch = batch;
    opts.cache->steps.assign(steps, std::vector<LayerStepCache>(n_layers));
  }

  std::vector<std::vector<Real>> membrane(n_layers);
  for (std::size_t i = 0; i < n_layers; ++i) {
    if (net.layers[i].neuron) membrane[i].assign(batch * net.layers[i].out_shape.numel(), net.layers[i].neuron->v_rst);
  }

  for (std::size_t t = 0; t < steps; ++t) {
    std::vector<Real> x(inputs[t].values());
    std::size_t trace_slot = 0;
    for (std::size_t li = 0; li < n_layers; ++li) {
      const LayerSpec& l = net.layers[li];
      const std::size_t in_n = l.in_shape.numel(), out_n = l.out_shape.numel();
      LayerStepCache* cache = opts.cache ? &opts.cache->steps[t][li] : nullptr;
      if (cache && l.is_weighted_kind()) cache->input = x;

      std::vector<Real> z(batch * out_n);
      switch (l.kind) {
        case LayerKind::dense:
          kernels::gemm_nn(x, l.quantized.values.data(), z, batch, in_n, out_n);
          break;
        case LayerKind::conv2d: {
          const Shape& ks = l.weight.shape();
          const std::size_t kvol = ks[1] * ks[2] * ks[3];
          const std::size_t pixels = l.out_shape[1] * l.out_shape[2];
          std::vector<Real> cols(kvol * pixels);
          for (std::size_t b = 0; b < batch; ++b) {
            kernels::im2col(std::span<const Real>(x).subspan(b * in_n, in_n), l.in_shape[0], l.in_shape[1],
                            l.in_shape[2], ks[2], ks[3], l.geometry, cols);
            kernels::gemm_nn(l.quantized.values.data(), cols, std::span<Real>(z).subspan(b * out_n, out_n), ks[0],
                             kvol, pixels);
          }
          break;
        }
        case LayerKind::pooling:
          if (cache) cache->argmax.assign(batch * out_n, 0);
          run_pool(l, batch, x, z, cache ? &cache->argmax : nullptr);
          break;
        case LayerKind::flatten:
          z = x;
          break;
      }
      if (l.is_weighted_kind()) {
        result.activity.input_active[li] += count_nonzero(x);
        result.activity.input_slots[li] += static_cast<std::int64_t>(x.size());
      }

      const bool last = li + 1 == n_layers;
      if (last && net.decoder == Decoder::membrane_sum) {
        for (std::size_t i = 0; i < z.size(); ++i) result.logits[i] += z[i];
      }

      if (!l.neuron) {
        x = std::move(z);
        continue;
      }

      const NeuronParams& p = *l.neuron;
      const Real leak = p.leak();
      std::vector<Real>& v = membrane[li];
      std::vector<std::int64_t> levels(z.size());
      if (cache) cache->membrane.resize(z.size());
      for (std::size_t i = 0; i < z.size(); ++i) {
        const Real h = neuron_math::integrate(v[i], z[i], leak);
        if (cache) cache->membrane[i] = h;
        const std::int64_t level = neuron_math::fire_level(h, p);
        levels[i] = level;
        if (opts.smooth_spikes) {
          const Real s = neuron_math::smooth_level(h, p);
          z[i] = s * p.v_th;
          if (p.reset_mode == ResetMode::hard) {
            const Real g = neuron_math::ramp(h, p.v_th, p.surrogate_width);
            v[i] = h * (1.0 - g) + p.v_rst * g;
          } else {
            v[i] = h - s * p.v_th;
          }
        } else {
          z[i] = static_cast<Real>(level) * p.v_th;
          v[i] = neuron_math::reset(h, level, p);
        }
      }
      result.neuron_updates[li] += 1;
      result.activity.active[li] += std::count_if(levels.begin(), levels.end(), [](std::int64_t l) { return l > 0; });
      result.activity.slots[li] += static_cast<std::int64_t>(levels.size());
      if (last && net.decoder == Decoder::spike_count) {
        for (std::size_t i = 0; i < levels.size(); ++i) {
          result.logits[i] += opts.smooth_spikes ? z[i] / p.v_th : static_cast<Real>(levels[i]);
        }
      }
      if (opts.record_trace) {
        std::vector<std::size_t> dims{batch};
        for (std::size_t d : l.out_shape.dims()) dims.push_back(d);
        result.trace[trace_slot].steps.push_back(
            SpikeTensor{IntTensor(Shape(dims), std::move(levels), p.spike_bits, true), p.spike_bits});
        ++trace_slot;
      }
      x = std::move(z);
    }
  }
  return result;
}

ForwardResult forward(const NetworkSpec& net, const RealTensor& images, const ForwardOptions& opts) {
  return forward(net, encode_static(images, net.allocation, net.encoder), opts);
}

MacCounts count_macs(const NetworkSpec& net) {
  MacCounts counts;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& l = net.layers[i];
    if (!l.is_weighted_kind()) continue;
    if (l.in_shape.rank() == 0 || l.out_shape.rank() == 0) {
      throw ConfigError("layer " + std::to_string(i) + " has unresolved shapes");
    }
    counts[{net.layer_weight_bits(i), net.layer_spike_bits(i)}] += l.macs_per_step();
  }
  return counts;
}

}  // namespace qsnn
