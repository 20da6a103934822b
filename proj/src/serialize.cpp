#include "qsnn/serialize.hpp"

#include <cmath>
#include <fstream>

#include "qsnn/error.hpp"

namespace qsnn {

namespace {

template <typename T>
T get_or(const Json& j, const char* key, T fallback) {
  return j.contains(key) && !j.at(key).is_null() ? j.at(key).get<T>() : fallback;
}

Shape shape_from_json(const Json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw ConfigError(where + ": shape must be a nonempty array");
  std::vector<std::size_t> dims;
  for (const Json& d : j) {
    if (!d.is_number_integer() || d.get<std::int64_t>() < 1) throw ConfigError(where + ": shape dims must be >= 1");
    dims.push_back(d.get<std::size_t>());
  }
  return Shape(dims);
}

Json shape_to_json(const Shape& s) { return Json(s.dims()); }

std::string to_string(StepRule r) { return r == StepRule::max_abs ? "max-abs" : "time-power"; }

StepRule parse_step_rule(const std::string& s) {
  if (s == "max-abs") return StepRule::max_abs;
  if (s == "time-power") return StepRule::time_power;
  throw ConfigError("unknown step rule '" + s + "'");
}

}  // namespace

Json to_json(const BitAllocation& a) { return a.to_string(); }

BitAllocation allocation_from_json(const Json& j) {
  if (j.is_string()) return BitAllocation::parse(j.get<std::string>());
  if (j.is_object()) {
    BitAllocation a{j.at("w_bits").get<int>(), j.at("s_bits").get<int>(), j.at("t_steps").get<int>()};
    a.validate();
    return a;
  }
  throw ConfigError("allocation must be a \"W/S/T\" string or an object");
}

Json to_json(const NeuronParams& p) {
  return Json{{"tau", p.tau},
              {"v_th", p.v_th},
              {"v_rst", p.v_rst},
              {"reset", p.reset_mode == ResetMode::hard ? "hard" : "subtract"},
              {"spike_bits", p.spike_bits},
              {"surrogate_width", p.surrogate_width}};
}

NeuronParams neuron_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("neuron parameters must be an object");
  NeuronParams p;
  p.tau = get_or(j, "tau", p.tau);
  p.v_th = get_or(j, "v_th", p.v_th);
  p.v_rst = get_or(j, "v_rst", p.v_rst);
  const std::string reset = get_or<std::string>(j, "reset", "hard");
  if (reset == "hard") {
    p.reset_mode = ResetMode::hard;
  } else if (reset == "subtract") {
    p.reset_mode = ResetMode::subtract;
  } else {
    throw ConfigError("unknown reset mode '" + reset + "'");
  }
  p.spike_bits = get_or(j, "spike_bits", p.spike_bits);
  p.surrogate_width = get_or(j, "surrogate_width", p.surrogate_width);
  p.validate();
  return p;
}

Json network_to_json(const NetworkSpec& net, bool include_weights) {
  Json layers = Json::array();
  for (const LayerSpec& l : net.layers) {
    Json jl{{"kind", to_string(l.kind)}, {"in_shape", shape_to_json(l.in_shape)},
            {"out_shape", shape_to_json(l.out_shape)}};
    jl["neuron"] = l.neuron ? to_json(*l.neuron) : Json(nullptr);
    if (l.weight_bits) jl["weight_bits"] = *l.weight_bits;
    if (l.spike_bits) jl["spike_bits"] = *l.spike_bits;
    if (l.kind == LayerKind::conv2d) {
      jl["kernel"] = Json::array({l.weight.shape()[2], l.weight.shape()[3]});
      jl["stride"] = l.geometry.stride;
      jl["padding"] = l.geometry.padding;
    }
    if (l.kind == LayerKind::pooling) jl["window"] = l.pool_window;
    if (include_weights && l.is_weighted_kind() && l.has_weights()) {
      jl["weights"] = l.weight.values();
      jl["quantized"] = Json{{"step", l.quantized.step}, {"codes", l.quantized.codes.values()}};
    }
    layers.push_back(std::move(jl));
  }
  return Json{{"format", "qsnn-network"},
              {"allocation", to_json(net.allocation)},
              {"encoder", to_string(net.encoder)},
              {"decoder", to_string(net.decoder)},
              {"step_rule", to_string(net.step_rule)},
              {"layers", std::move(layers)}};
}

NetworkSpec network_from_json(const Json& j) {
  try {
    if (!j.is_object()) throw ConfigError("network document must be a JSON object");
    if (j.contains("format") && j.at("format") != "qsnn-network") throw ConfigError("not a qsnn-network document");
    NetworkSpec net;
    net.allocation = allocation_from_json(j.at("allocation"));
    net.encoder = parse_encoder(get_or<std::string>(j, "encoder", "direct-current"));
    net.decoder = parse_decoder(get_or<std::string>(j, "decoder", "membrane-sum"));
    net.step_rule = parse_step_rule(get_or<std::string>(j, "step_rule", "max-abs"));

    const Json& layers = j.at("layers");
    if (!layers.is_array() || layers.empty()) throw ConfigError("network needs a nonempty layer list");
    std::vector<const Json*> stored_codes;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const Json& jl = layers[i];
      const std::string where = "layer " + std::to_string(i);
      LayerSpec l;
      l.kind = parse_layer_kind(jl.at("kind").get<std::string>());
      l.in_shape = shape_from_json(jl.at("in_shape"), where);
      if (jl.contains("neuron") && !jl.at("neuron").is_null()) l.neuron = neuron_from_json(jl.at("neuron"));
      if (jl.contains("weight_bits")) l.weight_bits = jl.at("weight_bits").get<int>();
      if (jl.contains("spike_bits")) l.spike_bits = jl.at("spike_bits").get<int>();
      switch (l.kind) {
        case LayerKind::dense:
          l.out_shape = shape_from_json(jl.at("out_shape"), where);
          break;
        case LayerKind::conv2d: {
          if (l.in_shape.rank() != 3) throw ShapeError(where + ": conv2d input must be [c, h, w]");
          const Json& k = jl.at("kernel");
          const std::size_t kh = k.is_array() ? k.at(0).get<std::size_t>() : k.get<std::size_t>();
          const std::size_t kw = k.is_array() ? k.at(1).get<std::size_t>() : kh;
          l.geometry.stride = get_or<std::size_t>(jl, "stride", 1);
          l.geometry.padding = get_or<std::size_t>(jl, "padding", 0);
          const Shape out = shape_from_json(jl.at("out_shape"), where);
          l.out_shape = Shape{out[0], conv_output_size(l.in_shape[1], kh, l.geometry),
                              conv_output_size(l.in_shape[2], kw, l.geometry)};
          if (out != l.out_shape) throw ShapeError(where + ": out_shape inconsistent with kernel and geometry");
          l.weight = RealTensor(Shape{out[0], l.in_shape[0], kh, kw});
          break;
        }
        case LayerKind::pooling:
          l.pool_window = get_or<std::size_t>(jl, "window", 2);
          l = make_max_pool(l.in_shape, l.pool_window);
          break;
        case LayerKind::flatten:
          l = make_flatten(l.in_shape);
          break;
      }
      if (jl.contains("weights")) {
        if (!l.is_weighted_kind()) throw ConfigError(where + ": only dense and conv2d layers take weights");
        std::vector<Real> w = jl.at("weights").get<std::vector<Real>>();
        const Shape ws = l.weight_shape();
        if (w.size() != ws.numel()) {
          throw ShapeError(where + ": expected " + std::to_string(ws.numel()) + " weights, got " +
                           std::to_string(w.size()));
        }
        for (Real v : w) {
          if (!std::isfinite(v)) throw ConfigError(where + ": non-finite weight");
        }
        l.weight = RealTensor(ws, std::move(w));
      }
      stored_codes.push_back(jl.contains("quantized") ? &jl.at("quantized") : nullptr);
      net.layers.push_back(std::move(l));
    }
    net.validate();
    net.requantize();
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
      if (!stored_codes[i]) continue;
      const LayerSpec& l = net.layers[i];
      if (!l.has_weights()) throw ConfigError("layer " + std::to_string(i) + ": quantized codes without weights");
      const auto codes = stored_codes[i]->at("codes").get<std::vector<std::int64_t>>();
      const Real step = stored_codes[i]->at("step").get<Real>();
      if (codes != l.quantized.codes.values() || step != l.quantized.step) {
        throw ConfigError("layer " + std::to_string(i) +
                          ": stored quantized codes disagree with the weights under the layer's scheme");
      }
    }
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed network document: ") + e.what());
  }
}

void save_network(const std::filesystem::path& path, const NetworkSpec& net) {
  write_json_file(path, network_to_json(net));
}

NetworkSpec load_network(const std::filesystem::path& path) { return network_from_json(read_json_file(path)); }

Json to_json(const CostReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
  return Json{{"allocation", to_json(r.allocation)},
              {"bit_budget", r.bit_budget},
              {"sops", r.sops},
              {"s_ace", r.s_ace},
              {"ns_ace", opt(r.ns_ace)},
              {"param_bits", r.param_bits},
              {"params_f16_equiv_millions", r.params_f16_equiv},
              {"per_layer_firing_rate", r.per_layer_firing_rate},
              {"fr_mean", opt(r.fr_mean())},
              {"accuracy", opt(r.accuracy)},
              {"energy_estimate", opt(r.energy_estimate)}};
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const Json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace qsnn
