#pragma once

#include <filesystem>

#include <json.hpp>

#include "qsnn/cost_model.hpp"
#include "qsnn/network.hpp"

namespace qsnn {

using Json = nlohmann::ordered_json;

Json to_json(const BitAllocation& a);
BitAllocation allocation_from_json(const Json& j);  // "W/S/T" string or {w_bits, s_bits, t_steps}

Json to_json(const NeuronParams& p);
NeuronParams neuron_from_json(const Json& j);

// Network document:
// {
//   "format": "qsnn-network", "allocation": "W/S/T",
//   "encoder": ..., "decoder": ..., "step_rule": "max-abs" | "time-power",
//   "layers": [ { "kind": "dense", "in_shape": [...], "out_shape": [...],
//                 "neuron": {...} | null, "weight_bits"?, "spike_bits"?,
//                 "weights"?: [flat floats], "quantized"?: {"step", "codes"} }, ... ]
// }
// Dense layers without "weights" are shape-only stubs, enough for the cost
// model. When "quantized" is present it must agree with the requantized
// weights. Conv layers take "kernel" ([kh, kw] or k), "stride", "padding";
// pooling takes "window".
Json network_to_json(const NetworkSpec& net, bool include_weights = true);
NetworkSpec network_from_json(const Json& j);

void save_network(const std::filesystem::path& path, const NetworkSpec& net);
NetworkSpec load_network(const std::filesystem::path& path);

Json to_json(const CostReport& r);

Json read_json_file(const std::filesystem::path& path);
// Pretty-printed with a trailing newline.
void write_json_file(const std::filesystem::path& path, const Json& j);

}  // namespace qsnn
