#include "qsnn/cost_model.hpp"

#include <algorithm>
#include <charconv>
#include <numeric>

#include "qsnn/error.hpp"

namespace qsnn {

std::int64_t bit_budget(const BitAllocation& alloc) {
  alloc.validate();
  return static_cast<std::int64_t>(alloc.time_steps) * alloc.weight_bits * alloc.spike_bits;
}

std::int64_t sops(const MacCounts& macs, int time_steps) {
  std::int64_t per_step = 0;
  for (const auto& [cls, n] : macs) per_step += n;
  return per_step * time_steps;
}

std::int64_t sops(const NetworkSpec& net) { return sops(count_macs(net), net.allocation.time_steps); }

std::int64_t s_ace(const MacCounts& macs, int time_steps) {
  std::int64_t total = 0;
  for (const auto& [cls, n] : macs) {
    total += n * bit_budget(BitAllocation{cls.first, cls.second, time_steps});
  }
  return total;
}

std::int64_t s_ace(const NetworkSpec& net) { return s_ace(count_macs(net), net.allocation.time_steps); }

double ns_ace(std::span<const MacTerm> terms, int time_steps) {
  double total = 0.0;
  for (const MacTerm& term : terms) {
    if (!(term.firing_rate >= 0.0 && term.firing_rate <= 1.0)) {
      throw RangeError("firing rate " + std::to_string(term.firing_rate) + " outside [0, 1]");
    }
    const std::int64_t bb = bit_budget(BitAllocation{term.weight_bits, term.spike_bits, time_steps});
    total += term.firing_rate * static_cast<double>(term.macs * bb);
  }
  return total;
}

double ns_ace(const NetworkSpec& net, std::span<const double> input_rates) {
  std::vector<MacTerm> terms;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& l = net.layers[i];
    if (!l.is_weighted_kind()) continue;
    if (terms.size() >= input_rates.size()) break;
    terms.push_back(MacTerm{net.layer_weight_bits(i), net.layer_spike_bits(i), l.macs_per_step(),
                            input_rates[terms.size()]});
  }
  const auto weighted = static_cast<std::size_t>(std::count_if(
      net.layers.begin(), net.layers.end(), [](const LayerSpec& l) { return l.is_weighted_kind(); }));
  if (input_rates.size() != weighted) {
    throw ConfigError("ns_ace needs one firing rate per weighted layer (" + std::to_string(weighted) + "), got " +
                      std::to_string(input_rates.size()));
  }
  return ns_ace(terms, net.allocation.time_steps);
}

ParamBits param_bits(const NetworkSpec& net) {
  ParamBits p;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& l = net.layers[i];
    if (!l.is_weighted_kind()) continue;
    p.bits += static_cast<std::int64_t>(l.weight_count()) * net.layer_weight_bits(i);
  }
  p.f16_equiv_millions = static_cast<double>(p.bits) / 16.0 / 1e6;
  return p;
}

double FiringProfile::mean_rate() const {
  if (layer_rates.empty()) return 0.0;
  return std::accumulate(layer_rates.begin(), layer_rates.end(), 0.0) / static_cast<double>(layer_rates.size());
}

FiringProfile profile_firing_rates(const NetworkSpec& net, std::span<const StepInputs> batches) {
  if (batches.empty()) throw ConfigError("firing-rate profiling needs at least one sample");
  const std::size_t n = net.layers.size();
  std::vector<std::int64_t> active(n, 0), slots(n, 0), in_active(n, 0), in_slots(n, 0);
  FiringProfile prof;
  for (const StepInputs& batch : batches) {
    if (batch.empty()) throw ConfigError("empty step input batch");
    const ForwardResult r = forward(net, batch);
    prof.samples += batch.front().shape()[0];
    for (std::size_t i = 0; i < n; ++i) {
      active[i] += r.activity.active[i];
      slots[i] += r.activity.slots[i];
      in_active[i] += r.activity.input_active[i];
      in_slots[i] += r.activity.input_slots[i];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (net.layers[i].neuron) {
      prof.layer_indices.push_back(i);
      prof.layer_rates.push_back(static_cast<double>(active[i]) / static_cast<double>(slots[i]));
    }
    if (net.layers[i].is_weighted_kind()) {
      prof.weighted_layers.push_back(i);
      prof.input_rates.push_back(static_cast<double>(in_active[i]) / static_cast<double>(in_slots[i]));
    }
  }
  return prof;
}

FiringProfile profile_firing_rates(const NetworkSpec& net, const Dataset& data, std::span<const std::size_t> indices,
                                   std::size_t batch_size) {
  if (indices.empty()) throw ConfigError("firing-rate profiling needs a nonempty sample set");
  batch_size = std::max<std::size_t>(1, batch_size);
  std::vector<StepInputs> batches;
  for (std::size_t start = 0; start < indices.size(); start += batch_size) {
    const std::size_t len = std::min(batch_size, indices.size() - start);
    batches.push_back(make_step_inputs(data, indices.subspan(start, len), net.allocation, net.encoder));
  }
  return profile_firing_rates(net, batches);
}

std::optional<double> CostReport::fr_mean() const {
  if (per_layer_firing_rate.empty()) return std::nullopt;
  return std::accumulate(per_layer_firing_rate.begin(), per_layer_firing_rate.end(), 0.0) /
         static_cast<double>(per_layer_firing_rate.size());
}

CostReport make_cost_report(const NetworkSpec& net, const FiringProfile* profile,
                            std::optional<double> energy_per_bit_op) {
  net.validate();
  CostReport r;
  r.allocation = net.allocation;
  const MacCounts macs = count_macs(net);
  r.bit_budget = bit_budget(net.allocation);
  r.sops = sops(macs, net.allocation.time_steps);
  r.s_ace = s_ace(macs, net.allocation.time_steps);
  const ParamBits pb = param_bits(net);
  r.param_bits = pb.bits;
  r.params_f16_equiv = pb.f16_equiv_millions;
  if (profile) {
    r.per_layer_firing_rate = profile->layer_rates;
    r.ns_ace = ns_ace(net, profile->input_rates);
  }
  if (energy_per_bit_op) r.energy_estimate = *energy_per_bit_op * static_cast<double>(r.s_ace);
  return r;
}

namespace {

std::string shortest(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return ec == std::errc() ? std::string(buf, ptr) : std::to_string(v);
}

std::string optional_field(const std::optional<double>& v) { return v ? shortest(*v) : std::string(); }

}  // namespace

std::string cost_csv_row(const CostReport& r) {
  return std::to_string(r.allocation.weight_bits) + "," + std::to_string(r.allocation.spike_bits) + "," +
         std::to_string(r.allocation.time_steps) + "," + std::to_string(r.bit_budget) + "," +
         std::to_string(r.param_bits) + "," + std::to_string(r.sops) + "," + std::to_string(r.s_ace) + "," +
         optional_field(r.ns_ace) + "," + optional_field(r.accuracy) + "," + optional_field(r.fr_mean());
}

}  // namespace qsnn
