#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qsnn/data_io.hpp"
#include "qsnn/network.hpp"

namespace qsnn {

// T * W * S
std::int64_t bit_budget(const BitAllocation& alloc);

// Synaptic operations per inference: (sum of MACs per step) * T.
std::int64_t sops(const MacCounts& macs, int time_steps);
std::int64_t sops(const NetworkSpec& net);

// S-ACE = sum over bit classes of n_{w,s} * (T * w * s), n counted per step.
std::int64_t s_ace(const MacCounts& macs, int time_steps);
std::int64_t s_ace(const NetworkSpec& net);

// One MAC group with the firing rate of the tensor feeding it.
struct MacTerm {
  int weight_bits = 1;
  int spike_bits = 1;
  std::int64_t macs = 0;  // per step
  double firing_rate = 1.0;
};

// NS-ACE = sum fr * n * BB. Throws RangeError for rates outside [0,1].
double ns_ace(std::span<const MacTerm> terms, int time_steps);
// input_rates: one rate per weighted (dense/conv) layer, in layer order.
double ns_ace(const NetworkSpec& net, std::span<const double> input_rates);

struct ParamBits {
  std::int64_t bits = 0;
  double f16_equiv_millions = 0.0;  // bits / 16 / 1e6
};
ParamBits param_bits(const NetworkSpec& net);

struct FiringProfile {
  std::vector<std::size_t> layer_indices;  // spiking layers
  std::vector<double> layer_rates;          // fraction of (sample, step, neuron) slots with level > 0
  std::vector<std::size_t> weighted_layers;
  std::vector<double> input_rates;          // nonzero fraction of each weighted layer's input
  std::size_t samples = 0;

  double mean_rate() const;
};

FiringProfile profile_firing_rates(const NetworkSpec& net, std::span<const StepInputs> batches);
FiringProfile profile_firing_rates(const NetworkSpec& net, const Dataset& data, std::span<const std::size_t> indices,
                                   std::size_t batch_size = 256);

struct CostReport {
  BitAllocation allocation;
  std::int64_t bit_budget = 0;
  std::int64_t sops = 0;
  std::int64_t s_ace = 0;
  std::optional<double> ns_ace;  // needs a firing profile
  std::int64_t param_bits = 0;
  double params_f16_equiv = 0.0;
  std::vector<double> per_layer_firing_rate;
  std::optional<double> accuracy;
  std::optional<double> energy_estimate;  // k * S-ACE when k is supplied

  std::optional<double> fr_mean() const;
};

CostReport make_cost_report(const NetworkSpec& net, const FiringProfile* profile = nullptr,
                            std::optional<double> energy_per_bit_op = std::nullopt);

// Fixed CSV schema shared by cost, train and sweep outputs.
inline constexpr const char* kCostCsvHeader = "w_bits,s_bits,t_steps,bit_budget,params_bits,sops,s_ace,ns_ace,acc,fr_mean";
std::string cost_csv_row(const CostReport& r);

}  // namespace qsnn
