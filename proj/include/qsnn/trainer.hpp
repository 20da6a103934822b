#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "qsnn/cost_model.hpp"
#include "qsnn/data_io.hpp"
#include "qsnn/network.hpp"
#include "qsnn/serialize.hpp"

namespace qsnn {

// ---------------------------------------------------------------- BPTT

struct BackwardOptions {
  // Forward through the piecewise-linear level ramp instead of the staircase.
  bool smooth_spikes = false;
  // Stop-gradient through the reset branch (dv'/dh ignores the spike).
  bool detach_reset = true;
};

struct LossAndGradients {
  Real loss = 0.0;            // mean cross-entropy over the batch
  std::size_t correct = 0;    // argmax hits
  // Gradient of the loss with respect to each layer's effective (quantized)
  // weights; empty for layers without weights.
  std::vector<RealTensor> weight_grads;
};

// Mean softmax cross-entropy of logits [batch, classes].
Real cross_entropy(const RealTensor& logits, std::span<const int> labels);
// argmax with ties broken towards the lower index.
std::size_t argmax_row(const RealTensor& logits, std::size_t row);

LossAndGradients compute_gradients(const NetworkSpec& net, const StepInputs& inputs, std::span<const int> labels,
                                   const BackwardOptions& opts = {});

// ---------------------------------------------------------------- training

enum class OptimizerKind { adam, sgd_momentum };
enum class QuantMode { qat, post_training };

std::string to_string(OptimizerKind k);
std::string to_string(QuantMode m);
OptimizerKind parse_optimizer(std::string_view s);
QuantMode parse_quant_mode(std::string_view s);

struct TrainConfig {
  std::size_t epochs = 5;
  std::size_t batch_size = 32;
  Real learning_rate = 5e-4;
  Real momentum = 0.9;       // sgd-momentum
  Real beta1 = 0.9, beta2 = 0.999, eps = 1e-8;  // adam
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::adam;
  QuantMode quantization = QuantMode::qat;
  BitAllocation allocation{4, 4, 1};
  std::string dataset = "synth-digits";
  std::string architecture = "mlp";  // preset used when the trainer builds the network
  NeuronParams neuron;
  Real init_gain = 1.0;
  bool detach_reset = true;
  bool strict_deterministic = false;

  void validate() const;
};

Json to_json(const TrainConfig& c);
// Starts from `base` and overrides the fields present in j.
TrainConfig train_config_from_json(const Json& j, TrainConfig base = {});

struct EpochRecord {
  std::size_t epoch = 0;
  Real train_loss = 0.0;
  Real train_accuracy = 0.0;
  std::optional<Real> test_accuracy;
};

struct RunRecord {
  TrainConfig config;
  std::vector<EpochRecord> epochs;
  CostReport cost;
  std::optional<Real> final_accuracy;  // test split
  std::optional<double> wall_time_seconds;  // omitted in strict-deterministic mode
};

Json to_json(const RunRecord& r);

// Instrumentation points, mainly for tests.
struct TrainHooks {
  // Called with the network exactly as used by each training forward pass.
  std::function<void(const NetworkSpec&, std::size_t update)> before_update;
};

// Builds the preset named in cfg.architecture with cfg's allocation and
// neuron parameters, initialised from cfg.seed.
NetworkSpec build_network(const TrainConfig& cfg, const Dataset& data);

// Surrogate-gradient BPTT with straight-through weight gradients. Shadow
// weights live in layer.weight and are requantized after every update.
// Throws DivergenceError when the loss becomes non-finite.
std::pair<NetworkSpec, RunRecord> train(const TrainConfig& cfg, NetworkSpec net, const Dataset& data,
                                        const TrainHooks& hooks = {});

// Top-1 accuracy over the given indices (the test split by default).
Real evaluate(const NetworkSpec& net, const Dataset& data, std::span<const std::size_t> indices,
              std::size_t batch_size = 256);
Real evaluate(const NetworkSpec& net, const Dataset& data);

// ---------------------------------------------------------------- sweeps

struct SweepRow {
  BitAllocation allocation;
  RunRecord record;
};

// Trains every candidate with cfg (seed and epochs shared) on a freshly
// built network. Candidates must satisfy W*S*T == budget unless
// allow_budget_mismatch is set. Rows are ordered by (W, S, T).
std::vector<SweepRow> sweep_allocations(std::int64_t budget, std::vector<BitAllocation> candidates,
                                        const TrainConfig& cfg, const Dataset& data,
                                        bool allow_budget_mismatch = false);

// Cost CSV columns followed by seed,epochs.
std::string sweep_csv_header();
std::string sweep_csv_row(const SweepRow& row);
// Human-readable table with aligned columns.
std::string sweep_table(const std::vector<SweepRow>& rows);

}  // namespace qsnn
