#include "qsnn/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "qsnn/error.hpp"
#include "qsnn/parallel.hpp"

namespace qsnn {

std::string to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd-momentum"; }
std::string to_string(QuantMode m) { return m == QuantMode::qat ? "qat" : "post-training"; }

OptimizerKind parse_optimizer(std::string_view s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "sgd-momentum") return OptimizerKind::sgd_momentum;
  throw ConfigError("unknown optimizer '" + std::string(s) + "'");
}

QuantMode parse_quant_mode(std::string_view s) {
  if (s == "qat") return QuantMode::qat;
  if (s == "post-training") return QuantMode::post_training;
  throw ConfigError("unknown quantization mode '" + std::string(s) + "'");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
  if (!(init_gain > 0.0)) throw ConfigError("init gain must be > 0");
  allocation.validate();
  neuron.validate();
}

Json to_json(const TrainConfig& c) {
  return Json{{"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"learning_rate", c.learning_rate},
              {"momentum", c.momentum},
              {"optimizer", to_string(c.optimizer)},
              {"quantization", to_string(c.quantization)},
              {"seed", c.seed},
              {"allocation", to_json(c.allocation)},
              {"dataset", c.dataset},
              {"architecture", c.architecture},
              {"neuron", to_json(c.neuron)},
              {"init_gain", c.init_gain},
              {"detach_reset", c.detach_reset},
              {"strict_deterministic", c.strict_deterministic}};
}

TrainConfig train_config_from_json(const Json& j, TrainConfig c) {
  try {
    if (!j.is_object()) throw ConfigError("training config must be a JSON object");
    if (j.contains("epochs")) c.epochs = j.at("epochs").get<std::size_t>();
    if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<std::size_t>();
    if (j.contains("learning_rate")) c.learning_rate = j.at("learning_rate").get<Real>();
    if (j.contains("momentum")) c.momentum = j.at("momentum").get<Real>();
    if (j.contains("optimizer")) c.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
    if (j.contains("quantization")) c.quantization = parse_quant_mode(j.at("quantization").get<std::string>());
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("allocation")) c.allocation = allocation_from_json(j.at("allocation"));
    if (j.contains("dataset")) c.dataset = j.at("dataset").get<std::string>();
    if (j.contains("architecture")) c.architecture = j.at("architecture").get<std::string>();
    if (j.contains("neuron")) {
      Json merged = to_json(c.neuron);
      merged.update(j.at("neuron"));
      c.neuron = neuron_from_json(merged);
    }
    if (j.contains("init_gain")) c.init_gain = j.at("init_gain").get<Real>();
    if (j.contains("detach_reset")) c.detach_reset = j.at("detach_reset").get<bool>();
    if (j.contains("strict_deterministic")) c.strict_deterministic = j.at("strict_deterministic").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed training config: ") + e.what());
  }
  return c;
}

Json to_json(const RunRecord& r) {
  Json epochs = Json::array();
  for (const EpochRecord& e : r.epochs) {
    epochs.push_back(Json{{"epoch", e.epoch},
                          {"train_loss", e.train_loss},
                          {"train_accuracy", e.train_accuracy},
                          {"test_accuracy", e.test_accuracy ? Json(*e.test_accuracy) : Json(nullptr)}});
  }
  return Json{{"config", to_json(r.config)},
              {"epochs", std::move(epochs)},
              {"final_accuracy", r.final_accuracy ? Json(*r.final_accuracy) : Json(nullptr)},
              {"cost", to_json(r.cost)},
              {"wall_time_seconds", r.wall_time_seconds ? Json(*r.wall_time_seconds) : Json(nullptr)}};
}

NetworkSpec build_network(const TrainConfig& cfg, const Dataset& data) {
  NetworkSpec net = make_preset(cfg.architecture, cfg.allocation, cfg.neuron);
  const Shape sample = data.sample_shape();
  if (net.input_shape().numel() != sample.numel()) {
    throw ConfigError("architecture '" + cfg.architecture + "' expects input " + net.input_shape().to_string() +
                      " but the dataset provides " + sample.to_string());
  }
  if (net.output_shape().numel() != data.num_classes) {
    throw ConfigError("architecture '" + cfg.architecture + "' has " + std::to_string(net.output_shape().numel()) +
                      " outputs for a " + std::to_string(data.num_classes) + "-class dataset");
  }
  initialize_weights(net, cfg.seed, cfg.init_gain);
  return net;
}

Real evaluate(const NetworkSpec& net, const Dataset& data, std::span<const std::size_t> indices,
              std::size_t batch_size) {
  if (indices.empty()) throw ConfigError("cannot evaluate on an empty split");
  batch_size = std::max<std::size_t>(1, batch_size);
  std::size_t correct = 0;
  for (std::size_t start = 0; start < indices.size(); start += batch_size) {
    const auto chunk = indices.subspan(start, std::min(batch_size, indices.size() - start));
    const ForwardResult r = forward(net, make_step_inputs(data, chunk, net.allocation, net.encoder));
    for (std::size_t b = 0; b < chunk.size(); ++b) {
      if (static_cast<int>(argmax_row(r.logits, b)) == data.labels[chunk[b]]) ++correct;
    }
  }
  return static_cast<Real>(correct) / static_cast<Real>(indices.size());
}

Real evaluate(const NetworkSpec& net, const Dataset& data) { return evaluate(net, data, data.test); }

namespace {

struct OptimizerState {
  std::vector<std::vector<Real>> m, v;
  std::int64_t step = 0;
};

void apply_update(const TrainConfig& cfg, NetworkSpec& net, const std::vector<RealTensor>& grads,
                  OptimizerState& st) {
  ++st.step;
  const Real bc1 = 1.0 - std::pow(cfg.beta1, static_cast<Real>(st.step));
  const Real bc2 = 1.0 - std::pow(cfg.beta2, static_cast<Real>(st.step));
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    LayerSpec& l = net.layers[li];
    if (!l.is_weighted_kind()) continue;
    // Straight-through: the gradient on the quantized weights reaches the
    // shadow weights wherever they sit inside the clamp range.
    const RealTensor g = ste_backward(grads[li], l.weight, l.quantized.scheme);
    auto w = l.weight.data();
    auto& m = st.m[li];
    auto& v = st.v[li];
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (cfg.optimizer == OptimizerKind::adam) {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        w[i] -= cfg.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.eps);
      } else {
        m[i] = cfg.momentum * m[i] + g[i];
        w[i] -= cfg.learning_rate * m[i];
      }
    }
  }
  net.requantize();
}

std::vector<std::size_t> evaluation_indices(const Dataset& data) { return data.test.empty() ? data.train : data.test; }

}  // namespace

std::pair<NetworkSpec, RunRecord> train(const TrainConfig& cfg, NetworkSpec net, const Dataset& data,
                                        const TrainHooks& hooks) {
  cfg.validate();
  data.validate();
  if (data.train.empty()) throw ConfigError("training split is empty");
  if (net.allocation != cfg.allocation) net.set_allocation(cfg.allocation);
  net.validate();
  if (cfg.strict_deterministic) set_max_threads(1);
  const auto started = std::chrono::steady_clock::now();

  // Post-training mode trains in full precision and quantizes at the end.
  std::vector<std::optional<int>> saved_bits;
  if (cfg.quantization == QuantMode::post_training) {
    for (LayerSpec& l : net.layers) {
      saved_bits.push_back(l.weight_bits);
      if (l.is_weighted_kind()) l.weight_bits = kFullPrecisionBits;
    }
    net.requantize();
  }

  OptimizerState st;
  st.m.resize(net.layers.size());
  st.v.resize(net.layers.size());
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    st.m[li].assign(net.layers[li].weight.size(), 0.0);
    st.v[li].assign(net.layers[li].weight.size(), 0.0);
  }

  RunRecord rec;
  rec.config = cfg;
  std::mt19937_64 shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order = data.train;
  BackwardOptions bo;
  bo.detach_reset = cfg.detach_reset;
  std::size_t update = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    Real loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::span<const std::size_t> idx(order.data() + start, std::min(cfg.batch_size, order.size() - start));
      std::vector<int> labels(idx.size());
      for (std::size_t b = 0; b < idx.size(); ++b) labels[b] = data.labels[idx[b]];
      if (hooks.before_update) hooks.before_update(net, update);
      const LossAndGradients lg =
          compute_gradients(net, make_step_inputs(data, idx, net.allocation, net.encoder), labels, bo);
      if (!std::isfinite(lg.loss)) {
        throw DivergenceError("loss became " + std::to_string(lg.loss) + " at epoch " + std::to_string(epoch) +
                              ", update " + std::to_string(update) + " (learning rate " +
                              std::to_string(cfg.learning_rate) + ")");
      }
      loss_sum += lg.loss * static_cast<Real>(idx.size());
      correct += lg.correct;
      if (cfg.learning_rate > 0.0) apply_update(cfg, net, lg.weight_grads, st);
      ++update;
    }
    EpochRecord er;
    er.epoch = epoch;
    er.train_loss = loss_sum / static_cast<Real>(order.size());
    er.train_accuracy = static_cast<Real>(correct) / static_cast<Real>(order.size());
    if (!data.test.empty()) er.test_accuracy = evaluate(net, data, data.test);
    rec.epochs.push_back(er);
  }

  if (cfg.quantization == QuantMode::post_training) {
    for (std::size_t li = 0; li < net.layers.size(); ++li) net.layers[li].weight_bits = saved_bits[li];
    net.requantize();
  }

  const std::vector<std::size_t> eval_idx = evaluation_indices(data);
  const FiringProfile prof = profile_firing_rates(net, data, eval_idx);
  rec.cost = make_cost_report(net, &prof);
  if (!data.test.empty()) {
    rec.final_accuracy = evaluate(net, data, data.test);
    rec.cost.accuracy = rec.final_accuracy;
  }
  if (!cfg.strict_deterministic) {
    rec.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  }
  return {std::move(net), std::move(rec)};
}

std::vector<SweepRow> sweep_allocations(std::int64_t budget, std::vector<BitAllocation> candidates,
                                        const TrainConfig& cfg, const Dataset& data, bool allow_budget_mismatch) {
  if (candidates.empty()) throw ConfigError("sweep needs at least one candidate allocation");
  for (const BitAllocation& a : candidates) {
    a.validate();
    const std::int64_t bb = bit_budget(a);
    if (bb != budget && !allow_budget_mismatch) {
      throw ConfigError("allocation " + a.to_string() + " has bit budget " + std::to_string(bb) + ", not " +
                        std::to_string(budget));
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const BitAllocation& a, const BitAllocation& b) {
    return std::tie(a.weight_bits, a.spike_bits, a.time_steps) < std::tie(b.weight_bits, b.spike_bits, b.time_steps);
  });
  std::vector<SweepRow> rows;
  for (const BitAllocation& a : candidates) {
    TrainConfig c = cfg;
    c.allocation = a;
    c.neuron.spike_bits = a.spike_bits;
    auto [net, rec] = train(c, build_network(c, data), data);
    rows.push_back(SweepRow{a, std::move(rec)});
  }
  return rows;
}

std::string sweep_csv_header() { return std::string(kCostCsvHeader) + ",seed,epochs"; }

std::string sweep_csv_row(const SweepRow& row) {
  return cost_csv_row(row.record.cost) + "," + std::to_string(row.record.config.seed) + "," +
         std::to_string(row.record.config.epochs);
}

std::string sweep_table(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << std::left << std::setw(10) << "W/S/T" << std::right << std::setw(8) << "BB" << std::setw(14) << "SOPs"
      << std::setw(16) << "S-ACE" << std::setw(16) << "NS-ACE" << std::setw(10) << "acc" << std::setw(10)
      << "fr_mean" << '\n';
  out << std::fixed;
  for (const SweepRow& r : rows) {
    const CostReport& c = r.record.cost;
    out << std::left << std::setw(10) << r.allocation.to_string() << std::right << std::setw(8) << c.bit_budget
        << std::setw(14) << c.sops << std::setw(16) << c.s_ace << std::setw(16) << std::setprecision(1)
        << c.ns_ace.value_or(0.0) << std::setw(10) << std::setprecision(4) << c.accuracy.value_or(0.0)
        << std::setw(10) << std::setprecision(4) << c.fr_mean().value_or(0.0) << '\n';
  }
  return out.str();
}

}  // namespace qsnn
