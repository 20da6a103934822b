#include "qsnn/cli.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "qsnn/cost_model.hpp"
#include "qsnn/equivalence.hpp"
#include "qsnn/error.hpp"
#include "qsnn/parallel.hpp"
#include "qsnn/trainer.hpp"

namespace fs = std::filesystem;

namespace qsnn {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) parts.push_back(cur);
  return parts;
}

}  // namespace

Dataset load_dataset(const std::string& selector, std::size_t train_size, std::size_t test_size,
                     std::uint64_t data_seed) {
  const std::size_t colon = selector.find(':');
  const std::string kind = selector.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : selector.substr(colon + 1);
  Dataset d;
  if (kind == "synth-digits") {
    d = synth_digits(train_size + test_size, data_seed);
    assign_split(d, test_size);
  } else if (kind == "idx") {
    const auto paths = split(arg, ',');
    if (paths.size() == 2) {
      d = load_idx(paths[0], paths[1]);
      if (test_size >= d.size()) throw ConfigError("test size leaves no training samples");
      assign_split(d, test_size);
    } else if (paths.size() == 4) {
      d = merge_train_test(load_idx(paths[0], paths[1]), load_idx(paths[2], paths[3]));
    } else {
      throw ConfigError("idx dataset needs IMAGES,LABELS or four comma-separated paths");
    }
  } else if (kind == "events") {
    d = synth_events(parse_event_pattern(arg), train_size + test_size, EventSynthOptions{}, data_seed);
    assign_split(d, test_size);
  } else if (kind == "events-file") {
    d = read_event_file(arg);
    if (test_size >= d.size()) throw ConfigError("test size leaves no training samples");
    assign_split(d, test_size);
  } else if (kind == "xor") {
    d = xor_dataset(std::max<std::size_t>(1, train_size / 4));
  } else {
    throw ConfigError("unknown dataset selector '" + selector + "'");
  }
  d.validate();
  return d;
}

namespace {

// One verb option: its flag name doubles as the config-file key.
struct OptionDef {
  std::string name;
  Json fallback;
  std::string help;
};

const std::vector<OptionDef> kCommon = {
    {"seed", 0, "seed for initialisation, shuffling and randomized checks"},
    {"out", "out", "output directory"},
    {"threads", 0, "worker thread cap (0 keeps QSNN_THREADS or the hardware default)"},
};

const std::vector<OptionDef> kData = {
    {"dataset", "synth-digits", "synth-digits | idx:IMG,LBL[,IMG,LBL] | events:PATTERN | events-file:PATH | xor"},
    {"train-size", 3000, "generated training samples"},
    {"test-size", 1000, "test samples"},
    {"data-seed", 12345, "seed of the generated dataset"},
};

const std::vector<OptionDef> kTraining = {
    {"alloc", "4/4/1", "bit allocation W/S/T"},
    {"arch", "mlp", "architecture preset: mlp, cnn, event-mlp, mlp:a-b-c"},
    {"epochs", 5, "training epochs"},
    {"batch-size", 32, "minibatch size"},
    {"lr", 5e-4, "learning rate"},
    {"optimizer", "adam", "adam | sgd-momentum"},
    {"quantization", "qat", "qat | post-training"},
    {"encoder", "direct-current", "direct-current | level-quantized"},
    {"decoder", "membrane-sum", "membrane-sum | spike-count"},
    {"init-gain", 1.0, "scale of the initial weight distribution"},
    {"tau", 2.0, "membrane time constant"},
    {"v-th", 1.0, "firing threshold"},
    {"reset", "hard", "hard | subtract"},
    {"surrogate-width", 1.0, "surrogate window width"},
};

struct Verb {
  std::string name;
  std::string help;
  std::vector<OptionDef> options;
  std::vector<std::string> bool_flags;
};

std::vector<OptionDef> concat(std::initializer_list<std::vector<OptionDef>> lists) {
  std::vector<OptionDef> out;
  for (const auto& l : lists) out.insert(out.end(), l.begin(), l.end());
  return out;
}

std::vector<Verb> verbs() {
  return {
      {"train", "train a network and write its run record, cost row and weights",
       concat({kCommon, kData, kTraining}), {"strict-deterministic"}},
      {"eval", "evaluate a saved network on a dataset's test split",
       concat({kCommon, kData, {{"model", "", "network JSON written by train"}}}), {"strict-deterministic"}},
      {"cost", "cost report of a network JSON or preset, without training",
       concat({kCommon,
               {{"spec", "", "network JSON (shape-only stubs allowed)"},
                {"arch", "mlp", "preset used when no --spec is given"},
                {"alloc", "", "allocation override W/S/T"},
                {"energy-k", "", "energy per bit-operation for a linear estimate"},
                {"dataset", "", "optional dataset for firing-rate profiling (adds NS-ACE)"},
                {"train-size", 0, "generated training samples"},
                {"test-size", 200, "profiled samples"},
                {"data-seed", 12345, "seed of the generated dataset"}}}),
       {"strict-deterministic"}},
      {"sweep", "train every allocation of one bit budget",
       concat({kCommon, kData, kTraining,
               {{"budget", 4, "bit budget W*S*T"},
                {"candidates", "", "comma-separated W/S/T list; empty enumerates every factorisation"},
                {"fix-w", 0, "restrict the enumeration to this weight width"}}}),
       {"strict-deterministic", "allow-mismatch"}},
      {"equiv-check", "verify bit-serial GeMM equivalence and datapath allocation invariance",
       concat({kCommon,
               {{"dims", "4x4", "GeMV dims MxK"},
                {"time-steps", 4, "bit planes T"},
                {"trials", 10000, "randomized trials"},
                {"weight-bits", 4, "weight width of random codes"},
                {"datapath-trials", 1000, "random operand sets for the datapath group"},
                {"fan-in", 8, "operands per datapath trial"}}}),
       {"strict-deterministic"}},
      {"profile", "per-layer firing rates of a saved network",
       concat({kCommon, kData,
               {{"model", "", "network JSON written by train"}, {"samples", 1000, "test samples profiled"}}}),
       {"strict-deterministic"}},
      {"gen-data", "write a generated dataset to disk",
       concat({kCommon,
               {{"kind", "digits", "digits | moving-bar | two-class-rotation"},
                {"n", 1000, "samples"},
                {"data-seed", 12345, "generator seed"},
                {"frame", 16, "event frame size"},
                {"duration", 16, "event stream duration"},
                {"max-noise", 16, "maximum noise events per stream"}}}),
       {"strict-deterministic"}},
  };
}

std::string normalise_key(std::string k) {
  std::replace(k.begin(), k.end(), '_', '-');
  return k;
}

// Converts a flag string to the JSON type of its default.
Json coerce(const std::string& name, const std::string& text, const Json& fallback) {
  try {
    if (fallback.is_number_integer()) {
      std::size_t used = 0;
      const long long v = std::stoll(text, &used);
      if (used != text.size()) throw std::invalid_argument(text);
      return v;
    }
    if (fallback.is_number_float()) {
      std::size_t used = 0;
      const double v = std::stod(text, &used);
      if (used != text.size()) throw std::invalid_argument(text);
      return v;
    }
  } catch (const std::exception&) {
    throw ConfigError("--" + name + ": '" + text + "' is not a number");
  }
  return text;
}

class Resolved {
 public:
  explicit Resolved(Json j) : j_(std::move(j)) {}

  const Json& json() const { return j_; }
  std::string str(const std::string& k) const { return at(k).is_string() ? at(k).get<std::string>() : at(k).dump(); }
  std::int64_t integer(const std::string& k) const {
    if (!at(k).is_number_integer()) throw ConfigError(k + " must be an integer");
    return at(k).get<std::int64_t>();
  }
  std::size_t count(const std::string& k) const {
    const std::int64_t v = integer(k);
    if (v < 0) throw ConfigError(k + " must be >= 0");
    return static_cast<std::size_t>(v);
  }
  double real(const std::string& k) const {
    if (!at(k).is_number()) throw ConfigError(k + " must be a number");
    return at(k).get<double>();
  }
  bool flag(const std::string& k) const { return j_.contains(k) && j_.at(k).is_boolean() && j_.at(k).get<bool>(); }

 private:
  const Json& at(const std::string& k) const {
    if (!j_.contains(k)) throw ConfigError("missing setting '" + k + "'");
    return j_.at(k);
  }
  Json j_;
};

std::string compact(const Json& j) { return j.dump(); }

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

// CSV with the resolved configuration on a leading comment line.
std::string csv_with_provenance(const Resolved& cfg, const std::string& header, const std::vector<std::string>& rows) {
  std::string s = "# config: " + compact(cfg.json()) + "\n" + header + "\n";
  for (const std::string& r : rows) s += r + "\n";
  return s;
}

TrainConfig train_config(const Resolved& r) {
  TrainConfig c;
  c.epochs = r.count("epochs");
  c.batch_size = r.count("batch-size");
  c.learning_rate = r.real("lr");
  c.seed = static_cast<std::uint64_t>(r.integer("seed"));
  c.optimizer = parse_optimizer(r.str("optimizer"));
  c.quantization = parse_quant_mode(r.str("quantization"));
  c.allocation = BitAllocation::parse(r.str("alloc"));
  c.dataset = r.str("dataset");
  c.architecture = r.str("arch");
  c.init_gain = r.real("init-gain");
  c.strict_deterministic = r.flag("strict-deterministic");
  Json neuron{{"tau", r.real("tau")},
              {"v_th", r.real("v-th")},
              {"reset", r.str("reset")},
              {"surrogate_width", r.real("surrogate-width")},
              {"spike_bits", c.allocation.spike_bits}};
  if (r.json().contains("neuron") && r.json().at("neuron").is_object()) neuron.update(r.json().at("neuron"));
  neuron["spike_bits"] = c.allocation.spike_bits;
  c.neuron = neuron_from_json(neuron);
  c.validate();
  return c;
}

Dataset dataset_from(const Resolved& r) {
  return load_dataset(r.str("dataset"), r.count("train-size"), r.count("test-size"),
                      static_cast<std::uint64_t>(r.integer("data-seed")));
}

NetworkSpec network_for(const TrainConfig& c, const Resolved& r, const Dataset& data) {
  NetworkSpec net = build_network(c, data);
  net.encoder = parse_encoder(r.str("encoder"));
  net.decoder = parse_decoder(r.str("decoder"));
  net.validate();
  return net;
}

Json with_provenance(Json body, const Resolved& r) {
  Json out{{"config", r.json()}};
  for (auto& [k, v] : body.items()) out[k] = v;
  return out;
}

// ---------------------------------------------------------------- verbs

int verb_train(const Resolved& r, std::ostream& out) {
  const TrainConfig c = train_config(r);
  const Dataset data = dataset_from(r);
  auto [net, rec] = train(c, network_for(c, r, data), data);
  const fs::path dir = r.str("out");
  write_json_file(dir / "run.json", with_provenance(Json{{"run", to_json(rec)}}, r));
  write_text(dir / "cost.csv", csv_with_provenance(r, kCostCsvHeader, {cost_csv_row(rec.cost)}));
  Json model = network_to_json(net);
  model["provenance"] = r.json();
  write_json_file(dir / "model.json", model);
  out << "alloc " << c.allocation.to_string() << "  final loss " << rec.epochs.back().train_loss;
  if (rec.final_accuracy) out << "  test accuracy " << *rec.final_accuracy;
  out << "  fr_mean " << rec.cost.fr_mean().value_or(0.0) << "\n";
  return exit_ok;
}

NetworkSpec load_model(const Resolved& r) {
  const std::string path = r.str("model");
  if (path.empty()) throw ConfigError("--model is required");
  return load_network(path);
}

int verb_eval(const Resolved& r, std::ostream& out) {
  const NetworkSpec net = load_model(r);
  const Dataset data = dataset_from(r);
  const Real acc = evaluate(net, data);
  write_json_file(fs::path(r.str("out")) / "eval.json",
                  with_provenance(Json{{"accuracy", acc}, {"samples", data.test.size()}}, r));
  out << "accuracy " << acc << " over " << data.test.size() << " samples\n";
  return exit_ok;
}

int verb_cost(const Resolved& r, std::ostream& out) {
  NetworkSpec net;
  const std::string spec = r.str("spec");
  const std::string alloc = r.str("alloc");
  if (!spec.empty()) {
    net = load_network(spec);
    if (!alloc.empty()) net.set_allocation(BitAllocation::parse(alloc));
  } else {
    net = make_preset(r.str("arch"), alloc.empty() ? BitAllocation{4, 4, 1} : BitAllocation::parse(alloc));
    initialize_weights(net, static_cast<std::uint64_t>(r.integer("seed")));
  }
  std::optional<double> k;
  if (!r.str("energy-k").empty()) k = coerce("energy-k", r.str("energy-k"), 1.0).get<double>();
  std::optional<FiringProfile> prof;
  if (!r.str("dataset").empty()) {
    const Dataset data = dataset_from(r);
    prof = profile_firing_rates(net, data, data.test.empty() ? data.train : data.test);
  }
  const CostReport rep = make_cost_report(net, prof ? &*prof : nullptr, k);
  const fs::path dir = r.str("out");
  write_json_file(dir / "cost.json", with_provenance(Json{{"cost", to_json(rep)}}, r));
  write_text(dir / "cost.csv", csv_with_provenance(r, kCostCsvHeader, {cost_csv_row(rep)}));
  out << "allocation  " << rep.allocation.to_string() << "\n"
      << "bit_budget  " << rep.bit_budget << "\n"
      << "sops        " << rep.sops << "\n"
      << "s_ace       " << rep.s_ace << "\n"
      << "param_bits  " << rep.param_bits << " (" << rep.params_f16_equiv << " M f16-equivalent)\n";
  if (rep.ns_ace) out << "ns_ace      " << *rep.ns_ace << "\n";
  if (rep.energy_estimate) out << "energy      " << *rep.energy_estimate << "\n";
  return exit_ok;
}

std::vector<BitAllocation> enumerate_allocations(std::int64_t budget, int fix_w) {
  std::vector<BitAllocation> out;
  for (std::int64_t w = 1; w <= std::min<std::int64_t>(budget, kFullPrecisionBits); ++w) {
    if (budget % w || (fix_w > 0 && w != fix_w)) continue;
    for (std::int64_t s = 1; s <= std::min<std::int64_t>(budget / w, 30); ++s) {
      if ((budget / w) % s) continue;
      out.push_back(BitAllocation{static_cast<int>(w), static_cast<int>(s), static_cast<int>(budget / w / s)});
    }
  }
  return out;
}

int verb_sweep(const Resolved& r, std::ostream& out) {
  const TrainConfig base = train_config(r);
  const Dataset data = dataset_from(r);
  const std::int64_t budget = r.integer("budget");
  if (budget < 1) throw ConfigError("budget must be >= 1");
  std::vector<BitAllocation> candidates;
  if (r.str("candidates").empty()) {
    candidates = enumerate_allocations(budget, static_cast<int>(r.integer("fix-w")));
  } else {
    for (const std::string& s : split(r.str("candidates"), ',')) candidates.push_back(BitAllocation::parse(s));
  }
  // Encoder and decoder come from the resolved config, so build nets here.
  const Encoder enc = parse_encoder(r.str("encoder"));
  const Decoder dec = parse_decoder(r.str("decoder"));
  if (enc != Encoder::direct_current || dec != Decoder::membrane_sum) {
    throw ConfigError("sweep uses the default encoder and decoder");
  }
  const auto rows = sweep_allocations(budget, candidates, base, data, r.flag("allow-mismatch"));
  std::vector<std::string> csv_rows;
  Json records = Json::array();
  for (const SweepRow& row : rows) {
    csv_rows.push_back(sweep_csv_row(row));
    records.push_back(to_json(row.record));
  }
  const fs::path dir = r.str("out");
  write_text(dir / "sweep.csv", csv_with_provenance(r, sweep_csv_header(), csv_rows));
  const std::string table = sweep_table(rows);
  write_text(dir / "sweep.txt", "# config: " + compact(r.json()) + "\n" + table);
  write_json_file(dir / "sweep.json", with_provenance(Json{{"runs", records}}, r));
  out << table;
  return exit_ok;
}

Json report_json(const EquivalenceReport& rep) {
  Json j{{"m", rep.m}, {"k", rep.k}, {"time_steps", rep.time_steps}, {"trials", rep.trials},
         {"mismatches", rep.mismatches}};
  if (rep.first_counterexample) {
    const auto& c = *rep.first_counterexample;
    j["first_counterexample"] = Json{{"w", c.w}, {"a", c.a}, {"direct", c.direct}, {"bitserial", c.bitserial}};
  } else {
    j["first_counterexample"] = nullptr;
  }
  return j;
}

int verb_equiv(const Resolved& r, std::ostream& out) {
  const auto dims = split(r.str("dims"), 'x');
  if (dims.size() != 2) throw ConfigError("--dims must look like MxK");
  std::size_t m = 0, k = 0;
  try {
    m = std::stoul(dims[0]);
    k = std::stoul(dims[1]);
  } catch (const std::exception&) {
    throw ConfigError("--dims must look like MxK");
  }
  const auto seed = static_cast<std::uint64_t>(r.integer("seed"));
  const int t = static_cast<int>(r.integer("time-steps"));
  const EquivalenceReport random =
      check_equivalence(m, k, t, r.integer("trials"), seed, static_cast<int>(r.integer("weight-bits")));

  std::int64_t exhaustive_mismatch = 0, exhaustive_trials = 0;
  for (std::size_t kk = 1; kk <= 2; ++kk) {
    for (int tt = 1; tt <= 3; ++tt) {
      const EquivalenceReport e = check_equivalence_exhaustive(1, kk, tt, 3);
      exhaustive_mismatch += e.mismatches;
      exhaustive_trials += e.trials;
    }
  }

  // Datapath group: one 4-bit payload streamed as 1/4, 4/1 and 2/2.
  const std::vector<std::pair<int, int>> splits{{1, 4}, {4, 1}, {2, 2}};
  const auto fan_in = static_cast<std::size_t>(r.integer("fan-in"));
  if (fan_in < 1) throw ConfigError("--fan-in must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::int64_t> wd(-7, 7), ad(0, 15);
  std::int64_t dp_mismatch = 0;
  const std::int64_t dp_trials = r.integer("datapath-trials");
  std::string trace_csv;
  for (std::int64_t trial = 0; trial < dp_trials; ++trial) {
    std::vector<std::int64_t> w(fan_in), a(fan_in);
    for (auto& v : w) v = wd(rng);
    for (auto& v : a) v = ad(rng);
    std::optional<std::int64_t> reference;
    for (const auto& [s, steps] : splits) {
      DatapathConfig cfg{s, steps, 4, 64};
      cfg.accumulator_width = required_accumulator_width(cfg, static_cast<std::int64_t>(fan_in));
      const DatapathResult res = datapath_run(cfg, stream_partial_sums(w, a, cfg));
      if (trial == 0 && s == 1) trace_csv = res.trace.to_csv();
      if (!reference) reference = res.final_membrane;
      if (res.final_membrane != *reference) ++dp_mismatch;
    }
  }

  const bool ok = random.mismatches == 0 && exhaustive_mismatch == 0 && dp_mismatch == 0;
  const fs::path dir = r.str("out");
  write_json_file(dir / "equiv.json",
                  with_provenance(Json{{"randomized", report_json(random)},
                                       {"exhaustive", Json{{"trials", exhaustive_trials},
                                                           {"mismatches", exhaustive_mismatch}}},
                                       {"datapath", Json{{"trials", dp_trials},
                                                         {"splits", "1/4,4/1,2/2"},
                                                         {"mismatches", dp_mismatch}}},
                                       {"pass", ok}},
                                  r));
  write_text(dir / "datapath_trace.csv", "# config: " + compact(r.json()) + "\n" + trace_csv);
  out << "randomized " << random.trials << " trials, " << random.mismatches << " mismatches\n"
      << "exhaustive " << exhaustive_trials << " cases, " << exhaustive_mismatch << " mismatches\n"
      << "datapath   " << dp_trials << " operand sets, " << dp_mismatch << " mismatches\n";
  return ok ? exit_ok : exit_verification;
}

int verb_profile(const Resolved& r, std::ostream& out) {
  const NetworkSpec net = load_model(r);
  const Dataset data = dataset_from(r);
  std::vector<std::size_t> idx = data.test.empty() ? data.train : data.test;
  idx.resize(std::min(idx.size(), r.count("samples")));
  const FiringProfile prof = profile_firing_rates(net, data, idx);
  std::vector<std::string> rows;
  Json layers = Json::array();
  for (std::size_t i = 0; i < prof.layer_indices.size(); ++i) {
    const LayerSpec& l = net.layers[prof.layer_indices[i]];
    std::ostringstream row;
    row << prof.layer_indices[i] << ',' << to_string(l.kind) << ',' << l.out_shape.numel() << ','
        << Json(prof.layer_rates[i]).dump();
    rows.push_back(row.str());
    layers.push_back(Json{{"layer", prof.layer_indices[i]}, {"kind", to_string(l.kind)},
                          {"neurons", l.out_shape.numel()}, {"firing_rate", prof.layer_rates[i]}});
    out << "layer " << prof.layer_indices[i] << " (" << to_string(l.kind) << "): " << prof.layer_rates[i] << "\n";
  }
  const fs::path dir = r.str("out");
  write_text(dir / "firing_rates.csv", csv_with_provenance(r, "layer,kind,neurons,firing_rate", rows));
  write_json_file(dir / "profile.json",
                  with_provenance(Json{{"samples", prof.samples}, {"layers", layers},
                                       {"mean_rate", prof.mean_rate()}},
                                  r));
  return exit_ok;
}

int verb_gen_data(const Resolved& r, std::ostream& out) {
  const std::string kind = r.str("kind");
  const auto n = r.count("n");
  if (n < 1) throw ConfigError("--n must be >= 1");
  const auto seed = static_cast<std::uint64_t>(r.integer("data-seed"));
  const fs::path dir = r.str("out");
  fs::create_directories(dir);
  if (kind == "digits") {
    const Dataset d = synth_digits(n, seed);
    save_idx(d, dir / "images.idx", dir / "labels.idx");
    out << "wrote " << n << " digits to " << (dir / "images.idx").string() << "\n";
  } else {
    EventSynthOptions o;
    o.frame = static_cast<std::int32_t>(r.integer("frame"));
    o.duration = static_cast<std::int32_t>(r.integer("duration"));
    o.max_noise_events = static_cast<std::int32_t>(r.integer("max-noise"));
    const Dataset d = synth_events(parse_event_pattern(kind), n, o, seed);
    write_event_file(dir / "events.txt", d, "config: " + compact(r.json()));
    out << "wrote " << n << " event streams to " << (dir / "events.txt").string() << "\n";
  }
  // IDX is binary, so its provenance lives in a sidecar.
  write_json_file(dir / "gen-data.json", with_provenance(Json{{"samples", n}}, r));
  return exit_ok;
}

using Handler = std::function<int(const Resolved&, std::ostream&)>;

const std::map<std::string, Handler>& handlers() {
  static const std::map<std::string, Handler> h{
      {"train", verb_train}, {"eval", verb_eval},       {"cost", verb_cost},         {"sweep", verb_sweep},
      {"equiv-check", verb_equiv}, {"profile", verb_profile}, {"gen-data", verb_gen_data},
  };
  return h;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Quantized spiking network toolkit"};
  app.require_subcommand(1);
  const std::vector<Verb> all = verbs();

  struct Bound {
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> opts;
    std::map<std::string, bool> flags;
    std::map<std::string, CLI::Option*> flag_opts;
    std::string config;
    CLI::App* app = nullptr;
  };
  std::vector<Bound> bound(all.size());
  for (std::size_t v = 0; v < all.size(); ++v) {
    Bound& b = bound[v];
    b.app = app.add_subcommand(all[v].name, all[v].help);
    b.app->add_option("--config", b.config, "JSON config file; flags override its values");
    for (const OptionDef& o : all[v].options) {
      b.opts[o.name] = b.app->add_option("--" + o.name, b.values[o.name], o.help);
    }
    for (const std::string& f : all[v].bool_flags) b.flag_opts[f] = b.app->add_flag("--" + f, b.flags[f]);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? exit_ok : exit_config;
  }

  for (std::size_t v = 0; v < all.size(); ++v) {
    Bound& b = bound[v];
    if (!b.app->parsed()) continue;
    try {
      Json resolved{{"verb", all[v].name}};
      for (const OptionDef& o : all[v].options) resolved[o.name] = o.fallback;
      for (const std::string& f : all[v].bool_flags) resolved[f] = false;
      if (!b.config.empty()) {
        const Json file = read_json_file(b.config);
        if (!file.is_object()) throw ConfigError(b.config + ": config must be a JSON object");
        for (const auto& [key, value] : file.items()) {
          const std::string k = normalise_key(key);
          if (k == "neuron") {
            resolved["neuron"] = value;
            continue;
          }
          if (!resolved.contains(k) || k == "verb") {
            throw ConfigError(b.config + ": unknown setting '" + key + "' for " + all[v].name);
          }
          resolved[k] = value;
        }
        resolved["config_file"] = b.config;
      }
      for (const OptionDef& o : all[v].options) {
        if (b.opts[o.name]->count() > 0) resolved[o.name] = coerce(o.name, b.values[o.name], o.fallback);
      }
      for (const std::string& f : all[v].bool_flags) {
        if (b.flag_opts[f]->count() > 0) resolved[f] = true;
      }
      const Resolved r(resolved);
      if (r.flag("strict-deterministic")) {
        set_max_threads(1);
      } else if (r.integer("threads") > 0) {
        set_max_threads(r.count("threads"));
      }
      return handlers().at(all[v].name)(r, out);
    } catch (const ConfigError& e) {
      err << "config error: " << e.what() << "\n";
      return exit_config;
    } catch (const DataFormatError& e) {
      err << "data error: " << e.what() << "\n";
      return exit_config;
    } catch (const ShapeError& e) {
      err << "shape error: " << e.what() << "\n";
      return exit_config;
    } catch (const RangeError& e) {
      err << "range error: " << e.what() << "\n";
      return exit_config;
    } catch (const nlohmann::json::exception& e) {
      err << "config error: " << e.what() << "\n";
      return exit_config;
    } catch (const std::exception& e) {
      err << "error: " << e.what() << "\n";
      return exit_runtime;
    }
  }
  return exit_config;
}

}  // namespace qsnn
