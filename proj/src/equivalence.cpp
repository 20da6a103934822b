#include "qsnn/equivalence.hpp"

#include <random>
#include <sstream>

#include "qsnn/error.hpp"
#include "qsnn/quantizer.hpp"

namespace qsnn {

namespace {

void check_gemv_shapes(const IntTensor& w, const IntTensor& a) {
  if (w.shape().rank() != 2 || a.shape().rank() != 1 || w.shape()[1] != a.shape()[0]) {
    throw ShapeError("integer GeMV needs w [m x k] and a [k], got " + w.shape().to_string() + " and " +
                     a.shape().to_string());
  }
}

std::int64_t checked_mul(std::int64_t x, std::int64_t y) {
  std::int64_t r = 0;
  if (__builtin_mul_overflow(x, y, &r)) throw OverflowError("integer product overflows 64 bits");
  return r;
}

std::int64_t checked_add(std::int64_t x, std::int64_t y) {
  std::int64_t r = 0;
  if (__builtin_add_overflow(x, y, &r)) throw OverflowError("integer accumulation overflows 64 bits");
  return r;
}

}  // namespace

IntTensor gemm_direct(const IntTensor& w, const IntTensor& a) {
  check_gemv_shapes(w, a);
  const std::size_t m = w.shape()[0], k = w.shape()[1];
  std::vector<std::int64_t> out(m, 0);
  for (std::size_t i = 0; i < m; ++i) {
    std::int64_t acc = 0;
    for (std::size_t j = 0; j < k; ++j) acc = checked_add(acc, checked_mul(w.at(i, j), a[j]));
    out[i] = acc;
  }
  return IntTensor(Shape{m}, std::move(out), 64, false);
}

IntTensor gemm_bitserial(const IntTensor& w, const IntTensor& a, int time_steps) {
  check_gemv_shapes(w, a);
  const BitPlanes planes = bit_planes(a, time_steps);
  const std::size_t m = w.shape()[0], k = w.shape()[1];
  std::vector<std::int64_t> out(m, 0);
  for (int t = 0; t < time_steps; ++t) {
    const IntTensor& plane = planes.planes[static_cast<std::size_t>(t)];
    for (std::size_t i = 0; i < m; ++i) {
      // Binary spikes select weights: no multiplications inside a plane.
      std::int64_t plane_sum = 0;
      for (std::size_t j = 0; j < k; ++j) {
        if (plane[j]) plane_sum = checked_add(plane_sum, w.at(i, j));
      }
      out[i] = checked_add(out[i], checked_mul(plane_sum, std::int64_t{1} << t));
    }
  }
  return IntTensor(Shape{m}, std::move(out), 64, false);
}

namespace {

void compare(EquivalenceReport& report, const IntTensor& w, const IntTensor& a) {
  const IntTensor direct = gemm_direct(w, a);
  const IntTensor serial = gemm_bitserial(w, a, report.time_steps);
  ++report.trials;
  if (direct.values() == serial.values()) return;
  ++report.mismatches;
  if (!report.first_counterexample) {
    report.first_counterexample =
        EquivalenceCounterexample{w.values(), a.values(), direct.values(), serial.values()};
  }
}

}  // namespace

EquivalenceReport check_equivalence(std::size_t m, std::size_t k, int time_steps, std::int64_t trials,
                                    std::uint64_t seed, int weight_bits) {
  if (trials < 1) throw ConfigError("check_equivalence needs at least one trial");
  if (m < 1 || k < 1) throw ConfigError("check_equivalence needs nonzero dims");
  if (time_steps < 1 || time_steps > 30) throw ConfigError("time steps must be in [1, 30]");
  if (weight_bits < 2 || weight_bits > 31) throw ConfigError("weight bits must be in [2, 31]");
  EquivalenceReport report;
  report.m = m;
  report.k = k;
  report.time_steps = time_steps;
  report.seed = seed;
  const std::int64_t w_lim = symmetric_code_limit(weight_bits);
  const std::int64_t a_max = (std::int64_t{1} << time_steps) - 1;
  for (std::int64_t trial = 0; trial < trials; ++trial) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(trial), static_cast<std::uint32_t>(trial >> 32)};
    std::mt19937_64 rng(seq);
    std::uniform_int_distribution<std::int64_t> wd(-w_lim, w_lim), ad(0, a_max);
    std::vector<std::int64_t> wv(m * k), av(k);
    for (auto& v : wv) v = wd(rng);
    for (auto& v : av) v = ad(rng);
    compare(report, IntTensor(Shape{m, k}, std::move(wv), weight_bits, false),
            IntTensor(Shape{k}, std::move(av), time_steps, true));
  }
  return report;
}

EquivalenceReport check_equivalence_exhaustive(std::size_t m, std::size_t k, int time_steps, int max_abs_w) {
  if (m < 1 || k < 1 || m * k > 6) throw ConfigError("exhaustive check limited to m*k <= 6");
  if (time_steps < 1 || time_steps > 4) throw ConfigError("exhaustive check limited to T <= 4");
  if (max_abs_w < 0 || max_abs_w > 7) throw ConfigError("exhaustive check limited to |w| <= 7");
  EquivalenceReport report;
  report.m = m;
  report.k = k;
  report.time_steps = time_steps;
  const std::int64_t w_base = 2 * max_abs_w + 1;
  const std::int64_t a_base = std::int64_t{1} << time_steps;
  std::int64_t w_total = 1, a_total = 1;
  for (std::size_t i = 0; i < m * k; ++i) w_total *= w_base;
  for (std::size_t i = 0; i < k; ++i) a_total *= a_base;

  for (std::int64_t wi = 0; wi < w_total; ++wi) {
    std::vector<std::int64_t> wv(m * k);
    std::int64_t r = wi;
    for (auto& v : wv) {
      v = r % w_base - max_abs_w;
      r /= w_base;
    }
    const IntTensor w(Shape{m, k}, std::move(wv), 64, false);
    for (std::int64_t ai = 0; ai < a_total; ++ai) {
      std::vector<std::int64_t> av(k);
      std::int64_t s = ai;
      for (auto& v : av) {
        v = s % a_base;
        s /= a_base;
      }
      compare(report, w, IntTensor(Shape{k}, std::move(av), time_steps, true));
    }
  }
  return report;
}

std::string to_string(FsmState s) {
  switch (s) {
    case FsmState::reset: return "reset";
    case FsmState::accumulate: return "accumulate";
    case FsmState::emit: return "emit";
  }
  return "?";
}

void DatapathConfig::validate() const {
  if (spike_bits < 1 || time_steps < 1) throw ConfigError("datapath needs S >= 1 and T >= 1");
  if (spike_bits * time_steps > 62) throw ConfigError("datapath payload S*T must be <= 62 bits");
  if (weight_bits < 1 || weight_bits > 32) throw ConfigError("datapath weight bits must be in [1, 32]");
  if (accumulator_width < 2 || accumulator_width > 64) throw ConfigError("accumulator width must be in [2, 64]");
}

int required_accumulator_width(const DatapathConfig& cfg, std::int64_t fan_in) {
  cfg.validate();
  if (fan_in < 1) throw ConfigError("fan-in must be >= 1");
  // |sum| <= fan_in * (2^(W-1)) * (2^(S*T) - 1) < 2^(W-1 + S*T + ceil(log2 fan_in)).
  int log_fan = 0;
  while ((std::int64_t{1} << log_fan) < fan_in) ++log_fan;
  return cfg.weight_bits + cfg.spike_bits * cfg.time_steps + log_fan;
}

std::vector<std::int64_t> stream_partial_sums(const std::vector<std::int64_t>& w, const std::vector<std::int64_t>& a,
                                              const DatapathConfig& cfg) {
  cfg.validate();
  if (w.size() != a.size()) throw ShapeError("weight and operand counts differ");
  const int payload = cfg.spike_bits * cfg.time_steps;
  const std::int64_t mask = (std::int64_t{1} << cfg.spike_bits) - 1;
  std::vector<std::int64_t> p(static_cast<std::size_t>(cfg.time_steps), 0);
  for (std::size_t j = 0; j < a.size(); ++j) {
    if (a[j] < 0 || a[j] >= (std::int64_t{1} << payload)) {
      throw RangeError("operand " + std::to_string(j) + " does not fit " + std::to_string(payload) + " bits");
    }
    for (int t = 0; t < cfg.time_steps; ++t) {
      const std::int64_t chunk = (a[j] >> (t * cfg.spike_bits)) & mask;
      p[static_cast<std::size_t>(t)] = checked_add(p[static_cast<std::size_t>(t)], checked_mul(w[j], chunk));
    }
  }
  return p;
}

DatapathResult datapath_run(const DatapathConfig& cfg, const std::vector<std::int64_t>& weighted_inputs) {
  cfg.validate();
  const auto steps = static_cast<std::size_t>(cfg.time_steps);
  if (weighted_inputs.empty() || weighted_inputs.size() % steps != 0) {
    throw ConfigError("datapath expects T * (inputs per step) partial sums, got " +
                      std::to_string(weighted_inputs.size()) + " for T = " + std::to_string(cfg.time_steps));
  }
  const std::size_t per_step = weighted_inputs.size() / steps;
  const std::int64_t acc_hi =
      cfg.accumulator_width == 64 ? INT64_MAX : (std::int64_t{1} << (cfg.accumulator_width - 1)) - 1;
  const std::int64_t acc_lo = cfg.accumulator_width == 64 ? INT64_MIN : -acc_hi - 1;

  DatapathResult r;
  r.trace.cycles.push_back(DatapathCycle{0, 0, false, false, 0, FsmState::reset});
  std::int64_t membrane = 0;
  for (std::size_t t = 0; t < steps; ++t) {
    std::int64_t p_sum = 0;
    for (std::size_t j = 0; j < per_step; ++j) p_sum = checked_add(p_sum, weighted_inputs[t * per_step + j]);
    const std::int64_t shifted = checked_mul(p_sum, std::int64_t{1} << (static_cast<int>(t) * cfg.spike_bits));
    membrane = checked_add(membrane, shifted);
    if (membrane < acc_lo || membrane > acc_hi) {
      throw OverflowError("membrane " + std::to_string(membrane) + " overflows a " +
                          std::to_string(cfg.accumulator_width) + "-bit accumulator at cycle " +
                          std::to_string(t + 1));
    }
    r.trace.cycles.push_back(DatapathCycle{static_cast<std::int64_t>(t + 1), p_sum, true, t + 1 == steps, membrane,
                                           FsmState::accumulate});
  }
  r.trace.cycles.push_back(
      DatapathCycle{static_cast<std::int64_t>(steps + 1), 0, false, false, membrane, FsmState::emit});
  r.final_membrane = membrane;
  return r;
}

std::string DatapathTrace::to_csv() const {
  std::ostringstream out;
  out << "cycle,p_sum,valid,last,membrane,state\n";
  for (const DatapathCycle& c : cycles) {
    out << c.cycle << ',' << c.p_sum << ',' << (c.valid ? 1 : 0) << ',' << (c.last ? 1 : 0) << ',' << c.membrane
        << ',' << to_string(c.state) << '\n';
  }
  return out.str();
}

}  // namespace qsnn
