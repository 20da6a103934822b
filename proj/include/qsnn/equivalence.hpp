#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qsnn/tensor.hpp"

namespace qsnn {

// Exact integer GeMV: out[i] = sum_j w[i][j] * a[j]. Throws OverflowError if
// any product or partial sum leaves int64.
IntTensor gemm_direct(const IntTensor& w, const IntTensor& a);

// Same product computed plane by plane: sum_t 2^t * (w . a^(t)).
// a must be unsigned with every value < 2^T.
IntTensor gemm_bitserial(const IntTensor& w, const IntTensor& a, int time_steps);

struct EquivalenceCounterexample {
  std::vector<std::int64_t> w;  // row-major [m x k]
  std::vector<std::int64_t> a;
  std::vector<std::int64_t> direct;
  std::vector<std::int64_t> bitserial;
};

struct EquivalenceReport {
  std::size_t m = 0, k = 0;
  int time_steps = 0;
  std::uint64_t seed = 0;
  std::int64_t trials = 0;
  std::int64_t mismatches = 0;
  std::optional<EquivalenceCounterexample> first_counterexample;
};

// Random w in [-(2^(W-1)-1), 2^(W-1)-1], a in [0, 2^T), compared for `trials`
// draws. Trial i uses its own generator seeded from (seed, i).
EquivalenceReport check_equivalence(std::size_t m, std::size_t k, int time_steps, std::int64_t trials,
                                    std::uint64_t seed, int weight_bits = 4);

// Every w in [-max_abs_w, max_abs_w]^(m x k) against every a in [0, 2^T)^k.
EquivalenceReport check_equivalence_exhaustive(std::size_t m, std::size_t k, int time_steps, int max_abs_w);

// --- integration datapath ---

enum class FsmState { reset, accumulate, emit };
std::string to_string(FsmState s);

struct DatapathConfig {
  int spike_bits = 1;  // S: bits carried per cycle
  int time_steps = 1;  // T: cycles per inference
  int weight_bits = 4;
  int accumulator_width = 32;  // signed two's complement

  void validate() const;
};

// Worst-case signed width needed to hold sum_j w_j * a_j for `fan_in` terms
// with |w| < 2^(W-1) and a < 2^(S*T).
int required_accumulator_width(const DatapathConfig& cfg, std::int64_t fan_in);

struct DatapathCycle {
  std::int64_t cycle = 0;
  std::int64_t p_sum = 0;
  bool valid = false;
  bool last = false;
  std::int64_t membrane = 0;
  FsmState state = FsmState::reset;
};

struct DatapathTrace {
  std::vector<DatapathCycle> cycles;

  std::string to_csv() const;  // header: cycle,p_sum,valid,last,membrane,state
};

struct DatapathResult {
  std::int64_t final_membrane = 0;
  DatapathTrace trace;
};

// Splits the unsigned operands a (each < 2^(S*T)) into T chunks of S bits,
// least significant first, and returns the per-cycle weighted partial sums
// p_sum[t] = sum_j w_j * chunk_t(a_j).
std::vector<std::int64_t> stream_partial_sums(const std::vector<std::int64_t>& w, const std::vector<std::int64_t>& a,
                                              const DatapathConfig& cfg);

// Cycle 0 resets the membrane; cycles 1..T each accumulate p_sum << (S * t);
// the final valid cycle raises last, and one emit cycle follows. Throws
// OverflowError when the membrane leaves the accumulator width.
DatapathResult datapath_run(const DatapathConfig& cfg, const std::vector<std::int64_t>& weighted_inputs);

}  // namespace qsnn
