#pragma once

#include <ostream>

#include "qsnn/data_io.hpp"
#include "qsnn/serialize.hpp"

namespace qsnn {

enum ExitCode { exit_ok = 0, exit_config = 2, exit_runtime = 3, exit_verification = 4 };

// Entry point of the `qsnn` tool. Verbs: train, eval, cost, sweep,
// equiv-check, profile, gen-data.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Dataset selectors accepted by --dataset:
//   synth-digits                       procedural 28x28 digits
//   idx:IMAGES,LABELS[,TEST_IMAGES,TEST_LABELS]
//   events:moving-bar | events:two-class-rotation
//   events-file:PATH
//   xor
// train_size/test_size apply to the generated sets; for a single IDX pair or
// event file the last test_size samples form the test split.
Dataset load_dataset(const std::string& selector, std::size_t train_size, std::size_t test_size,
                     std::uint64_t data_seed);

}  // namespace qsnn
