#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "qsnn/network.hpp"
#include "qsnn/tensor.hpp"

namespace qsnn {

enum class DatasetKind { static_images, event_streams };

struct Event {
  std::int32_t t = 0;
  std::int32_t x = 0;
  std::int32_t y = 0;
  std::uint8_t polarity = 0;  // 1 = ON, 0 = OFF

  bool operator==(const Event&) const = default;
};

struct EventStream {
  std::vector<Event> events;  // sorted by t
  std::int32_t duration = 0;  // raw timesteps, events have 0 <= t < duration
  std::int32_t width = 0;
  std::int32_t height = 0;

  void validate() const;
  bool operator==(const EventStream&) const = default;
};

struct Dataset {
  DatasetKind kind = DatasetKind::static_images;
  std::size_t num_classes = 0;
  RealTensor images;                // static: [N, sample dims...], pixels in [0,1]
  std::vector<EventStream> streams;  // event: one per sample
  std::vector<int> labels;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;

  std::size_t size() const { return labels.size(); }
  Shape sample_shape() const;
  void validate() const;
};

// Marks the last n_test samples as the test split, the rest as train.
void assign_split(Dataset& data, std::size_t n_test);
// Concatenates two datasets of the same kind; a's samples form the train
// split and b's the test split.
Dataset merge_train_test(const Dataset& a, const Dataset& b);

// --- IDX (big-endian, magic 0x803 images / 0x801 labels) ---
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);
void write_idx_images(const std::filesystem::path& path, std::span<const std::uint8_t> pixels, std::uint32_t count,
                      std::uint32_t rows, std::uint32_t cols);
void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels);
// Writes a static dataset (pixels rounded to bytes) as an IDX pair.
void save_idx(const Dataset& data, const std::filesystem::path& images, const std::filesystem::path& labels);

// Procedurally rendered 28x28 handwritten-style digits, 10 balanced classes.
// Pixels are byte-quantised so an IDX round trip is exact.
Dataset synth_digits(std::size_t n, std::uint64_t seed);

// --- event streams ---
enum class EventPattern { moving_bar, two_class_rotation };

EventPattern parse_event_pattern(std::string_view s);
std::string to_string(EventPattern p);
int class_count(EventPattern p);

struct EventSynthOptions {
  std::int32_t frame = 16;
  std::int32_t duration = 16;
  std::int32_t max_noise_events = 16;
};

// One labelled stream. The class only changes the coordinate frame of the
// motion, so the per-timestep event counts do not depend on the label.
EventStream synth_event_stream(EventPattern pattern, int label, const EventSynthOptions& opts, std::mt19937_64& rng);
Dataset synth_events(EventPattern pattern, std::size_t n_samples, const EventSynthOptions& opts, std::uint64_t seed);

// Bins a stream into T equal windows: T tensors of shape [2, height, width]
// (channel 0 = OFF, channel 1 = ON) holding per-pixel event counts.
std::vector<RealTensor> bin_events(const EventStream& stream, int time_steps);

// Plain-text event file:
//   # qsnn-events width=W height=H duration=D classes=C
//   # any other comment (ignored)
//   # sample label=L
//   t x y p
//   ...
void write_event_file(const std::filesystem::path& path, const Dataset& data, const std::string& comment = {});
Dataset read_event_file(const std::filesystem::path& path);

// Builds per-step network inputs for the given samples.
StepInputs make_step_inputs(const Dataset& data, std::span<const std::size_t> indices, const BitAllocation& alloc,
                            Encoder encoder);

// The four XOR patterns (inputs in {0,1}, label = a xor b), repeated.
Dataset xor_dataset(std::size_t repeats = 1);

}  // namespace qsnn
