#include <doctest.h>

#include <fstream>
#include <map>
#include <numeric>

#include "qsnn/data_io.hpp"
#include "qsnn/error.hpp"
#include "test_util.hpp"

using namespace qsnn;

namespace {

std::vector<std::int64_t> per_t_counts(const EventStream& s) {
  std::vector<std::int64_t> h(static_cast<std::size_t>(s.duration), 0);
  for (const Event& e : s.events) ++h[static_cast<std::size_t>(e.t)];
  return h;
}

void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& b) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

}  // namespace

TEST_SUITE("data-io") {

TEST_CASE("idx round trip of a 10-image fixture") {
  const auto dir = scratch_dir("idx_roundtrip");
  std::vector<std::uint8_t> pixels(10 * 28 * 28), labels(10);
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = static_cast<std::uint8_t>((i * 37) % 256);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<std::uint8_t>(i % 10);
  write_idx_images(dir / "img.idx", pixels, 10, 28, 28);
  write_idx_labels(dir / "lbl.idx", labels);
  Dataset d = load_idx(dir / "img.idx", dir / "lbl.idx");
  CHECK(d.size() == 10);
  CHECK(d.images.shape() == Shape{10, 28, 28});
  CHECK(d.num_classes == 10);
  for (std::size_t i = 0; i < pixels.size(); ++i) REQUIRE(d.images[i] == pixels[i] / 255.0);
  for (std::size_t i = 0; i < 10; ++i) CHECK(d.labels[i] == static_cast<int>(i));

  // write-then-read is the identity on bytes
  save_idx(d, dir / "img2.idx", dir / "lbl2.idx");
  std::ifstream a(dir / "img.idx", std::ios::binary), b(dir / "img2.idx", std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
  CHECK(sa == sb);
}

TEST_CASE("idx errors are distinct") {
  const auto dir = scratch_dir("idx_errors");
  std::vector<std::uint8_t> px(3 * 2 * 2, 7);
  write_idx_images(dir / "img.idx", px, 3, 2, 2);
  write_idx_labels(dir / "lbl3.idx", std::vector<std::uint8_t>{0, 1, 2});
  write_idx_labels(dir / "lbl2.idx", std::vector<std::uint8_t>{0, 1});
  write_bytes(dir / "empty.idx", {});

  CHECK_THROWS_AS(load_idx(dir / "empty.idx", dir / "lbl3.idx"), TruncatedFileError);
  CHECK_THROWS_AS(load_idx(dir / "lbl3.idx", dir / "lbl3.idx"), BadMagicError);
  CHECK_THROWS_AS(load_idx(dir / "img.idx", dir / "img.idx"), BadMagicError);
  try {
    load_idx(dir / "img.idx", dir / "lbl2.idx");
    FAIL("expected CountMismatchError");
  } catch (const CountMismatchError& e) {
    const std::string msg = e.what();
    CHECK(msg.find('3') != std::string::npos);
    CHECK(msg.find('2') != std::string::npos);
  }
  std::ifstream in(dir / "img.idx", std::ios::binary);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), {});
  bytes.resize(bytes.size() - 1);
  write_bytes(dir / "short.idx", bytes);
  CHECK_THROWS_AS(load_idx(dir / "short.idx", dir / "lbl3.idx"), TruncatedFileError);
  CHECK_THROWS_AS(load_idx(dir / "missing.idx", dir / "lbl3.idx"), DataFormatError);
}

TEST_CASE("synthetic digits are balanced, byte exact and seeded") {
  Dataset a = synth_digits(200, 5), b = synth_digits(200, 5), c = synth_digits(200, 6);
  CHECK(a.images == b.images);
  CHECK(a.labels == b.labels);
  CHECK_FALSE(a.images == c.images);
  CHECK(a.images.shape() == Shape{200, 28, 28});
  std::map<int, int> counts;
  for (int l : a.labels) ++counts[l];
  CHECK(counts.size() == 10);
  for (auto [label, n] : counts) CHECK(n == 20);
  for (Real v : a.images.values()) {
    REQUIRE(v >= 0.0);
    REQUIRE(v <= 1.0);
    REQUIRE(std::round(v * 255) / 255 == v);
  }
}

TEST_CASE("splits are disjoint and in range") {
  Dataset d = synth_digits(50, 1);
  assign_split(d, 10);
  CHECK(d.train.size() == 40);
  CHECK(d.test.size() == 10);
  CHECK_NOTHROW(d.validate());
  d.test.push_back(0);
  CHECK_THROWS_AS(d.validate(), ConfigError);
  d.test.back() = 99;
  CHECK_THROWS_AS(d.validate(), RangeError);
}

TEST_CASE("event generation is deterministic") {
  EventSynthOptions o;
  for (auto pat : {EventPattern::moving_bar, EventPattern::two_class_rotation}) {
    Dataset a = synth_events(pat, 20, o, 0), b = synth_events(pat, 20, o, 0);
    CHECK(a.streams == b.streams);
    CHECK(a.labels == b.labels);
    CHECK(a.num_classes == static_cast<std::size_t>(class_count(pat)));
    for (const auto& s : a.streams) CHECK_NOTHROW(s.validate());
  }
  CHECK_THROWS_AS(synth_events(EventPattern::moving_bar, 4, EventSynthOptions{2, 16, 0}, 0), ConfigError);
}

TEST_CASE("event classes differ in direction but share per-frame counts") {
  for (auto pat : {EventPattern::moving_bar, EventPattern::two_class_rotation}) {
    for (std::int32_t noise : {0, 16}) {
      EventSynthOptions o;
      o.max_noise_events = noise;
      std::vector<EventStream> per_class;
      for (int label = 0; label < class_count(pat); ++label) {
        std::mt19937_64 rng(123);
        per_class.push_back(synth_event_stream(pat, label, o, rng));
      }
      for (std::size_t c = 1; c < per_class.size(); ++c) {
        CHECK(per_t_counts(per_class[c]) == per_t_counts(per_class[0]));
        CHECK_FALSE(per_class[c].events == per_class[0].events);
      }
    }
  }
  // Class 0 and 1 of the bar move in opposite x directions: the mean ON
  // position in the first frame lies on opposite halves.
  EventSynthOptions o;
  o.max_noise_events = 0;
  auto first_on_mean_x = [&](int label) {
    std::mt19937_64 rng(1);
    auto s = synth_event_stream(EventPattern::moving_bar, label, o, rng);
    double sum = 0;
    int n = 0;
    for (const Event& e : s.events)
      if (e.t == 0 && e.polarity == 1) {
        sum += e.x;
        ++n;
      }
    REQUIRE(n > 0);
    return sum / n;
  };
  CHECK(first_on_mean_x(0) < o.frame / 2.0);
  CHECK(first_on_mean_x(1) > o.frame / 2.0);
}

TEST_CASE("binning conserves events") {
  Dataset d = synth_events(EventPattern::moving_bar, 8, {}, 3);
  for (const auto& s : d.streams) {
    for (int t : {1, 2, 4, 8, 16}) {
      auto frames = bin_events(s, t);
      REQUIRE(frames.size() == static_cast<std::size_t>(t));
      Real total = 0;
      for (const auto& f : frames) {
        CHECK(f.shape() == Shape{2, 16, 16});
        total += std::accumulate(f.values().begin(), f.values().end(), 0.0);
      }
      CHECK(total == static_cast<Real>(s.events.size()));
    }
    CHECK_THROWS_AS(bin_events(s, 17), ConfigError);
  }
}

TEST_CASE("binning examples") {
  EventStream one{{{0, 1, 1, 1}}, 4, 4, 4};
  auto f = bin_events(one, 2);
  CHECK(std::accumulate(f[0].values().begin(), f[0].values().end(), 0.0) == 1.0);
  CHECK(std::accumulate(f[1].values().begin(), f[1].values().end(), 0.0) == 0.0);
  CHECK(f[0][(1 * 4 + 1) * 4 + 1] == 1.0);  // ON channel

  EventStream uniform;
  uniform.duration = 16;
  uniform.width = uniform.height = 4;
  for (int t = 0; t < 16; ++t) uniform.events.push_back({t, t % 4, t / 4, 0});
  auto four = bin_events(uniform, 4);
  for (const auto& fr : four) CHECK(std::accumulate(fr.values().begin(), fr.values().end(), 0.0) == 4.0);

  auto finest = bin_events(uniform, 16);
  for (const auto& fr : finest)
    for (Real v : fr.values()) CHECK(v >= 0.0);
}

TEST_CASE("event file round trip") {
  const auto dir = scratch_dir("events");
  Dataset d = synth_events(EventPattern::two_class_rotation, 6, {}, 9);
  write_event_file(dir / "ev.txt", d, "config: {}");
  Dataset back = read_event_file(dir / "ev.txt");
  CHECK(back.streams == d.streams);
  CHECK(back.labels == d.labels);
  CHECK(back.num_classes == d.num_classes);

  std::ofstream(dir / "bad.txt") << "t x y p\n";
  CHECK_THROWS_AS(read_event_file(dir / "bad.txt"), BadMagicError);
}

TEST_CASE("xor patterns") {
  Dataset x = xor_dataset(2);
  CHECK(x.size() == 8);
  CHECK(x.num_classes == 2);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const int a = static_cast<int>(x.images[i * 2]), b = static_cast<int>(x.images[i * 2 + 1]);
    CHECK(x.labels[i] == (a ^ b));
  }
}

}
