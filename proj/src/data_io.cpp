#include "qsnn/data_io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "qsnn/error.hpp"

namespace qsnn {

void EventStream::validate() const {
  if (width < 1 || height < 1) throw ConfigError("event frame must be at least 1x1");
  if (duration < 1) throw ConfigError("event stream duration must be >= 1");
  for (std::size_t i = 0; i < events.size(); ++i) {
    const Event& e = events[i];
    if (e.t < 0 || e.t >= duration || e.x < 0 || e.x >= width || e.y < 0 || e.y >= height || e.polarity > 1) {
      throw RangeError("event " + std::to_string(i) + " outside the stream's frame or duration");
    }
    if (i > 0 && e.t < events[i - 1].t) throw RangeError("events are not time-sorted at index " + std::to_string(i));
  }
}

Shape Dataset::sample_shape() const {
  if (kind == DatasetKind::static_images) {
    std::vector<std::size_t> dims(images.shape().dims().begin() + 1, images.shape().dims().end());
    return Shape(dims);
  }
  if (streams.empty()) throw ConfigError("event dataset is empty");
  return Shape{2, static_cast<std::size_t>(streams.front().height), static_cast<std::size_t>(streams.front().width)};
}

void Dataset::validate() const {
  const std::size_t n = labels.size();
  if (kind == DatasetKind::static_images) {
    if (images.shape().rank() < 2 || images.shape()[0] != n) {
      throw CountMismatchError("image count does not match label count " + std::to_string(n));
    }
  } else if (streams.size() != n) {
    throw CountMismatchError("stream count " + std::to_string(streams.size()) + " does not match label count " +
                             std::to_string(n));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw RangeError("label " + std::to_string(labels[i]) + " at sample " + std::to_string(i) + " outside [0, " +
                       std::to_string(num_classes) + ")");
    }
  }
  std::set<std::size_t> seen;
  for (const auto* split : {&train, &test}) {
    for (std::size_t idx : *split) {
      if (idx >= n) throw RangeError("split index " + std::to_string(idx) + " out of range");
      if (!seen.insert(idx).second) throw ConfigError("sample " + std::to_string(idx) + " appears in both splits");
    }
  }
}

void assign_split(Dataset& data, std::size_t n_test) {
  const std::size_t n = data.size();
  if (n_test > n) throw ConfigError("test split larger than the dataset");
  data.train.clear();
  data.test.clear();
  for (std::size_t i = 0; i < n; ++i) (i < n - n_test ? data.train : data.test).push_back(i);
}

Dataset merge_train_test(const Dataset& a, const Dataset& b) {
  if (a.kind != b.kind) throw ConfigError("cannot merge datasets of different kinds");
  Dataset out;
  out.kind = a.kind;
  out.num_classes = std::max(a.num_classes, b.num_classes);
  out.labels = a.labels;
  out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  if (a.kind == DatasetKind::static_images) {
    if (a.sample_shape() != b.sample_shape()) throw ShapeError("cannot merge images of different shapes");
    std::vector<std::size_t> dims = a.images.shape().dims();
    dims[0] = a.size() + b.size();
    std::vector<Real> pixels(a.images.values());
    pixels.insert(pixels.end(), b.images.values().begin(), b.images.values().end());
    out.images = RealTensor(Shape(dims), std::move(pixels));
  } else {
    out.streams = a.streams;
    out.streams.insert(out.streams.end(), b.streams.begin(), b.streams.end());
  }
  for (std::size_t i = 0; i < a.size(); ++i) out.train.push_back(i);
  for (std::size_t i = 0; i < b.size(); ++i) out.test.push_back(a.size() + i);
  return out;
}

// ---------------------------------------------------------------- IDX

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

std::vector<std::uint8_t> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataFormatError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& buf, std::size_t offset, const std::filesystem::path& path) {
  if (buf.size() < offset + 4) throw TruncatedFileError(path.string() + ": truncated IDX header");
  return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
         (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

void put_be32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                              static_cast<char>(v)};
  out.write(b.data(), 4);
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const std::vector<std::uint8_t> ib = read_all(images);
  const std::vector<std::uint8_t> lb = read_all(labels);

  const std::uint32_t im = read_be32(ib, 0, images);
  if (im != kIdxImagesMagic) throw BadMagicError(images.string() + ": bad IDX image magic");
  const std::uint32_t lm = read_be32(lb, 0, labels);
  if (lm != kIdxLabelsMagic) throw BadMagicError(labels.string() + ": bad IDX label magic");

  const std::uint32_t n_images = read_be32(ib, 4, images);
  const std::uint32_t rows = read_be32(ib, 8, images);
  const std::uint32_t cols = read_be32(ib, 12, images);
  const std::uint32_t n_labels = read_be32(lb, 4, labels);
  if (rows == 0 || cols == 0) throw DataFormatError(images.string() + ": zero image dimension");

  const std::size_t pixel_bytes = std::size_t{n_images} * rows * cols;
  if (ib.size() < 16 + pixel_bytes) throw TruncatedFileError(images.string() + ": truncated pixel data");
  if (lb.size() < 8 + std::size_t{n_labels}) throw TruncatedFileError(labels.string() + ": truncated label data");
  if (n_images != n_labels) {
    throw CountMismatchError("IDX count mismatch: " + std::to_string(n_images) + " images vs " +
                             std::to_string(n_labels) + " labels");
  }
  if (n_images == 0) throw DataFormatError(images.string() + ": no samples");

  Dataset d;
  d.kind = DatasetKind::static_images;
  std::vector<Real> pixels(pixel_bytes);
  for (std::size_t i = 0; i < pixel_bytes; ++i) pixels[i] = static_cast<Real>(ib[16 + i]) / 255.0;
  d.images = RealTensor(Shape{n_images, rows, cols}, std::move(pixels));
  d.labels.resize(n_labels);
  int max_label = 0;
  for (std::size_t i = 0; i < n_labels; ++i) {
    d.labels[i] = lb[8 + i];
    max_label = std::max(max_label, d.labels[i]);
  }
  d.num_classes = static_cast<std::size_t>(max_label) + 1;
  for (std::size_t i = 0; i < n_labels; ++i) d.train.push_back(i);
  return d;
}

void write_idx_images(const std::filesystem::path& path, std::span<const std::uint8_t> pixels, std::uint32_t count,
                      std::uint32_t rows, std::uint32_t cols) {
  if (pixels.size() != std::size_t{count} * rows * cols) throw ShapeError("pixel buffer does not match IDX dims");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataFormatError("cannot write " + path.string());
  put_be32(out, kIdxImagesMagic);
  put_be32(out, count);
  put_be32(out, rows);
  put_be32(out, cols);
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}

void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataFormatError("cannot write " + path.string());
  put_be32(out, kIdxLabelsMagic);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
}

void save_idx(const Dataset& data, const std::filesystem::path& images, const std::filesystem::path& labels) {
  if (data.kind != DatasetKind::static_images) throw ConfigError("only static image datasets can be written as IDX");
  const Shape s = data.sample_shape();
  const std::size_t cols = s[s.rank() - 1];
  const std::size_t rows = s.numel() / cols;
  std::vector<std::uint8_t> pixels(data.images.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(data.images[i], 0.0, 1.0) * 255.0));
  }
  std::vector<std::uint8_t> lab(data.labels.begin(), data.labels.end());
  write_idx_images(images, pixels, static_cast<std::uint32_t>(data.size()), static_cast<std::uint32_t>(rows),
                   static_cast<std::uint32_t>(cols));
  write_idx_labels(labels, lab);
}

// ---------------------------------------------------------------- digits

namespace {

struct Point {
  double x, y;
};
using Stroke = std::vector<Point>;

Stroke ellipse(double cx, double cy, double rx, double ry, int n = 18) {
  Stroke s;
  for (int i = 0; i <= n; ++i) {
    const double a = 2.0 * std::numbers::pi * i / n;
    s.push_back({cx + rx * std::cos(a), cy + ry * std::sin(a)});
  }
  return s;
}

// Glyph skeletons in a unit box, y pointing down.
std::vector<Stroke> glyph(int digit) {
  switch (digit) {
    case 0: return {ellipse(0.5, 0.5, 0.33, 0.45)};
    case 1: return {{{0.32, 0.22}, {0.55, 0.04}, {0.55, 0.96}}};
    case 2:
      return {{{0.15, 0.25}, {0.3, 0.07}, {0.55, 0.04}, {0.78, 0.15}, {0.82, 0.35}, {0.6, 0.6}, {0.15, 0.95},
               {0.87, 0.95}}};
    case 3:
      return {{{0.15, 0.1}, {0.5, 0.04}, {0.8, 0.15}, {0.8, 0.35}, {0.48, 0.48}, {0.82, 0.6}, {0.84, 0.82},
               {0.5, 0.96}, {0.14, 0.88}}};
    case 4: return {{{0.66, 0.96}, {0.66, 0.04}, {0.1, 0.68}, {0.92, 0.68}}};
    case 5:
      return {{{0.82, 0.04}, {0.25, 0.04}, {0.2, 0.45}, {0.5, 0.38}, {0.8, 0.5}, {0.83, 0.78}, {0.55, 0.96},
               {0.15, 0.88}}};
    case 6:
      return {{{0.76, 0.07}, {0.45, 0.1}, {0.22, 0.4}, {0.18, 0.7}, {0.3, 0.93}, {0.6, 0.96}, {0.8, 0.78},
               {0.75, 0.55}, {0.5, 0.47}, {0.22, 0.6}}};
    case 7: return {{{0.12, 0.04}, {0.88, 0.04}, {0.4, 0.96}}};
    case 8: return {ellipse(0.5, 0.26, 0.26, 0.22), ellipse(0.5, 0.72, 0.32, 0.24)};
    case 9: return {ellipse(0.48, 0.3, 0.3, 0.26), {{0.78, 0.3}, {0.74, 0.7}, {0.55, 0.96}}};
    default: throw RangeError("digit glyph index out of range");
  }
}

double segment_distance(double px, double py, const Point& a, const Point& b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((px - a.x) * dx + (py - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = a.x + t * dx - px, ey = a.y + t * dy - py;
  return std::sqrt(ex * ex + ey * ey);
}

}  // namespace

Dataset synth_digits(std::size_t n, std::uint64_t seed) {
  constexpr std::size_t kSide = 28;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto range = [&](double lo, double hi) { return lo + (hi - lo) * uni(rng); };

  Dataset d;
  d.kind = DatasetKind::static_images;
  d.num_classes = 10;
  std::vector<Real> pixels(n * kSide * kSide, 0.0);
  d.labels.resize(n);

  for (std::size_t s = 0; s < n; ++s) {
    const int digit = static_cast<int>(s % 10);
    d.labels[s] = digit;

    // Affine map from the unit glyph box to pixel space.
    const double height = range(16.0, 21.0);
    const double width = height * range(0.6, 0.85);
    const double angle = range(-0.22, 0.22);
    const double shear = range(-0.25, 0.25);
    const double cx = 13.5 + range(-2.0, 2.0), cy = 13.5 + range(-2.0, 2.0);
    const double thickness = range(0.9, 1.9);
    const double ca = std::cos(angle), sa = std::sin(angle);

    std::vector<Stroke> strokes = glyph(digit);
    for (Stroke& st : strokes) {
      for (Point& p : st) {
        const double ux = (p.x - 0.5 + 0.035 * gauss(rng)) * width;
        const double uy = (p.y - 0.5 + 0.035 * gauss(rng)) * height;
        const double sx = ux + shear * uy;
        p = {cx + ca * sx - sa * uy, cy + sa * sx + ca * uy};
      }
    }

    Real* img = pixels.data() + s * kSide * kSide;
    for (std::size_t y = 0; y < kSide; ++y) {
      for (std::size_t x = 0; x < kSide; ++x) {
        double dmin = 1e9;
        for (const Stroke& st : strokes) {
          for (std::size_t k = 0; k + 1 < st.size(); ++k) {
            dmin = std::min(dmin, segment_distance(static_cast<double>(x), static_cast<double>(y), st[k], st[k + 1]));
          }
        }
        double v = std::clamp(1.0 + thickness - dmin - 0.5, 0.0, 1.0);
        v = std::clamp(v + 0.06 * gauss(rng), 0.0, 1.0);
        img[y * kSide + x] = std::round(v * 255.0) / 255.0;
      }
    }
  }
  d.images = RealTensor(Shape{n, kSide, kSide}, std::move(pixels));
  for (std::size_t i = 0; i < n; ++i) d.train.push_back(i);
  return d;
}

// ---------------------------------------------------------------- events

EventPattern parse_event_pattern(std::string_view s) {
  if (s == "moving-bar") return EventPattern::moving_bar;
  if (s == "two-class-rotation") return EventPattern::two_class_rotation;
  throw ConfigError("unknown event pattern '" + std::string(s) + "'");
}

std::string to_string(EventPattern p) {
  return p == EventPattern::moving_bar ? "moving-bar" : "two-class-rotation";
}

int class_count(EventPattern p) { return p == EventPattern::moving_bar ? 4 : 2; }

namespace {

using Coverage = std::vector<std::uint8_t>;  // [height * width]

// Canonical frames of a bar rotating counter-clockwise through half a turn
// about the centre.
Coverage rotation_cover(std::int32_t t, std::int32_t frame, std::int32_t duration, std::int32_t bar_width,
                        double phase) {
  Coverage c(static_cast<std::size_t>(frame * frame), 0);
  const double theta = phase + std::numbers::pi * static_cast<double>(t) / static_cast<double>(duration);
  const double centre = (frame - 1) / 2.0;
  const double nx = -std::sin(theta), ny = std::cos(theta);
  for (std::int32_t y = 0; y < frame; ++y) {
    for (std::int32_t x = 0; x < frame; ++x) {
      const double dx = x - centre, dy = y - centre;
      if (std::abs(dx * nx + dy * ny) <= 0.5 * bar_width + 0.25 && dx * dx + dy * dy <= centre * centre + 1.0) {
        c[static_cast<std::size_t>(y * frame + x)] = 1;
      }
    }
  }
  return c;
}

// Class-specific relabelling of canonical coordinates.
std::pair<std::int32_t, std::int32_t> orient(int label, std::int32_t x, std::int32_t y, std::int32_t frame) {
  switch (label) {
    case 0: return {x, y};                  // rightwards / counter-clockwise
    case 1: return {frame - 1 - x, y};      // leftwards / clockwise
    case 2: return {y, x};                  // downwards
    default: return {y, frame - 1 - x};     // upwards
  }
}

}  // namespace

EventStream synth_event_stream(EventPattern pattern, int label, const EventSynthOptions& opts, std::mt19937_64& rng) {
  if (opts.frame < 4 || opts.duration < 1) throw ConfigError("degenerate event frame or duration");
  if (label < 0 || label >= class_count(pattern)) throw RangeError("event label out of range");
  const std::int32_t frame = opts.frame, duration = opts.duration;

  std::uniform_int_distribution<std::int32_t> width_dist(1, 2);
  std::uniform_real_distribution<double> phase_dist(0.0, std::numbers::pi);
  const std::int32_t bar_width = width_dist(rng);
  const double phase = phase_dist(rng);

  std::vector<Event> canonical;
  if (pattern == EventPattern::moving_bar) {
    // A full-height bar sweeping left to right. Column x turns ON when the
    // leading edge reaches it and OFF when the trailing edge leaves, so every
    // pixel fires exactly one ON and one OFF event inside the stream.
    const std::int64_t span = frame + bar_width;
    for (std::int32_t x = 0; x < frame; ++x) {
      const auto on = static_cast<std::int32_t>(std::int64_t{x} * duration / span);
      const auto off = static_cast<std::int32_t>((std::int64_t{x} + bar_width) * duration / span);
      for (std::int32_t y = 0; y < frame; ++y) {
        canonical.push_back(Event{on, x, y, 1});
        canonical.push_back(Event{off, x, y, 0});
      }
    }
  } else {
    Coverage prev(static_cast<std::size_t>(frame * frame), 0);
    for (std::int32_t t = 0; t <= duration; ++t) {
      // One extra frame clears the bar so the stream ends dark.
      const Coverage cur = t < duration ? rotation_cover(t, frame, duration, bar_width, phase)
                                        : Coverage(prev.size(), 0);
      const std::int32_t stamp = std::min(t, duration - 1);
      for (std::int32_t y = 0; y < frame; ++y) {
        for (std::int32_t x = 0; x < frame; ++x) {
          const auto i = static_cast<std::size_t>(y * frame + x);
          if (cur[i] != prev[i]) canonical.push_back(Event{stamp, x, y, static_cast<std::uint8_t>(cur[i])});
        }
      }
      prev = cur;
    }
  }

  std::uniform_int_distribution<std::int32_t> noise_count(0, std::max(0, opts.max_noise_events));
  std::uniform_int_distribution<std::int32_t> pos(0, frame - 1), when(0, duration - 1), pol(0, 1);
  const std::int32_t noise = noise_count(rng);
  for (std::int32_t k = 0; k < noise; ++k) {
    const std::int32_t t = when(rng), x = pos(rng), y = pos(rng);
    canonical.push_back(Event{t, x, y, static_cast<std::uint8_t>(pol(rng))});
  }
  std::stable_sort(canonical.begin(), canonical.end(), [](const Event& a, const Event& b) { return a.t < b.t; });

  EventStream s;
  s.duration = duration;
  s.width = frame;
  s.height = frame;
  s.events.reserve(canonical.size());
  for (const Event& e : canonical) {
    const auto [x, y] = orient(label, e.x, e.y, frame);
    s.events.push_back(Event{e.t, x, y, e.polarity});
  }
  return s;
}

Dataset synth_events(EventPattern pattern, std::size_t n_samples, const EventSynthOptions& opts, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Dataset d;
  d.kind = DatasetKind::event_streams;
  d.num_classes = static_cast<std::size_t>(class_count(pattern));
  for (std::size_t i = 0; i < n_samples; ++i) {
    const int label = static_cast<int>(i % d.num_classes);
    d.streams.push_back(synth_event_stream(pattern, label, opts, rng));
    d.labels.push_back(label);
    d.train.push_back(i);
  }
  return d;
}

std::vector<RealTensor> bin_events(const EventStream& stream, int time_steps) {
  if (time_steps < 1) throw ConfigError("bin count must be >= 1");
  if (time_steps > stream.duration) {
    throw ConfigError("cannot bin a stream of duration " + std::to_string(stream.duration) + " into " +
                      std::to_string(time_steps) + " frames");
  }
  const auto h = static_cast<std::size_t>(stream.height), w = static_cast<std::size_t>(stream.width);
  std::vector<RealTensor> frames(static_cast<std::size_t>(time_steps), RealTensor(Shape{2, h, w}));
  for (const Event& e : stream.events) {
    const auto bin = static_cast<std::size_t>(static_cast<std::int64_t>(e.t) * time_steps / stream.duration);
    frames[bin][(e.polarity * h + static_cast<std::size_t>(e.y)) * w + static_cast<std::size_t>(e.x)] += 1.0;
  }
  return frames;
}

void write_event_file(const std::filesystem::path& path, const Dataset& data, const std::string& comment) {
  if (data.kind != DatasetKind::event_streams || data.streams.empty()) {
    throw ConfigError("write_event_file needs a nonempty event dataset");
  }
  std::ofstream out(path);
  if (!out) throw DataFormatError("cannot write " + path.string());
  const EventStream& first = data.streams.front();
  out << "# qsnn-events width=" << first.width << " height=" << first.height << " duration=" << first.duration
      << " classes=" << data.num_classes << '\n';
  if (!comment.empty()) out << "# " << comment << '\n';
  for (std::size_t i = 0; i < data.streams.size(); ++i) {
    out << "# sample label=" << data.labels[i] << '\n';
    for (const Event& e : data.streams[i].events) {
      out << e.t << ' ' << e.x << ' ' << e.y << ' ' << static_cast<int>(e.polarity) << '\n';
    }
  }
}

namespace {

std::int64_t header_value(const std::string& line, const std::string& key, const std::filesystem::path& path) {
  const std::string tag = key + "=";
  const std::size_t at = line.find(tag);
  if (at == std::string::npos) throw DataFormatError(path.string() + ": header lacks " + key);
  try {
    return std::stoll(line.substr(at + tag.size()));
  } catch (const std::exception&) {
    throw DataFormatError(path.string() + ": bad value for " + key);
  }
}

}  // namespace

Dataset read_event_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataFormatError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("# qsnn-events", 0) != 0) {
    throw BadMagicError(path.string() + ": missing '# qsnn-events' header");
  }
  const auto width = static_cast<std::int32_t>(header_value(line, "width", path));
  const auto height = static_cast<std::int32_t>(header_value(line, "height", path));
  const auto duration = static_cast<std::int32_t>(header_value(line, "duration", path));
  const auto classes = header_value(line, "classes", path);

  Dataset d;
  d.kind = DatasetKind::event_streams;
  d.num_classes = static_cast<std::size_t>(classes);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line.rfind("# sample", 0) == 0) {
        d.labels.push_back(static_cast<int>(header_value(line, "label", path)));
        d.streams.push_back(EventStream{{}, duration, width, height});
      }
      continue;
    }
    if (d.streams.empty()) throw DataFormatError(path.string() + ": event before any '# sample' line");
    std::istringstream fields(line);
    std::int32_t t = 0, x = 0, y = 0, p = 0;
    if (!(fields >> t >> x >> y >> p)) {
      throw DataFormatError(path.string() + ":" + std::to_string(lineno) + ": expected 't x y p'");
    }
    d.streams.back().events.push_back(Event{t, x, y, static_cast<std::uint8_t>(p)});
    if (p != 0 && p != 1) throw RangeError(path.string() + ":" + std::to_string(lineno) + ": polarity must be 0 or 1");
  }
  for (const EventStream& s : d.streams) s.validate();
  for (std::size_t i = 0; i < d.size(); ++i) d.train.push_back(i);
  d.validate();
  return d;
}

StepInputs make_step_inputs(const Dataset& data, std::span<const std::size_t> indices, const BitAllocation& alloc,
                            Encoder encoder) {
  if (indices.empty()) throw ConfigError("cannot build inputs for an empty sample set");
  const Shape sample = data.sample_shape();
  const std::size_t per = sample.numel();
  std::vector<std::size_t> dims{indices.size()};
  for (std::size_t d : sample.dims()) dims.push_back(d);
  const Shape batch_shape(dims);

  if (data.kind == DatasetKind::static_images) {
    RealTensor batch(batch_shape);
    for (std::size_t b = 0; b < indices.size(); ++b) {
      if (indices[b] >= data.size()) throw RangeError("sample index out of range");
      std::copy_n(data.images.values().begin() + static_cast<std::ptrdiff_t>(indices[b] * per), per,
                  batch.data().begin() + static_cast<std::ptrdiff_t>(b * per));
    }
    return encode_static(batch, alloc, encoder);
  }

  StepInputs steps(static_cast<std::size_t>(alloc.time_steps), RealTensor(batch_shape));
  for (std::size_t b = 0; b < indices.size(); ++b) {
    if (indices[b] >= data.size()) throw RangeError("sample index out of range");
    const std::vector<RealTensor> frames = bin_events(data.streams[indices[b]], alloc.time_steps);
    for (std::size_t t = 0; t < frames.size(); ++t) {
      std::copy(frames[t].values().begin(), frames[t].values().end(),
                steps[t].data().begin() + static_cast<std::ptrdiff_t>(b * per));
    }
  }
  return steps;
}

Dataset xor_dataset(std::size_t repeats) {
  Dataset d;
  d.kind = DatasetKind::static_images;
  d.num_classes = 2;
  std::vector<Real> pixels;
  for (std::size_t r = 0; r < repeats; ++r) {
    for (int a = 0; a <= 1; ++a) {
      for (int b = 0; b <= 1; ++b) {
        pixels.push_back(a);
        pixels.push_back(b);
        d.labels.push_back(a ^ b);
      }
    }
  }
  d.images = RealTensor(Shape{d.labels.size(), 2}, std::move(pixels));
  for (std::size_t i = 0; i < d.size(); ++i) d.train.push_back(i);
  return d;
}

}  // namespace qsnn
