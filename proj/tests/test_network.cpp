#include <doctest.h>

#include <random>

#include "qsnn/error.hpp"
#include "qsnn/network.hpp"
#include "qsnn/parallel.hpp"
#include "qsnn/serialize.hpp"

using namespace qsnn;

namespace {

NeuronParams no_leak() {
  NeuronParams p;
  p.tau = 1e12;
  return p;
}

// One dense layer with a spiking output and full-precision weights.
NetworkSpec single_layer(const std::vector<Real>& w, int t, const NeuronParams& p) {
  NetworkSpec net;
  net.allocation = {32, 1, t};
  net.decoder = Decoder::spike_count;
  net.layers.push_back(make_dense(2, 2, p));
  net.layers[0].weight = RealTensor(Shape{2, 2}, w);
  net.requantize();
  return net;
}

StepInputs constant_steps(const RealTensor& x, int t) { return StepInputs(static_cast<std::size_t>(t), x); }

}  // namespace

TEST_SUITE("network") {

TEST_CASE("allocation parsing") {
  auto a = BitAllocation::parse("8/2/2");
  CHECK(a == BitAllocation{8, 2, 2});
  CHECK(a.to_string() == "8/2/2");
  CHECK_THROWS_AS(BitAllocation::parse("4/4"), ConfigError);
  CHECK_THROWS_AS(BitAllocation::parse("4/x/1"), ConfigError);
  CHECK_THROWS_AS(BitAllocation::parse("0/1/1"), ConfigError);
  CHECK_THROWS_AS(BitAllocation::parse("1/1/1/1"), ConfigError);
}

TEST_CASE("identity layer spikes on the supra-threshold input only") {
  auto net = single_layer({1, 0, 0, 1}, 1, no_leak());
  ForwardOptions o;
  o.record_trace = true;
  auto r = forward(net, constant_steps(RealTensor(Shape{1, 2}, {1.5, 0.2}), 1), o);
  REQUIRE(r.trace.size() == 1);
  CHECK(r.trace[0].steps[0].levels.values() == std::vector<std::int64_t>{1, 0});
  CHECK(r.logits.values() == std::vector<Real>{1, 0});
}

TEST_CASE("two-step trace follows the scalar recurrence") {
  NeuronParams p;  // tau 2
  auto net = single_layer({1, 0, 0, 1}, 2, p);
  ForwardOptions o;
  o.record_trace = true;
  auto r = forward(net, constant_steps(RealTensor(Shape{1, 2}, {0.6, 0.6}), 2), o);
  // v: 0.6, 0.9 -> no spikes in two steps
  CHECK(r.trace[0].steps[0].levels[0] == 0);
  CHECK(r.trace[0].steps[1].levels[0] == 0);

  auto net3 = single_layer({1, 0, 0, 1}, 3, p);
  auto r3 = forward(net3, constant_steps(RealTensor(Shape{1, 2}, {0.6, 0.6}), 3), o);
  CHECK(r3.trace[0].steps[2].levels[0] == 1);
}

TEST_CASE("zero input gives a silent trace and zero logits") {
  for (const char* preset : {"mlp", "cnn", "mlp:5-7-3"}) {
    auto net = make_preset(preset, {4, 2, 3});
    initialize_weights(net, 1);
    ForwardOptions o;
    o.record_trace = true;
    Shape in = net.input_shape();
    std::vector<std::size_t> dims{2};
    for (auto d : in.dims()) dims.push_back(d);
    auto r = forward(net, RealTensor(Shape(dims), 0.0), o);
    for (const auto& lt : r.trace)
      for (const auto& s : lt.steps) CHECK(s.active_count() == 0);
    for (Real v : r.logits.values()) CHECK(v == 0.0);
  }
}

TEST_CASE("static encoders") {
  RealTensor img(Shape{1, 3}, {0.0, 0.7, 1.0});
  auto d = encode_static(img, {1, 2, 3}, Encoder::direct_current);
  REQUIRE(d.size() == 3);
  for (const auto& s : d) CHECK(s == img);
  auto l = encode_static(img, {1, 2, 3}, Encoder::level_quantized);
  CHECK(l[0].values() == std::vector<Real>{0, 2, 3});
  CHECK(l[1].values() == std::vector<Real>{0, 0, 0});
  CHECK_THROWS_AS(encode_static(RealTensor(Shape{1, 1}, {1.2}), {1, 1, 1}, Encoder::direct_current), RangeError);
}

TEST_CASE("mac counting") {
  auto mlp = make_preset("mlp", {4, 4, 1});
  auto m = count_macs(mlp);
  CHECK(m.at({4, 4}) == 784 * 256 + 256 * 10);
  CHECK(make_dense(784, 100, std::nullopt).macs_per_step() == 78400);
  CHECK(make_flatten(Shape{8, 4, 4}).macs_per_step() == 0);
  CHECK(make_max_pool(Shape{8, 4, 4}, 2).macs_per_step() == 0);
  auto conv = make_conv2d(Shape{1, 28, 28}, 8, 3, {}, NeuronParams{});
  CHECK(conv.out_shape == Shape{8, 26, 26});
  CHECK(conv.macs_per_step() == 48672);

  // Independent of weight values.
  auto before = count_macs(mlp);
  initialize_weights(mlp, 99, 3.0);
  CHECK(count_macs(mlp) == before);
}

TEST_CASE("forward runs exactly T neuron updates per layer") {
  for (int t : {1, 2, 5}) {
    auto net = make_preset("mlp:6-5-4-3", {4, 2, t});
    initialize_weights(net, 3);
    auto r = forward(net, RealTensor(Shape{2, 6}, 0.5));
    CHECK(r.neuron_updates[0] == t);
    CHECK(r.neuron_updates[1] == t);
    CHECK(r.neuron_updates[2] == 0);  // output accumulator
  }
  auto net = make_preset("mlp:6-5-3", {4, 2, 3});
  initialize_weights(net, 3);
  CHECK_THROWS_AS(forward(net, StepInputs(2, RealTensor(Shape{1, 6}))), ShapeError);
}

TEST_CASE("spike-count decoding is the sum of per-step counts") {
  auto net = make_preset("mlp:6-8-3", {3, 2, 4});
  net.layers.back().neuron = NeuronParams{};
  net.layers.back().neuron->spike_bits = 2;
  net.decoder = Decoder::spike_count;
  initialize_weights(net, 5, 2.0);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<Real> u(0, 1);
  RealTensor x(Shape{4, 6});
  for (auto& v : x.data()) v = u(rng);
  ForwardOptions o;
  o.record_trace = true;
  auto r = forward(net, x, o);
  const auto& out = r.trace.back().steps;
  REQUIRE(out.size() == 4);
  for (std::size_t i = 0; i < r.logits.size(); ++i) {
    Real s = 0;
    for (const auto& step : out) s += static_cast<Real>(step.levels[i]);
    CHECK(r.logits[i] == s);
  }
}

TEST_CASE("samples in a batch are independent and thread count does not matter") {
  auto net = make_preset("cnn", {4, 2, 2});
  initialize_weights(net, 8, 1.5);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<Real> u(0, 1);
  RealTensor x(Shape{3, 1, 28, 28});
  for (auto& v : x.data()) v = u(rng);
  const std::size_t saved = max_threads();
  set_max_threads(1);
  auto serial = forward(net, x);
  set_max_threads(4);
  auto parallel = forward(net, x);
  set_max_threads(saved);
  CHECK(serial.logits == parallel.logits);
  for (std::size_t b = 0; b < 3; ++b) {
    RealTensor one(Shape{1, 1, 28, 28});
    std::copy_n(x.values().begin() + static_cast<long>(b * 784), 784, one.data().begin());
    auto r = forward(net, one);
    for (std::size_t c = 0; c < 10; ++c) CHECK(r.logits[c] == serial.logits.at(b, c));
  }
}

TEST_CASE("unquantized binary network matches a scalar LIF oracle") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<Real> u(-1, 2);
  for (int trial = 0; trial < 50; ++trial) {
    NeuronParams p;
    p.tau = 1.5 + trial % 3;
    const int steps = 6;
    NetworkSpec net;
    net.allocation = {32, 1, steps};
    net.decoder = Decoder::spike_count;
    net.layers.push_back(make_dense(2, 2, p));
    net.layers.push_back(make_dense(2, 2, p));
    for (auto& l : net.layers) {
      l.weight = RealTensor(Shape{2, 2});
      for (auto& w : l.weight.data()) w = u(rng);
    }
    net.requantize();
    StepInputs in;
    for (int t = 0; t < steps; ++t) {
      RealTensor x(Shape{1, 2});
      for (auto& v : x.data()) v = u(rng);
      in.push_back(x);
    }
    ForwardOptions o;
    o.record_trace = true;
    auto r = forward(net, in, o);

    Real v1[2] = {0, 0}, v2[2] = {0, 0};
    for (int t = 0; t < steps; ++t) {
      Real s1[2], s2[2];
      for (int j = 0; j < 2; ++j) {
        Real cur = 0;
        for (int i = 0; i < 2; ++i) cur += in[t][i] * net.layers[0].weight[i * 2 + j];
        v1[j] = v1[j] / p.tau + cur;
        s1[j] = v1[j] > 1.0 ? 1.0 : 0.0;
        if (s1[j] > 0) v1[j] = 0;
      }
      for (int j = 0; j < 2; ++j) {
        Real cur = 0;
        for (int i = 0; i < 2; ++i) cur += s1[i] * net.layers[1].weight[i * 2 + j];
        v2[j] = v2[j] / p.tau + cur;
        s2[j] = v2[j] > 1.0 ? 1.0 : 0.0;
        if (s2[j] > 0) v2[j] = 0;
      }
      for (std::size_t j = 0; j < 2; ++j) {
        CHECK(r.trace[0].steps[t].levels[j] == static_cast<std::int64_t>(s1[j]));
        CHECK(r.trace[1].steps[t].levels[j] == static_cast<std::int64_t>(s2[j]));
      }
    }
  }
}

TEST_CASE("validation catches allocation and shape inconsistencies") {
  auto net = make_preset("mlp:4-3-2", {2, 2, 1});
  initialize_weights(net, 0);
  net.layers[0].neuron->spike_bits = 3;
  CHECK_THROWS_AS(net.validate(), ConfigError);
  net.set_allocation({2, 3, 1});
  CHECK_NOTHROW(net.validate());
  net.layers[1].in_shape = Shape{5};
  CHECK_THROWS_AS(net.validate(), ShapeError);
  CHECK_THROWS_AS(make_preset("nope", {1, 1, 1}), ConfigError);
  CHECK_THROWS_AS(make_preset("mlp:4--2", {1, 1, 1}), ConfigError);
}

TEST_CASE("network document round trip") {
  auto net = make_preset("cnn", {3, 2, 2});
  initialize_weights(net, 12);
  const Json j = network_to_json(net);
  auto back = network_from_json(j);
  REQUIRE(back.layers.size() == net.layers.size());
  CHECK(back.allocation == net.allocation);
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    CHECK(back.layers[i].kind == net.layers[i].kind);
    CHECK(back.layers[i].out_shape == net.layers[i].out_shape);
    CHECK(back.layers[i].weight == net.layers[i].weight);
    CHECK(back.layers[i].quantized.codes == net.layers[i].quantized.codes);
  }
  // Tampered codes are rejected.
  Json bad = j;
  for (auto& l : bad["layers"]) {
    if (l.contains("quantized")) {
      l["quantized"]["codes"][0] = l["quantized"]["codes"][0].get<int>() + 1;
      break;
    }
  }
  CHECK_THROWS_AS(network_from_json(bad), ConfigError);
}

}
