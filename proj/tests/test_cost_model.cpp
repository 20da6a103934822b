#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "qsnn/cost_model.hpp"
#include "qsnn/error.hpp"
#include "qsnn/serialize.hpp"

using namespace qsnn;

namespace {

// Shape-only dense stub with the given per-step MAC count.
NetworkSpec stub(std::size_t in, std::size_t out, const BitAllocation& a) {
  NetworkSpec net;
  net.allocation = a;
  LayerSpec l;
  l.kind = LayerKind::dense;
  l.in_shape = Shape{in};
  l.out_shape = Shape{out};
  net.layers.push_back(l);
  return net;
}

// Mixed bit classes: 1,000 MACs at (4, 1) and 500 MACs at (1, 2), T = 2.
NetworkSpec mixed() {
  NetworkSpec net;
  net.allocation = {4, 1, 2};
  net.layers.push_back(make_dense(10, 100, std::nullopt));
  net.layers.back().weight_bits = 4;
  net.layers.back().spike_bits = 1;
  net.layers.push_back(make_dense(100, 5, std::nullopt));
  net.layers.back().weight_bits = 1;
  net.layers.back().spike_bits = 2;
  return net;
}

}  // namespace

TEST_SUITE("cost-model") {

TEST_CASE("bit budget reproduces the published table column") {
  struct Row {
    int w, s, t;
    std::int64_t bb;
  };
  const Row rows[] = {{16, 1, 250, 4000}, {16, 1, 4, 64}, {16, 1, 350, 5600}, {16, 1, 6, 96},
                      {1, 1, 1, 1},       {2, 1, 2, 4},   {2, 2, 1, 4},       {8, 8, 1, 64},
                      {4, 2, 1, 8},       {2, 4, 1, 8},   {4, 8, 1, 32},      {8, 4, 1, 32}};
  for (const Row& r : rows) CHECK(bit_budget({r.w, r.s, r.t}) == r.bb);
}

TEST_CASE("bit budget is symmetric in its factors") {
  for (int a = 1; a <= 6; ++a)
    for (int b = 1; b <= 6; ++b)
      for (int c = 1; c <= 6; ++c) {
        const auto v = bit_budget({a, b, c});
        CHECK(v == a * b * c);
        CHECK(v == bit_budget({b, c, a}));
        CHECK(v == bit_budget({c, a, b}));
        CHECK(v == bit_budget({b, a, c}));
      }
}

TEST_CASE("sops scale with time steps") {
  auto t4 = stub(340000, 10000, {16, 1, 4});
  CHECK(sops(t4) == 13'600'000'000LL);
  auto t1 = stub(340000, 10000, {16, 1, 1});
  CHECK(sops(t1) == 3'400'000'000LL);
  CHECK(sops(t4) == 4 * sops(t1));
  CHECK(bit_budget(t4.allocation) == 64);

  auto mlp = make_preset("mlp", {2, 1, 2});
  CHECK(sops(mlp) == 406528);
}

TEST_CASE("s-ace examples") {
  auto mlp = make_preset("mlp", {2, 1, 2});
  // n per step times BB = 203,264 * (2 * 1 * 2)
  CHECK(s_ace(mlp) == 203264LL * 4);
  CHECK(s_ace(mlp) == 813056);

  auto unit = make_preset("mlp", {1, 1, 1});
  CHECK(s_ace(unit) == 203264);

  CHECK(s_ace(mixed()) == 10000);
  MacCounts m{{{4, 1}, 1000}, {{1, 2}, 500}};
  CHECK(s_ace(m, 2) == 1000 * 8 + 500 * 4);
}

TEST_CASE("s-ace equals sops times W times S under uniform allocation") {
  for (int w = 1; w <= 8; w *= 2)
    for (int s = 1; s <= 4; ++s)
      for (int t = 1; t <= 4; ++t) {
        auto net = make_preset("mlp:30-20-5", {w, s, t});
        CHECK(s_ace(net) == sops(net) * w * s);
        auto w2 = make_preset("mlp:30-20-5", {2 * w, s, t});
        auto s2 = make_preset("mlp:30-20-5", {w, 2 * s, t});
        auto t2 = make_preset("mlp:30-20-5", {w, s, 2 * t});
        CHECK(s_ace(w2) == 2 * s_ace(net));
        CHECK(s_ace(s2) == 2 * s_ace(net));
        CHECK(s_ace(t2) == 2 * s_ace(net));
      }
}

TEST_CASE("ns-ace examples") {
  const MacTerm one{4, 2, 1000, 0.25};
  CHECK(ns_ace(std::span(&one, 1), 1) == 2000.0);

  auto net = mixed();
  const double ones[] = {1.0, 1.0}, zeros[] = {0.0, 0.0};
  CHECK(ns_ace(net, ones) == static_cast<double>(s_ace(net)));
  CHECK(ns_ace(net, zeros) == 0.0);

  const MacTerm bad{1, 1, 10, 1.5};
  CHECK_THROWS_AS(ns_ace(std::span(&bad, 1), 1), RangeError);
  const double short_rates[] = {0.5};
  CHECK_THROWS_AS(ns_ace(net, short_rates), ConfigError);
}

TEST_CASE("ns-ace never exceeds s-ace") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> bits(1, 8), steps(1, 16), groups(1, 5);
  std::uniform_int_distribution<std::int64_t> macs(1, 1'000'000);
  std::uniform_real_distribution<double> rate(0, 1);
  for (int trial = 0; trial < 1000; ++trial) {
    const int t = steps(rng);
    std::vector<MacTerm> terms;
    MacCounts counts;
    for (int g = groups(rng); g > 0; --g) {
      MacTerm m{bits(rng), bits(rng), macs(rng), rate(rng)};
      terms.push_back(m);
      counts[{m.weight_bits, m.spike_bits}] += m.macs;
    }
    const double sa = static_cast<double>(s_ace(counts, t));
    CHECK(ns_ace(terms, t) <= sa);
    for (auto& m : terms) m.firing_rate = 1.0;
    CHECK(ns_ace(terms, t) == sa);
    for (auto& m : terms) m.firing_rate = 0.0;
    CHECK(ns_ace(terms, t) == 0.0);
    terms[0].firing_rate = 0.5;
    for (std::size_t i = 1; i < terms.size(); ++i) terms[i].firing_rate = 1.0;
    CHECK(ns_ace(terms, t) < sa);
  }
}

TEST_CASE("parameter bits and 16-bit equivalents") {
  auto w1 = stub(2179, 10000, {1, 1, 1});
  auto p1 = param_bits(w1);
  CHECK(p1.bits == 21'790'000);
  CHECK(std::round(p1.f16_equiv_millions * 100) / 100 == doctest::Approx(1.36));
  auto w2 = stub(2179, 10000, {2, 1, 2});
  CHECK(std::round(param_bits(w2).f16_equiv_millions * 100) / 100 == doctest::Approx(2.72));
  CHECK(param_bits(stub(100, 10, {8, 1, 1})).bits == 8000);
}

TEST_CASE("firing-rate profiling") {
  NeuronParams p;
  p.tau = 1e12;
  NetworkSpec net;
  net.allocation = {32, 1, 2};
  net.layers.push_back(make_dense(2, 2, p));
  net.layers[0].weight = RealTensor(Shape{2, 2}, {1, 0, 0, 1});
  net.requantize();

  const StepInputs one_spike{RealTensor(Shape{1, 2}, {1.5, 0.0}), RealTensor(Shape{1, 2}, {0.0, 0.0})};
  auto prof = profile_firing_rates(net, std::span(&one_spike, 1));
  REQUIRE(prof.layer_rates.size() == 1);
  CHECK(prof.layer_rates[0] == 0.25);

  const StepInputs silent(2, RealTensor(Shape{3, 2}, 0.0));
  CHECK(profile_firing_rates(net, std::span(&silent, 1)).layer_rates[0] == 0.0);

  const StepInputs saturated(2, RealTensor(Shape{3, 2}, 5.0));
  CHECK(profile_firing_rates(net, std::span(&saturated, 1)).layer_rates[0] == 1.0);

  CHECK_THROWS_AS(profile_firing_rates(net, std::span<const StepInputs>{}), ConfigError);
}

TEST_CASE("cost report and csv row") {
  auto net = make_preset("mlp", {2, 1, 2});
  initialize_weights(net, 0);
  auto rep = make_cost_report(net, nullptr, 0.5);
  CHECK(rep.bit_budget == 4);
  CHECK(rep.sops == 406528);
  CHECK(rep.s_ace == 813056);
  CHECK(rep.param_bits == 203264 * 2);
  CHECK(*rep.energy_estimate == 0.5 * 813056);
  CHECK_FALSE(rep.ns_ace.has_value());
  CHECK(cost_csv_row(rep) == "2,1,2,4,406528,406528,813056,,,");
  CHECK(std::string(kCostCsvHeader) == "w_bits,s_bits,t_steps,bit_budget,params_bits,sops,s_ace,ns_ace,acc,fr_mean");
}

TEST_CASE("stub network documents feed the cost model") {
  Json j = Json::parse(R"({"format":"qsnn-network","allocation":"4/1/2","layers":[
      {"kind":"dense","in_shape":[10],"out_shape":[100],"neuron":null,"weight_bits":4,"spike_bits":1},
      {"kind":"dense","in_shape":[100],"out_shape":[5],"neuron":null,"weight_bits":1,"spike_bits":2}]})");
  auto net = network_from_json(j);
  CHECK(s_ace(net) == 10000);
  CHECK(make_cost_report(net).s_ace == 10000);
}

}
