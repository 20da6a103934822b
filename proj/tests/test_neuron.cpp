#include <doctest.h>

#include <cmath>
#include <random>

#include "qsnn/error.hpp"
#include "qsnn/neuron.hpp"

using namespace qsnn;

namespace {

NeuronState scalar_state(Real v) { return NeuronState{RealTensor(Shape{1}, {v}), 0}; }
RealTensor scalar(Real x) { return RealTensor(Shape{1}, {x}); }

}  // namespace

TEST_SUITE("neuron") {

TEST_CASE("lif trace with tau 2 and current 0.6 fires at step 3") {
  NeuronParams p;
  NeuronState s = scalar_state(0);
  const Real expect_v[] = {0.6, 0.9, 0.0};
  const std::int64_t expect_s[] = {0, 0, 1};
  for (int t = 0; t < 3; ++t) {
    auto r = lif_step(s, scalar(0.6), p);
    CHECK(r.spikes.levels[0] == expect_s[t]);
    CHECK(r.state.v[0] == doctest::Approx(expect_v[t]));
    CHECK(r.state.step_index == t + 1);
    s = r.state;
  }
}

TEST_CASE("lif trivial cases") {
  NeuronParams p;
  NeuronState s = scalar_state(0);
  for (int t = 0; t < 50; ++t) {
    auto r = lif_step(s, scalar(0), p);
    CHECK(r.spikes.levels[0] == 0);
    s = r.state;
  }
  auto r = lif_step(scalar_state(0), scalar(p.v_th + 1), p);
  CHECK(r.spikes.levels[0] == 1);
  // Exactly at threshold does not fire.
  CHECK(lif_step(scalar_state(0), scalar(p.v_th), p).spikes.levels[0] == 0);
  CHECK_THROWS_AS(lif_step(scalar_state(0), RealTensor(Shape{2}), p), ShapeError);
  NeuronParams two = p;
  two.spike_bits = 2;
  CHECK_THROWS_AS(lif_step(scalar_state(0), scalar(0), two), ConfigError);
}

TEST_CASE("graded level examples") {
  NeuronParams p;
  p.spike_bits = 2;
  CHECK(graded_step(scalar_state(0), scalar(2.7), p).spikes.levels[0] == 2);
  CHECK(graded_step(scalar_state(0), scalar(9.5), p).spikes.levels[0] == 3);
  p.reset_mode = ResetMode::subtract;
  auto r = graded_step(scalar_state(0), scalar(2.7), p);
  CHECK(r.state.v[0] == doctest::Approx(0.7));
  CHECK(r.spikes.values(p.v_th)[0] == 2.0);
}

TEST_CASE("subtract reset keeps the residual") {
  NeuronParams p;
  p.reset_mode = ResetMode::subtract;
  auto r = lif_step(scalar_state(0), scalar(1.4), p);
  CHECK(r.spikes.levels[0] == 1);
  CHECK(r.state.v[0] == doctest::Approx(0.4));
}

TEST_CASE("graded step with one bit equals lif bit-exactly") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<Real> cur(-0.5, 2.5);
  for (ResetMode mode : {ResetMode::hard, ResetMode::subtract}) {
    NeuronParams p;
    p.reset_mode = mode;
    p.tau = 1.7;
    NeuronState a = NeuronState::resting(Shape{100}, p), b = a;
    for (int t = 0; t < 120; ++t) {  // 12,000 neuron-steps per mode
      RealTensor c(Shape{100});
      for (auto& x : c.data()) x = cur(rng);
      auto ra = lif_step(a, c, p);
      auto rb = graded_step(b, c, p);
      REQUIRE(ra.spikes.levels == rb.spikes.levels);
      REQUIRE(ra.state.v == rb.state.v);
      a = ra.state;
      b = rb.state;
    }
  }
}

TEST_CASE("levels never exceed the spike width under huge currents") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<Real> big(-1e9, 1e9);
  for (int s = 1; s <= 8; ++s) {
    NeuronParams p;
    p.spike_bits = s;
    p.reset_mode = s % 2 ? ResetMode::hard : ResetMode::subtract;
    NeuronState st = NeuronState::resting(Shape{64}, p);
    for (int t = 0; t < 20; ++t) {
      RealTensor c(Shape{64});
      for (auto& x : c.data()) x = big(rng);
      auto r = graded_step(st, c, p);
      for (auto l : r.spikes.levels.values()) {
        CHECK(l >= 0);
        CHECK(l <= (std::int64_t{1} << s) - 1);
      }
      CHECK(r.state.v.all_finite());
      st = r.state;
    }
  }
}

TEST_CASE("zero input decays the membrane towards zero") {
  NeuronParams p;
  p.tau = 3;
  p.v_th = 100;  // nothing fires
  NeuronState s{RealTensor(Shape{3}, {5.0, -4.0, 0.5}), 0};
  RealTensor prev = s.v;
  for (int t = 0; t < 30; ++t) {
    s = lif_step(s, RealTensor(Shape{3}), p).state;
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(s.v[i]) < std::abs(prev[i]));
    prev = s.v;
  }
}

TEST_CASE("hard reset lands exactly on v_rst") {
  NeuronParams p;
  p.v_rst = -0.3125;
  p.spike_bits = 3;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<Real> u(0, 4);
  NeuronState s = NeuronState::resting(Shape{200}, p);
  for (int t = 0; t < 10; ++t) {
    RealTensor c(Shape{200});
    for (auto& x : c.data()) x = u(rng);
    auto r = graded_step(s, c, p);
    for (std::size_t i = 0; i < 200; ++i)
      if (r.spikes.levels[i] > 0) CHECK(r.state.v[i] == p.v_rst);
    s = r.state;
  }
}

TEST_CASE("neuron steps are deterministic") {
  NeuronParams p;
  p.spike_bits = 2;
  RealTensor c(Shape{4}, {0.3, 1.7, 2.2, 5.0});
  auto a = graded_step(NeuronState::resting(Shape{4}, p), c, p);
  auto b = graded_step(NeuronState::resting(Shape{4}, p), c, p);
  CHECK(a.state.v == b.state.v);
  CHECK(a.spikes.levels == b.spikes.levels);
}

TEST_CASE("rectangular surrogate") {
  NeuronParams p;
  auto g = surrogate_grad(RealTensor(Shape{4}, {1.0, 11.0, 1.4, 1.6}), p);
  CHECK(g.values() == std::vector<Real>{1.0, 0.0, 1.0, 0.0});
  p.surrogate_width = 0.5;
  CHECK(surrogate_grad(scalar(1.0), p)[0] == 2.0);
}

TEST_CASE("graded surrogate reduces to the binary one at one bit") {
  NeuronParams p;
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<Real> u(-2, 4);
  RealTensor v(Shape{300});
  for (auto& x : v.data()) x = u(rng);
  CHECK(graded_surrogate_grad(v, p) == surrogate_grad(v, p));
  p.spike_bits = 2;
  // One window per level boundary.
  CHECK(graded_surrogate_grad(scalar(2.0), p)[0] == 1.0);
  CHECK(graded_surrogate_grad(scalar(3.1), p)[0] == 1.0);
  CHECK(graded_surrogate_grad(scalar(4.0), p)[0] == 0.0);
}

TEST_CASE("parameter validation") {
  NeuronParams p;
  p.tau = 1.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = {};
  p.v_rst = 2.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = {};
  p.spike_bits = 0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
}

}
