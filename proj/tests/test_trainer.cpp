#include <doctest.h>

#include "gradcheck.hpp"
#include "qsnn/error.hpp"
#include "qsnn/trainer.hpp"

using namespace qsnn;

namespace {

// XOR setup: 16 repeats of the four patterns, MLP 2-8-2 at 8/2/2.
TrainConfig xor_config(std::uint64_t seed, std::size_t epochs) {
  TrainConfig c;
  c.architecture = "mlp:2-8-2";
  c.allocation = {8, 2, 2};
  c.epochs = epochs;
  c.batch_size = 4;
  c.learning_rate = 5e-3;
  c.init_gain = 2.0;
  c.seed = seed;
  c.dataset = "xor";
  c.strict_deterministic = true;
  return c;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("cross entropy and argmax") {
  RealTensor logits(Shape{2, 3}, {0, 0, 0, 1, 5, 5});
  const int labels[] = {0, 1};
  const Real expect = (std::log(3.0) + (std::log(std::exp(1.0) + 2 * std::exp(5.0)) - 5.0)) / 2;
  CHECK(cross_entropy(logits, labels) == doctest::Approx(expect));
  CHECK(argmax_row(logits, 0) == 0);
  CHECK(argmax_row(logits, 1) == 1);  // tie goes to the lower index
  const int bad[] = {0, 3};
  CHECK_THROWS_AS(cross_entropy(logits, bad), RangeError);
}

TEST_CASE("bptt gradients match central differences") {
  for (ResetMode mode : {ResetMode::hard, ResetMode::subtract}) {
    for (int s : {1, 2}) {
      for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto r = run_gradient_check(mode, s, 3, seed);
        CHECK(r.params == 12);
        CHECK(r.max_rel_err <= 1e-3);
      }
    }
  }
}

TEST_CASE("zero learning rate leaves weights bit-identical") {
  Dataset data = xor_dataset(4);
  TrainConfig c = xor_config(0, 3);
  c.learning_rate = 0.0;
  NetworkSpec init = build_network(c, data);
  auto [net, rec] = train(c, init, data);
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    CHECK(net.layers[i].weight == init.layers[i].weight);
    CHECK(net.layers[i].quantized.codes == init.layers[i].quantized.codes);
  }
}

TEST_CASE("fixed seed gives identical run records") {
  Dataset data = synth_digits(300, 1);
  assign_split(data, 100);
  TrainConfig c;
  c.epochs = 2;
  c.allocation = {2, 2, 2};
  c.seed = 4;
  c.strict_deterministic = true;
  auto [n1, r1] = train(c, build_network(c, data), data);
  auto [n2, r2] = train(c, build_network(c, data), data);
  CHECK(to_json(r1).dump() == to_json(r2).dump());
  CHECK_FALSE(r1.wall_time_seconds.has_value());
  for (std::size_t i = 0; i < n1.layers.size(); ++i) CHECK(n1.layers[i].weight == n2.layers[i].weight);
}

TEST_CASE("forward passes only ever see requantized shadow weights") {
  Dataset data = synth_digits(120, 2);
  assign_split(data, 20);
  for (QuantMode mode : {QuantMode::qat, QuantMode::post_training}) {
    TrainConfig c;
    c.epochs = 2;
    c.allocation = {3, 1, 2};
    c.quantization = mode;
    c.strict_deterministic = true;
    std::size_t checked = 0;
    TrainHooks hooks;
    hooks.before_update = [&](const NetworkSpec& net, std::size_t) {
      for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const LayerSpec& l = net.layers[i];
        if (!l.is_weighted_kind()) continue;
        const auto q = quantize_weights(l.weight, net.layer_weight_bits(i));
        REQUIRE(l.quantized.values == q.values);
        REQUIRE(l.quantized.codes == q.codes);
      }
      ++checked;
    };
    auto [net, rec] = train(c, build_network(c, data), data, hooks);
    CHECK(checked == 2 * ((100 + 31) / 32));
    // After training the deployed weights are at the allocation's width.
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
      if (!net.layers[i].is_weighted_kind()) continue;
      CHECK(net.layer_weight_bits(i) == 3);
      for (auto code : net.layers[i].quantized.codes.values()) CHECK(std::abs(code) <= 3);
    }
  }
}

TEST_CASE("xor is solved") {
  Dataset data = xor_dataset(16);
  TrainConfig c = xor_config(0, 200);
  auto [net, rec] = train(c, build_network(c, data), data);
  CHECK(evaluate(net, data, data.train) == 1.0);
  CHECK(rec.epochs.back().train_accuracy == 1.0);
}

TEST_CASE("xor loss decreases over the first ten epochs") {
  Dataset data = xor_dataset(16);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    TrainConfig c = xor_config(seed, 10);
    auto [net, rec] = train(c, build_network(c, data), data);
    REQUIRE(rec.epochs.size() == 10);
    CHECK(rec.epochs.back().train_loss < rec.epochs.front().train_loss);
  }
}

TEST_CASE("untrained network is at chance") {
  Dataset data = synth_digits(1000, 77);
  assign_split(data, 1000);
  TrainConfig c;
  c.seed = 3;
  const Real acc = evaluate(build_network(c, data), data);
  CHECK(acc >= 0.05);
  CHECK(acc <= 0.15);
  Dataset empty = data;
  empty.test.clear();
  CHECK_THROWS(evaluate(build_network(c, data), empty));
}

TEST_CASE("mlp at 4/4/1 learns the digit task") {
  Dataset train_set = synth_digits(3000, 12345);
  Dataset test_set = synth_digits(1000, 12346);
  Dataset data = merge_train_test(train_set, test_set);
  TrainConfig c;
  c.strict_deterministic = true;
  auto [net, rec] = train(c, build_network(c, data), data);
  REQUIRE(rec.final_accuracy.has_value());
  CHECK(*rec.final_accuracy > 0.90);
  CHECK(rec.cost.bit_budget == 16);
  CHECK(rec.cost.ns_ace.has_value());
  CHECK(*rec.cost.ns_ace <= static_cast<double>(rec.cost.s_ace));
}

TEST_CASE("sweep budget checks and ordering") {
  Dataset data = xor_dataset(4);
  TrainConfig c = xor_config(0, 1);
  CHECK_THROWS_AS(sweep_allocations(8, {{2, 2, 1}}, c, data), ConfigError);
  CHECK_NOTHROW(sweep_allocations(8, {{2, 2, 1}}, c, data, true));

  auto one = sweep_allocations(1, {{1, 1, 1}}, c, data);
  CHECK(one.size() == 1);

  auto rows = sweep_allocations(4, {{4, 1, 1}, {1, 1, 4}, {2, 2, 1}, {1, 4, 1}, {1, 2, 2}}, c, data);
  REQUIRE(rows.size() == 5);
  const BitAllocation order[] = {{1, 1, 4}, {1, 2, 2}, {1, 4, 1}, {2, 2, 1}, {4, 1, 1}};
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(rows[i].allocation == order[i]);
    CHECK(rows[i].record.cost.bit_budget == 4);
  }
  CHECK(sweep_csv_header() == std::string(kCostCsvHeader) + ",seed,epochs");
  CHECK(sweep_csv_row(rows[0]).ends_with(",0,1"));
  CHECK(sweep_table(rows).find("1/1/4") != std::string::npos);
}

TEST_CASE("config validation and json round trip") {
  TrainConfig c;
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.learning_rate = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = xor_config(7, 12);
  c.optimizer = OptimizerKind::sgd_momentum;
  TrainConfig back = train_config_from_json(to_json(c));
  CHECK(to_json(back).dump() == to_json(c).dump());
  CHECK_THROWS(parse_optimizer("rmsprop"));
}

TEST_CASE("sgd momentum also trains") {
  Dataset data = xor_dataset(16);
  TrainConfig c = xor_config(0, 30);
  c.optimizer = OptimizerKind::sgd_momentum;
  c.learning_rate = 0.05;
  auto [net, rec] = train(c, build_network(c, data), data);
  CHECK(rec.epochs.back().train_loss < rec.epochs.front().train_loss);
}

}
