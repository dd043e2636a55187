#include <cmath>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "stnscm/error.hpp"
#include "stnscm/gradcheck.hpp"
#include "stnscm/input_gate.hpp"

using namespace stnscm;
using doctest::Approx;

namespace {

void zero_all(ParamRegistry& params) {
  for (auto& [name, t] : params.entries())
    for (double& v : t.mutable_values()) v = 0.0;
}

}  // namespace

TEST_CASE("glu scalar value") {
  const Tensor one = Tensor::from({1, 1}, {1.0});
  const Tensor zero = Tensor::from({1}, {0.0});
  const double y = glu(one, one, zero, one, zero).item();
  CHECK(y == Approx(1.0 + std::tanh(1.0) / (1.0 + std::exp(-1.0))).epsilon(1e-15));
  CHECK(y == Approx(1.55677).epsilon(1e-5));
}

TEST_CASE("glu with zero parameters is the identity") {
  std::mt19937_64 rng(2);
  const Tensor x = testing::random_tensor({4, 6}, rng, -3, 3);
  const Tensor w = Tensor::zeros({6, 6});
  const Tensor b = Tensor::zeros({6});
  CHECK(testing::max_abs_diff(glu(x, w, b, w, b), x) == 0.0);
  CHECK_THROWS_AS(glu(x, Tensor::zeros({6, 5}), Tensor::zeros({5}), w, b), DimensionError);
}

TEST_CASE("glu perturbation is bounded by one") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    // pre-activations stay below the range where tanh rounds to exactly 1
    const Tensor x = testing::random_tensor({5, 7}, rng, -2, 2);
    const Tensor w1 = testing::random_tensor({7, 7}, rng, -1, 1);
    const Tensor w2 = testing::random_tensor({7, 7}, rng, -1, 1);
    const Tensor a = testing::random_tensor({7}, rng, -2, 2);
    const Tensor b = testing::random_tensor({7}, rng, -2, 2);
    CHECK(testing::max_abs(sub(glu(x, w1, a, w2, b), x)) < 1.0);
  }
}

TEST_CASE("branch fusion shapes and zero weights") {
  std::mt19937_64 rng(6);
  ParamRegistry params;
  const InputGate gate = InputGate::create(params, "ig", InputGateMode::Glu, 2, 3, 12, rng);
  CHECK(gate.branch_width() == 4);
  CHECK_FALSE(gate.has_projection());
  const Tensor week = testing::random_tensor({3, 5}, rng);
  const Tensor day = testing::random_tensor({3, 5}, rng);
  const Tensor hour = testing::random_tensor({3, 5}, rng);
  const Tensor fused = gate.fuse_branches(week, day, hour);
  CHECK(fused.shape() == Shape{3, 12});
  CHECK(gate.forward(week, day, hour).shape() == Shape{3, 12});
  CHECK_THROWS_AS(gate.fuse_branches(week, day, testing::random_tensor({3, 4}, rng)), DimensionError);

  zero_all(params);
  CHECK(testing::max_abs(gate.fuse_branches(week, day, hour)) == 0.0);
}

TEST_CASE("width not divisible by three gets a projection") {
  std::mt19937_64 rng(6);
  ParamRegistry params;
  const InputGate gate = InputGate::create(params, "ig", InputGateMode::Glu, 2, 3, 8, rng);
  CHECK(gate.has_projection());
  const Tensor x = testing::random_tensor({2, 4, 5}, rng);
  CHECK(gate.forward(x, x, x).shape() == Shape{2, 4, 8});
}

TEST_CASE("input gate is row-permutation equivariant") {
  std::mt19937_64 rng(8);
  ParamRegistry params;
  const InputGate gate = InputGate::create(params, "ig", InputGateMode::Glu, 2, 3, 9, rng);
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  std::vector<Tensor> branches, permuted;
  for (int i = 0; i < 3; ++i) {
    branches.push_back(testing::random_tensor({4, 5}, rng));
    std::vector<Tensor> rows;
    for (std::size_t p : perm) rows.push_back(slice(branches.back(), 0, p, 1));
    permuted.push_back(concat(rows, 0));
  }
  const Tensor y = gate.forward(branches[0], branches[1], branches[2]);
  const Tensor yp = gate.forward(permuted[0], permuted[1], permuted[2]);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t c = 0; c < 9; ++c) CHECK(yp.at({i, c}) == y.at({perm[i], c}));
}

TEST_CASE("input gate gradients") {
  for (InputGateMode mode : {InputGateMode::Glu, InputGateMode::Fc, InputGateMode::None}) {
    std::mt19937_64 rng(10);
    ParamRegistry params;
    const InputGate gate = InputGate::create(params, "ig", mode, 2, 3, 6, rng);
    const Tensor week = testing::random_tensor({3, 5}, rng);
    const Tensor day = testing::random_tensor({3, 5}, rng);
    const Tensor hour = testing::random_tensor({3, 5}, rng);
    const auto report = grad_check([&] { return sum_all(gate.forward(week, day, hour)); }, params);
    CHECK(report.max_rel_error < 1e-4);
  }
}

TEST_CASE("glu gradient with respect to its own parameters") {
  std::mt19937_64 rng(12);
  ParamRegistry params;
  const Tensor& w1 = params.add("theta1", testing::random_tensor({4, 4}, rng, -1, 1, true));
  const Tensor& a = params.add("a", testing::random_tensor({4}, rng, -1, 1, true));
  const Tensor& w2 = params.add("theta2", testing::random_tensor({4, 4}, rng, -1, 1, true));
  const Tensor& b = params.add("b", testing::random_tensor({4}, rng, -1, 1, true));
  const Tensor x = testing::random_tensor({3, 4}, rng);
  const auto report = grad_check([&] { return sum_all(glu(x, w1, a, w2, b)); }, params);
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("input gate instrumentation") {
  std::mt19937_64 rng(1);
  Instrumentation instr;
  ParamRegistry params;
  const Tensor x = testing::random_tensor({3, 5}, rng);
  InputGate::create(params, "a", InputGateMode::Glu, 2, 3, 6, rng).forward(x, x, x, &instr);
  InputGate::create(params, "b", InputGateMode::Fc, 2, 3, 6, rng).forward(x, x, x, &instr);
  InputGate::create(params, "c", InputGateMode::None, 2, 3, 6, rng).forward(x, x, x, &instr);
  CHECK(instr.glu_calls == 1);
  CHECK(instr.fc_gate_calls == 1);
  CHECK(instr.flow_only_inputs == 1);
  CHECK_THROWS_AS(parse_input_gate_mode("attention"), ConfigError);
}
