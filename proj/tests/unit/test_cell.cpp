#include <cmath>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "stnscm/cell.hpp"
#include "stnscm/error.hpp"
#include "stnscm/gradcheck.hpp"

using namespace stnscm;

namespace {

GraphSet random_graph_set(std::size_t n, std::mt19937_64& rng) {
  auto make = [&] {
    SquareMatrix m(n);
    std::uniform_real_distribution<double> u(0, 1);
    for (double& v : m.data) v = u(rng);
    return m;
  };
  StaticGraph geo, trans;
  geo.adjacency = make();
  geo.adjacency = [&] {
    SquareMatrix s = geo.adjacency;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) s(i, j) = geo.adjacency(i, j) + geo.adjacency(j, i);
    return s;
  }();
  trans.adjacency = row_normalize(make());
  return make_graph_set(geo, trans);
}

CellOptions options(std::size_t n, std::size_t d) {
  CellOptions o;
  o.num_nodes = n;
  o.d = d;
  o.depth = 2;
  return o;
}

void fill(ParamRegistry& params, double value) {
  for (auto& [name, t] : params.entries())
    for (double& v : t.mutable_values()) v = value;
}

}  // namespace

TEST_CASE("zero parameters and zero state") {
  std::mt19937_64 rng(1);
  ParamRegistry params;
  const StnscuCell cell = StnscuCell::create(params, "cell", options(4, 3), rng);
  fill(params, 0.0);
  const GraphSet graphs = random_graph_set(4, rng);
  const CellStep s = cell.step(testing::random_tensor({4, 3}, rng), Tensor::zeros({4, 3}), graphs);
  for (double v : s.r.values()) CHECK(v == 0.5);
  for (double v : s.z.values()) CHECK(v == 0.5);
  for (double v : s.h_tilde.values()) CHECK(v == 0.0);
  for (double v : s.h.values()) CHECK(v == 0.0);
}

TEST_CASE("saturated update gate keeps the previous state") {
  std::mt19937_64 rng(2);
  ParamRegistry params;
  const StnscuCell cell = StnscuCell::create(params, "cell", options(4, 3), rng);
  for (double& v : params.get("cell.b_z").mutable_values()) v = 50.0;
  const GraphSet graphs = random_graph_set(4, rng);
  const Tensor h_prev = testing::random_tensor({4, 3}, rng);
  const CellStep s = cell.step(testing::random_tensor({4, 3}, rng), h_prev, graphs);
  CHECK(testing::max_abs_diff(s.h, h_prev) < 1e-9);
}

TEST_CASE("states stay in [-1, 1] and gates in (0, 1)") {
  std::mt19937_64 rng(3);
  ParamRegistry params;
  const StnscuCell cell = StnscuCell::create(params, "cell", options(5, 4), rng);
  std::uniform_real_distribution<double> big(-3, 3);
  for (auto& [name, t] : params.entries())
    for (double& v : t.mutable_values()) v = big(rng);
  const GraphSet graphs = random_graph_set(5, rng);
  std::vector<Tensor> inputs;
  for (int i = 0; i < 12; ++i) inputs.push_back(testing::random_tensor({2, 5, 4}, rng, -10, 10));
  const auto states = encode(cell, inputs, graphs);
  REQUIRE(states.size() == 12);
  for (const auto& h : states) CHECK(testing::max_abs(h) <= 1.0);

  // at these magnitudes sigmoid rounds to exactly 0 or 1, so only the closed bounds hold
  Tensor h = Tensor::zeros({2, 5, 4});
  for (const auto& x : inputs) {
    const CellStep s = cell.step(x, h, graphs);
    for (const Tensor* g : {&s.r, &s.z}) {
      for (double v : g->values()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
    }
    for (double v : s.h_tilde.values()) CHECK(std::abs(v) <= 1.0);
    h = s.h;
  }
}

TEST_CASE("gates are strictly inside (0, 1) at moderate magnitudes") {
  std::mt19937_64 rng(31);
  ParamRegistry params;
  const StnscuCell cell = StnscuCell::create(params, "cell", options(5, 4), rng);
  const GraphSet graphs = random_graph_set(5, rng);
  Tensor h = Tensor::zeros({2, 5, 4});
  for (int i = 0; i < 12; ++i) {
    const CellStep s = cell.step(testing::random_tensor({2, 5, 4}, rng, -2, 2), h, graphs);
    for (const Tensor* g : {&s.r, &s.z}) {
      for (double v : g->values()) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
      }
    }
    CHECK(testing::max_abs(s.h) < 1.0);
    h = s.h;
  }
}

TEST_CASE("single-step encode matches one cell step") {
  std::mt19937_64 rng(4);
  ParamRegistry params;
  const StnscuCell cell = StnscuCell::create(params, "cell", options(4, 3), rng);
  const GraphSet graphs = random_graph_set(4, rng);
  const Tensor x = testing::random_tensor({4, 3}, rng);
  const auto states = encode(cell, {x}, graphs);
  REQUIRE(states.size() == 1);
  CHECK(testing::max_abs_diff(states[0], cell.step(x, Tensor::zeros({4, 3}), graphs).h) == 0.0);

  fill(params, 0.0);
  for (const auto& h : encode(cell, {Tensor::zeros({4, 3}), Tensor::zeros({4, 3})}, graphs))
    CHECK(testing::max_abs(h) == 0.0);
  CHECK_THROWS_AS(encode(cell, {}, graphs), ConfigError);
}

TEST_CASE("encoder is deterministic") {
  std::mt19937_64 rng(5);
  ParamRegistry params;
  const StnscuCell cell = StnscuCell::create(params, "cell", options(4, 3), rng);
  const GraphSet graphs = random_graph_set(4, rng);
  std::vector<Tensor> inputs;
  for (int i = 0; i < 4; ++i) inputs.push_back(testing::random_tensor({4, 3}, rng));
  const auto a = encode(cell, inputs, graphs);
  const auto b = encode(cell, inputs, graphs);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(testing::max_abs_diff(a[i], b[i]) == 0.0);
}

TEST_CASE("dynamic graph depends only on the step input and previous state") {
  std::mt19937_64 rng(6);
  ParamRegistry params;
  const StnscuCell cell = StnscuCell::create(params, "cell", options(4, 3), rng);
  const GraphSet graphs = random_graph_set(4, rng);
  const Tensor h = testing::random_tensor({4, 3}, rng);
  const Tensor x1 = testing::random_tensor({4, 3}, rng);
  const Tensor x2 = testing::random_tensor({4, 3}, rng);
  const CellStep a = cell.step(x1, h, graphs);
  const CellStep b = cell.step(x1, h, graphs);
  const CellStep c = cell.step(x2, h, graphs);
  CHECK(testing::max_abs_diff(a.dyn_graph, b.dyn_graph) == 0.0);
  CHECK(testing::max_abs_diff(a.dyn_graph, c.dyn_graph) > 0.0);
  CHECK(testing::max_abs_diff(a.dyn_graph, cell.generator().generate(x1, h)) == 0.0);
}

TEST_CASE("encoder gradient through four steps") {
  std::mt19937_64 rng(7);
  ParamRegistry params;
  const StnscuCell cell = StnscuCell::create(params, "cell", options(4, 3), rng);
  const GraphSet graphs = random_graph_set(4, rng);
  std::vector<Tensor> inputs;
  for (int i = 0; i < 4; ++i) inputs.push_back(testing::random_tensor({4, 3}, rng));
  const Tensor w = testing::random_tensor({4, 3}, rng, 0, 1);
  const auto report = grad_check([&] { return sum_all(mul(encode(cell, inputs, graphs).back(), w)); }, params);
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("cell shape errors") {
  std::mt19937_64 rng(8);
  ParamRegistry params;
  const StnscuCell cell = StnscuCell::create(params, "cell", options(4, 3), rng);
  const GraphSet graphs = random_graph_set(4, rng);
  CHECK_THROWS_AS(cell.step(Tensor::zeros({4, 2}), Tensor::zeros({4, 2}), graphs), DimensionError);
  CellOptions none = options(4, 3);
  none.terms.geo = none.terms.trans = none.terms.dyn = false;
  CHECK_THROWS_AS(StnscuCell::create(params, "none", none, rng), ConfigError);
}

TEST_CASE("non-finite inputs raise a numeric error naming the gate") {
  std::mt19937_64 rng(9);
  ParamRegistry params;
  CellOptions o = options(3, 2);
  o.terms.dyn = false;
  const StnscuCell cell = StnscuCell::create(params, "cell", o, rng);
  const GraphSet graphs = random_graph_set(3, rng);
  Tensor x = Tensor::zeros({3, 2});
  x.mutable_values()[0] = NAN;
  try {
    cell.step(x, Tensor::zeros({3, 2}), graphs);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("'r'") != std::string::npos);
  }
}
