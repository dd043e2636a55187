#include <cmath>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "stnscm/error.hpp"
#include "stnscm/gradcheck.hpp"
#include "stnscm/params.hpp"
#include "stnscm/tensor.hpp"

using namespace stnscm;
using doctest::Approx;

TEST_CASE("scalar nonlinearities at known points") {
  CHECK(tanh(Tensor::scalar(1.0)).item() == Approx(0.761594).epsilon(1e-6));
  CHECK(sigmoid(Tensor::scalar(0.0)).item() == 0.5);
  CHECK(relu(Tensor::scalar(-2.0)).item() == 0.0);
  CHECK(relu(Tensor::scalar(2.0)).item() == 2.0);
  CHECK(sigmoid(Tensor::scalar(-800.0)).item() >= 0.0);
  CHECK(sigmoid(Tensor::scalar(800.0)).item() == 1.0);
}

TEST_CASE("softmax of [0, ln 3]") {
  const Tensor s = softmax_lastdim(Tensor::from({2}, {0.0, std::log(3.0)}));
  CHECK(s.at({0}) == Approx(0.25).epsilon(1e-14));
  CHECK(s.at({1}) == Approx(0.75).epsilon(1e-14));

  // large logits stay finite
  const Tensor big = softmax_lastdim(Tensor::from({3}, {1000.0, 1000.0, -1000.0}));
  CHECK(big.at({0}) == Approx(0.5));
  CHECK(big.at({2}) == 0.0);
}

TEST_CASE("matmul and reductions") {
  const Tensor c = matmul(Tensor::from({1, 2}, {1, 2}), Tensor::from({2, 1}, {3, 4}));
  CHECK(c.shape() == Shape{1, 1});
  CHECK(c.item() == 11.0);
  CHECK(mean_all(Tensor::from({4}, {1, 2, 3, 4})).item() == 2.5);
  CHECK(sum_all(Tensor::from({2, 2}, {1, 2, 3, 4})).item() == 10.0);

  const Tensor m = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  const Tensor s0 = sum(m, 0);
  CHECK(s0.shape() == Shape{3});
  CHECK(s0.at({2}) == 9.0);
  const Tensor m1 = mean(m, 1, true);
  CHECK(m1.shape() == Shape{2, 1});
  CHECK(m1.at({1, 0}) == 5.0);
}

TEST_CASE("batched matmul agrees with per-slice products") {
  std::mt19937_64 rng(1);
  const Tensor a = testing::random_tensor({3, 4, 5}, rng);
  const Tensor b = testing::random_tensor({3, 5, 2}, rng);
  const Tensor c = matmul(a, b);
  REQUIRE(c.shape() == Shape{3, 4, 2});
  for (std::size_t s = 0; s < 3; ++s) {
    const Tensor cs = matmul(select(a, 0, s), select(b, 0, s));
    CHECK(testing::max_abs_diff(select(c, 0, s), cs) < 1e-14);
  }
  // rank-2 right operand broadcasts across the batch
  const Tensor w = testing::random_tensor({5, 2}, rng);
  const Tensor cw = matmul(a, w);
  for (std::size_t s = 0; s < 3; ++s) {
    CHECK(testing::max_abs_diff(select(cw, 0, s), matmul(select(a, 0, s), w)) < 1e-14);
  }
}

TEST_CASE("shape mismatches raise DimensionError") {
  CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), DimensionError);
  CHECK_THROWS_AS(add(Tensor::zeros({2, 3}), Tensor::zeros({4})), DimensionError);
  CHECK_THROWS_AS(reshape(Tensor::zeros({2, 3}), {4}), DimensionError);
  CHECK_THROWS_AS(concat({Tensor::zeros({2, 3}), Tensor::zeros({3, 3})}, 1), DimensionError);
}

TEST_CASE("broadcasting add follows right alignment") {
  const Tensor x = Tensor::from({2, 3}, {0, 0, 0, 1, 1, 1});
  const Tensor b = Tensor::from({3}, {1, 2, 3});
  const Tensor y = add(x, b);
  CHECK(y.at({0, 2}) == 3.0);
  CHECK(y.at({1, 0}) == 2.0);
}

TEST_CASE("row normalization") {
  const Tensor a = Tensor::from({2, 2}, {1, 3, 0, 0});
  const Tensor r = row_normalize(a);
  CHECK(r.at({0, 0}) == 0.25);
  CHECK(r.at({0, 1}) == 0.75);
  CHECK(r.at({1, 0}) == 0.0);
  CHECK(r.at({1, 1}) == 0.0);
}

TEST_CASE("backward accumulates through shared subexpressions") {
  ParamRegistry params;
  Tensor& x = params.add("x", Tensor::from({1}, {3.0}));
  const Tensor y = sum_all(add(mul(x, x), x));
  y.backward();
  CHECK(x.grad()[0] == 7.0);
}

namespace {

void check_op_gradient(const std::function<Tensor(const Tensor&, const Tensor&)>& op, Shape sa, Shape sb,
                       double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(17);
  ParamRegistry params;
  const Tensor& a = params.add("a", testing::random_tensor(sa, rng, lo, hi, true));
  const Tensor& b = params.add("b", testing::random_tensor(sb, rng, lo, hi, true));
  const Tensor weights = testing::random_tensor(op(a, b).shape(), rng, 0.0, 1.0);
  const auto report = grad_check([&] { return sum_all(mul(op(a, b), weights)); }, params);
  CHECK(report.max_rel_error < 1e-6);
}

}  // namespace

TEST_CASE("finite-difference gradients of the core ops") {
  check_op_gradient([](const Tensor& a, const Tensor& b) { return add(a, b); }, {2, 3}, {3});
  check_op_gradient([](const Tensor& a, const Tensor& b) { return sub(a, b); }, {2, 3}, {2, 1});
  check_op_gradient([](const Tensor& a, const Tensor& b) { return mul(a, b); }, {2, 1, 3}, {4, 1});
  check_op_gradient([](const Tensor& a, const Tensor& b) { return matmul(a, b); }, {2, 3, 4}, {4, 5});
  check_op_gradient([](const Tensor& a, const Tensor& b) { return matmul(a, b); }, {2, 3, 4}, {2, 4, 2});
  check_op_gradient([](const Tensor& a, const Tensor& b) { return matmul(a, transpose_last2(b)); }, {3, 4}, {5, 4});
  check_op_gradient([](const Tensor& a, const Tensor& b) { return tanh(add(a, b)); }, {2, 3}, {3});
  check_op_gradient([](const Tensor& a, const Tensor& b) { return sigmoid(mul(a, b)); }, {2, 3}, {2, 3});
  check_op_gradient([](const Tensor& a, const Tensor& b) { return softmax_lastdim(mul(a, b)); }, {3, 4}, {4});
  check_op_gradient([](const Tensor& a, const Tensor& b) { return concat({a, b}, 1); }, {2, 3}, {2, 2});
  check_op_gradient([](const Tensor& a, const Tensor& b) { return mean(mul(a, b), 0); }, {3, 2}, {3, 2});
  check_op_gradient([](const Tensor& a, const Tensor& b) { return slice(add(a, b), 1, 1, 2); }, {2, 4}, {4});
  check_op_gradient([](const Tensor& a, const Tensor& b) { return reshape(mul(a, b), {6}); }, {2, 3}, {3});
  check_op_gradient([](const Tensor& a, const Tensor& b) { return row_normalize(mul(a, b)); }, {3, 3}, {3, 3}, 0.5,
                    2.0);
  check_op_gradient([](const Tensor& a, const Tensor& b) { return square(sub(a, b)); }, {2, 3}, {3});
  // away from the kinks
  check_op_gradient([](const Tensor& a, const Tensor& b) { return abs(sub(a, b)); }, {2, 3}, {2, 3}, 0.0, 1.0);
}

TEST_CASE("grad_check rejects out-of-range eps") {
  ParamRegistry params;
  const Tensor& x = params.add("x", Tensor::from({1}, {1.0}));
  GradCheckOptions opts;
  opts.eps = 1e-2;
  CHECK_THROWS_AS(grad_check([&] { return sum_all(x); }, params, opts), ConfigError);
}

TEST_CASE("relative error uses the 1e-8 floor") {
  CHECK(relative_error(0.0, 0.0) == 0.0);
  CHECK(relative_error(1e-12, 0.0) == Approx(1e-4));
  CHECK(relative_error(1.0, 1.0) == 0.0);
}
