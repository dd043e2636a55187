#include <cmath>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "stnscm/counterfactual.hpp"
#include "stnscm/error.hpp"
#include "stnscm/gradcheck.hpp"

using namespace stnscm;
using doctest::Approx;

TEST_CASE("single key returns its value") {
  std::mt19937_64 rng(1);
  const Tensor q = testing::random_tensor({3, 4}, rng);
  const Tensor k = testing::random_tensor({1, 4}, rng);
  const Tensor v = testing::random_tensor({1, 5}, rng);
  const Attention a = scaled_dot_attention(q, k, v);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t c = 0; c < 5; ++c) CHECK(a.output.at({i, c}) == v.at({0, c}));
}

TEST_CASE("equal logits average the values") {
  std::mt19937_64 rng(2);
  const Tensor v = testing::random_tensor({4, 3}, rng);
  const Attention a = scaled_dot_attention(Tensor::zeros({2, 5}), testing::random_tensor({4, 5}, rng), v);
  const Tensor avg = mean(v, 0);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t c = 0; c < 3; ++c) CHECK(a.output.at({i, c}) == Approx(avg.at({c})).epsilon(1e-14));
}

TEST_CASE("logits 0 and ln 3 weight the values 1:3") {
  // d = 1, scale 1: q k = logit
  const Tensor q = Tensor::from({1, 1}, {1.0});
  const Tensor k = Tensor::from({2, 1}, {0.0, std::log(3.0)});
  const Tensor v = Tensor::from({2, 2}, {4.0, 8.0, 0.0, 4.0});
  const Attention a = scaled_dot_attention(q, k, v);
  CHECK(a.weights.at({0, 0}) == Approx(0.25).epsilon(1e-14));
  CHECK(a.output.at({0, 0}) == Approx(0.25 * 4.0).epsilon(1e-14));
  CHECK(a.output.at({0, 1}) == Approx(0.25 * 8.0 + 0.75 * 4.0).epsilon(1e-14));
}

TEST_CASE("attention rows are probability vectors and shift invariant") {
  std::mt19937_64 rng(3);
  const Tensor q = testing::random_tensor({2, 3, 4, 6}, rng, -3, 3);
  const Tensor k = testing::random_tensor({2, 3, 7, 6}, rng, -3, 3);
  const Tensor v = testing::random_tensor({2, 3, 7, 5}, rng);
  const Attention a = scaled_dot_attention(q, k, v);
  const auto w = a.weights.values();
  for (std::size_t r = 0; r < w.size() / 7; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < 7; ++j) {
      CHECK(w[r * 7 + j] >= 0.0);
      s += w[r * 7 + j];
    }
    CHECK(std::abs(s - 1.0) <= 1e-12);
  }
  const Tensor logits = scale(matmul(q, transpose_last2(k)), 1.0 / std::sqrt(6.0));
  const Tensor shifted = softmax_lastdim(add_scalar(logits, 123.0));
  CHECK(testing::max_abs_diff(shifted, softmax_lastdim(logits)) <= 1e-12);
}

TEST_CASE("permuting history steps permutes attention columns") {
  std::mt19937_64 rng(4);
  ParamRegistry params;
  const auto cf = CounterfactualReasoner::create(params, "cf", 3, 4, 2, 1, rng);
  const Tensor cfut = testing::random_tensor({5, 2, 3}, rng);
  const Tensor chist = testing::random_tensor({5, 4, 9}, rng);
  const Tensor hhist = testing::random_tensor({5, 4, 4}, rng);
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  auto permute = [&](const Tensor& t) {
    std::vector<Tensor> parts;
    for (std::size_t p : perm) parts.push_back(slice(t, 1, p, 1));
    return concat(parts, 1);
  };
  const auto a = cf.reason(cfut, chist, hhist);
  const auto b = cf.reason(cfut, permute(chist), permute(hhist));
  CHECK(testing::max_abs_diff(a.h_pred, b.h_pred) <= 1e-12);
  for (std::size_t n = 0; n < 5; ++n)
    for (std::size_t q = 0; q < 2; ++q)
      for (std::size_t j = 0; j < 4; ++j)
        CHECK(std::abs(b.attention.at({n, q, j}) - a.attention.at({n, q, perm[j]})) <= 1e-12);
}

TEST_CASE("decoder initialization") {
  std::mt19937_64 rng(5);
  ParamRegistry params;
  const auto cf = CounterfactualReasoner::create(params, "cf", 3, 4, 2, 1, rng);
  CHECK(testing::max_abs(cf.init_decoder(Tensor::zeros({5, 2, 4}))) == 0.0);
  CHECK(cf.init_decoder(testing::random_tensor({2, 5, 2, 4}, rng)).shape() == Shape{2, 5, 4});
  CHECK_THROWS_AS(cf.init_decoder(Tensor::zeros({5, 3, 4})), DimensionError);

  ParamRegistry p1;
  const auto single = CounterfactualReasoner::create(p1, "cf", 3, 4, 1, 1, rng);
  const Tensor h = testing::random_tensor({5, 1, 4}, rng);
  const Tensor expect = affine(reshape(h, {5, 4}), p1.get("cf.init.w"), p1.get("cf.init.b"));
  CHECK(testing::max_abs_diff(single.init_decoder(h), expect) == 0.0);
}

TEST_CASE("counterfactual reasoning gradients") {
  std::mt19937_64 rng(6);
  ParamRegistry params;
  const auto cf = CounterfactualReasoner::create(params, "cf", 3, 4, 2, 1, rng);
  const Tensor cfut = testing::random_tensor({3, 2, 3}, rng);
  const Tensor chist = testing::random_tensor({3, 4, 9}, rng);
  const Tensor hhist = testing::random_tensor({3, 4, 4}, rng);
  const Tensor w = testing::random_tensor({3, 4}, rng, 0, 1);
  const auto report =
      grad_check([&] { return sum_all(mul(cf.init_decoder(cf.reason(cfut, chist, hhist).h_pred), w)); }, params);
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("shape mismatches") {
  std::mt19937_64 rng(7);
  ParamRegistry params;
  const auto cf = CounterfactualReasoner::create(params, "cf", 3, 4, 2, 1, rng);
  CHECK_THROWS_AS(cf.reason(Tensor::zeros({3, 2, 2}), Tensor::zeros({3, 4, 9}), Tensor::zeros({3, 4, 4})),
                  DimensionError);
  CHECK_THROWS_AS(cf.reason(Tensor::zeros({3, 2, 3}), Tensor::zeros({3, 4, 9}), Tensor::zeros({3, 5, 4})),
                  DimensionError);
}
