#include "stnscm/counterfactual.hpp"

#include <cmath>

#include "stnscm/error.hpp"

namespace stnscm {

Attention scaled_dot_attention(const Tensor& queries, const Tensor& keys, const Tensor& values) {
  const std::size_t d = queries.shape().back();
  if (keys.shape().back() != d) {
    throw DimensionError("attention: query width " + shape_str(queries.shape()) + " vs key " + shape_str(keys.shape()));
  }
  if (keys.shape()[keys.rank() - 2] != values.shape()[values.rank() - 2]) {
    throw DimensionError("attention: keys " + shape_str(keys.shape()) + " and values " + shape_str(values.shape()) +
                         " differ in length");
  }
  Attention a;
  a.weights = softmax_lastdim(scale(matmul(queries, transpose_last2(keys)), 1.0 / std::sqrt(static_cast<double>(d))));
  a.output = matmul(a.weights, values);
  return a;
}

CounterfactualReasoner CounterfactualReasoner::create(ParamRegistry& params, const std::string& prefix,
                                                      std::size_t c2, std::size_t d, std::size_t Q,
                                                      std::size_t layers, std::mt19937_64& rng) {
  CounterfactualReasoner r;
  r.c2_ = c2;
  r.d_ = d;
  r.q_ = Q;
  r.w_fut_ = params.add_glorot(prefix + ".fut.w", c2, d, rng);
  r.b_fut_ = params.add_zeros(prefix + ".fut.b", {d});
  // No key-side bias: it shifts every score of a query row equally and
  // cancels in the softmax.
  r.w_hist_ = params.add_glorot(prefix + ".hist.w", 3 * c2, d, rng);
  r.wq_ = params.add_glorot(prefix + ".wq", d, d, rng);
  r.wk_ = params.add_glorot(prefix + ".wk", d, d, rng);
  r.wv_ = params.add_glorot(prefix + ".wv", d, d, rng);
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string tag = layers == 1 ? "" : std::to_string(l);
    r.w_init_.push_back(params.add_glorot(prefix + ".init" + tag + ".w", Q * d, d, rng));
    r.b_init_.push_back(params.add_zeros(prefix + ".init" + tag + ".b", {d}));
  }
  return r;
}

CounterfactualReasoner::Result CounterfactualReasoner::reason(const Tensor& c_future, const Tensor& c_hist,
                                                              const Tensor& h_hist, Instrumentation* instr) const {
  if (c_future.shape().back() != c2_ || c_hist.shape().back() != 3 * c2_ || h_hist.shape().back() != d_) {
    throw DimensionError("counterfactual: shapes " + shape_str(c_future.shape()) + ", " + shape_str(c_hist.shape()) +
                         ", " + shape_str(h_hist.shape()) + " do not match c2=" + std::to_string(c2_) +
                         " d=" + std::to_string(d_));
  }
  if (c_hist.shape()[c_hist.rank() - 2] != h_hist.shape()[h_hist.rank() - 2]) {
    throw DimensionError("counterfactual: history lengths differ");
  }
  if (instr) ++instr->counterfactual_calls;
  const Tensor q = matmul(affine(c_future, w_fut_, b_fut_), wq_);
  const Tensor k = matmul(matmul(c_hist, w_hist_), wk_);
  const Tensor v = matmul(h_hist, wv_);
  Attention a = scaled_dot_attention(q, k, v);
  return {a.output, a.weights};
}

Tensor CounterfactualReasoner::init_decoder(const Tensor& h_pred, std::size_t layer) const {
  if (h_pred.rank() < 2 || h_pred.shape().back() != d_ || h_pred.shape()[h_pred.rank() - 2] != q_) {
    throw DimensionError("init_decoder: expected [..., Q=" + std::to_string(q_) + ", d=" + std::to_string(d_) +
                         "], got " + shape_str(h_pred.shape()));
  }
  Shape flat(h_pred.shape().begin(), h_pred.shape().end() - 2);
  flat.push_back(q_ * d_);
  return affine(reshape(h_pred, flat), w_init_.at(layer), b_init_.at(layer));
}

}  // namespace stnscm
