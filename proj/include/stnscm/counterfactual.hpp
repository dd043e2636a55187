#pragma once

#include <random>
#include <string>
#include <vector>

#include "stnscm/instrument.hpp"
#include "stnscm/params.hpp"

namespace stnscm {

struct Attention {
  Tensor output;   // [..., Q, d]
  Tensor weights;  // [..., Q, P], rows sum to 1
};

// softmax(Q K^T / sqrt(d)) V
Attention scaled_dot_attention(const Tensor& queries, const Tensor& keys, const Tensor& values);

// Attention from embedded future contexts (queries) to embedded historical
// contexts (keys) over the encoder states (values). The result initializes
// the decoder through one affine map over the flattened horizon.
class CounterfactualReasoner {
 public:
  static CounterfactualReasoner create(ParamRegistry& params, const std::string& prefix, std::size_t c2,
                                       std::size_t d, std::size_t Q, std::size_t layers, std::mt19937_64& rng);

  struct Result {
    Tensor h_pred;     // [..., N, Q, d]
    Tensor attention;  // [..., N, Q, P]
  };

  // c_future [..., N, Q, c2]; c_hist [..., N, P, 3*c2]; h_hist [..., N, P, d].
  Result reason(const Tensor& c_future, const Tensor& c_hist, const Tensor& h_hist,
                Instrumentation* instr = nullptr) const;
  // [..., N, Q, d] -> [..., N, d] for decoder layer `layer`.
  Tensor init_decoder(const Tensor& h_pred, std::size_t layer = 0) const;

 private:
  std::size_t c2_ = 0, d_ = 0, q_ = 0;
  Tensor w_fut_, b_fut_, w_hist_;
  Tensor wq_, wk_, wv_;
  std::vector<Tensor> w_init_, b_init_;
};

}  // namespace stnscm
