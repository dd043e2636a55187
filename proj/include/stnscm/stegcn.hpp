#pragma once

#include <random>
#include <string>
#include <vector>

#include "stnscm/instrument.hpp"
#include "stnscm/params.hpp"

namespace stnscm {

struct GraphTerms {
  bool geo = true;
  bool trans = true;
  bool dyn = true;
};

// Row-normalized propagation matrices for both diffusion directions.
// Static graphs are [N, N]; dynamic graphs may carry batch dims [..., N, N].
// Disabled terms may be left undefined.
struct PropagationGraphs {
  Tensor geo_fwd, geo_bwd;
  Tensor trans_fwd, trans_bwd;
  Tensor dyn_fwd, dyn_bwd;
};

// Throws ValidationError if a row with positive degree sums above 1 + 1e-6.
void validate_propagation_matrix(const Tensor& g, const std::string& name);

// Parameters of one diffusion direction.
struct StegcnDirection {
  Tensor alpha_self, alpha_geo, alpha_trans, alpha_dyn;
  std::vector<Tensor> w;  // depth + 1 maps [in, out]
  std::vector<Tensor> b;  // depth + 1 biases [out]
};

// Multi-graph evolutionary convolution:
//   X(k) = a0 X(k-1) + a1 G_geo X(k-1) + a2 G_trans X(k-1) + a3 G_dyn X(k-1)
//   out  = relu(sum_k X(k) W(k) + b(k))
// evaluated once with the forward matrices and once with the transposed
// ones, each with its own parameters, and summed.
class Stegcn {
 public:
  static Stegcn create(ParamRegistry& params, const std::string& prefix, std::size_t in_dim, std::size_t out_dim,
                       std::size_t depth, const GraphTerms& terms, std::mt19937_64& rng);

  std::size_t depth() const { return depth_; }
  const GraphTerms& terms() const { return terms_; }
  const StegcnDirection& forward_params() const { return fwd_; }
  const StegcnDirection& backward_params() const { return bwd_; }

  Tensor propagate_direction(const StegcnDirection& p, const Tensor& x0, const Tensor& geo, const Tensor& trans,
                             const Tensor& dyn, Instrumentation* instr = nullptr) const;
  Tensor forward(const Tensor& x0, const PropagationGraphs& graphs, Instrumentation* instr = nullptr) const;

 private:
  std::size_t in_ = 0, out_ = 0, depth_ = 0;
  GraphTerms terms_;
  StegcnDirection fwd_, bwd_;
};

}  // namespace stnscm
