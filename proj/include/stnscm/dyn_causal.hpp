#pragma once

#include <random>
#include <string>

#include "stnscm/instrument.hpp"
#include "stnscm/params.hpp"

namespace stnscm {

struct DynCausalOptions {
  bool use_se = true;
  bool use_h = true;
  bool use_x = true;
  bool leaky = false;
  double leaky_slope = 0.01;
};

// max(1, floor(N / 16))
std::size_t se_bottleneck(std::size_t num_nodes);

// z_s[i] = mean_c I[i, c]; [..., N, d] -> [..., N]
Tensor squeeze_nodes(const Tensor& fused);
// sigmoid(W2 relu(W1 z_s)); W1: [b, N], W2: [N, b]
Tensor excite_nodes(const Tensor& z_s, const Tensor& theta_ex1, const Tensor& theta_ex2);
// relu(tanh(DX DX^T / sqrt(d))) with DX = I * z_e (z_e broadcast over channels).
// An undefined z_e skips the scaling.
Tensor causal_graph(const Tensor& fused, const Tensor& z_e, bool leaky = false, double slope = 0.01);

// Per-step dynamic graph from the gated features X' and previous state H.
class DynCausalGenerator {
 public:
  static DynCausalGenerator create(ParamRegistry& params, const std::string& prefix, std::size_t num_nodes,
                                   std::size_t d, const DynCausalOptions& options, std::mt19937_64& rng,
                                   Instrumentation* instr = nullptr);

  const DynCausalOptions& options() const { return options_; }
  std::size_t bottleneck() const { return bottleneck_; }

  // I = (X' || H) Theta_dyn + b_dyn, with either input dropped per options.
  Tensor fuse(const Tensor& x_gated, const Tensor& h_prev) const;
  Tensor squeeze(const Tensor& fused) const { return squeeze_nodes(fused); }
  Tensor excite(const Tensor& z_s) const { return excite_nodes(z_s, theta_ex1_, theta_ex2_); }
  // Raw (unnormalized) A_dyn, [..., N, N].
  Tensor generate(const Tensor& x_gated, const Tensor& h_prev, Instrumentation* instr = nullptr) const;

 private:
  DynCausalOptions options_;
  std::size_t n_ = 0, d_ = 0, bottleneck_ = 1;
  Tensor theta_dyn_, b_dyn_, theta_ex1_, theta_ex2_;
};

}  // namespace stnscm
