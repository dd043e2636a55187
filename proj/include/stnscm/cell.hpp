#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "stnscm/dyn_causal.hpp"
#include "stnscm/graphs.hpp"
#include "stnscm/stegcn.hpp"

namespace stnscm {

struct CellOptions {
  std::size_t num_nodes = 0;
  std::size_t d = 32;
  std::size_t depth = 2;
  GraphTerms terms;
  DynCausalOptions dyn;
};

struct CellStep {
  Tensor h;
  Tensor r, z, h_tilde;
  // Raw dynamic graph of this step (undefined when the dynamic term is off).
  Tensor dyn_graph;
};

// Gated recurrent unit whose affine maps are multi-graph convolutions:
//   r  = sigmoid(conv_r(X' || H) + b_r)
//   z  = sigmoid(conv_z(X' || H) + b_z)
//   h~ = tanh(conv_h(X' || r*H) + b_h)
//   H' = z*H + (1-z)*h~
class StnscuCell {
 public:
  static StnscuCell create(ParamRegistry& params, const std::string& prefix, const CellOptions& options,
                           std::mt19937_64& rng, Instrumentation* instr = nullptr);

  const CellOptions& options() const { return options_; }
  bool has_generator() const { return generator_.has_value(); }
  const DynCausalGenerator& generator() const { return *generator_; }
  const Stegcn& conv_r() const { return conv_r_; }
  const Stegcn& conv_z() const { return conv_z_; }
  const Stegcn& conv_h() const { return conv_h_; }

  // Propagation graphs for one step: static ones from `graphs`, the dynamic
  // one regenerated from (X', H_prev).
  PropagationGraphs step_graphs(const GraphSet& graphs, const Tensor& x_gated, const Tensor& h_prev,
                                Tensor* raw_dyn = nullptr, Instrumentation* instr = nullptr) const;
  CellStep step(const Tensor& x_gated, const Tensor& h_prev, const GraphSet& graphs,
                Instrumentation* instr = nullptr) const;
  // Same as step() with caller-provided propagation graphs.
  CellStep step_with(const Tensor& x_gated, const Tensor& h_prev, const PropagationGraphs& graphs,
                     Instrumentation* instr = nullptr) const;

 private:
  CellOptions options_;
  Stegcn conv_r_, conv_z_, conv_h_;
  Tensor b_r_, b_z_, b_h_;
  std::optional<DynCausalGenerator> generator_;
};

// Runs the cell over X'_1..X'_P from H_0 = h0 (zeros when undefined) and
// returns H_1..H_P.
std::vector<Tensor> encode(const StnscuCell& cell, const std::vector<Tensor>& inputs, const GraphSet& graphs,
                           const Tensor& h0 = {}, Instrumentation* instr = nullptr);

}  // namespace stnscm
