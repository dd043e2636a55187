#include "stnscm/cell.hpp"

#include <cmath>

#include "stnscm/error.hpp"

namespace stnscm {

namespace {

void require_finite(const Tensor& t, const char* gate) {
  for (double v : t.values()) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite value in recurrent cell gate '") + gate + "'");
  }
}

}  // namespace

StnscuCell StnscuCell::create(ParamRegistry& params, const std::string& prefix, const CellOptions& options,
                              std::mt19937_64& rng, Instrumentation* instr) {
  if (!options.terms.geo && !options.terms.trans && !options.terms.dyn) {
    throw ConfigError("at least one graph must be enabled");
  }
  StnscuCell c;
  c.options_ = options;
  const std::size_t d = options.d;
  if (options.terms.dyn) {
    c.generator_ = DynCausalGenerator::create(params, prefix + ".dyn", options.num_nodes, d, options.dyn, rng, instr);
  }
  c.conv_r_ = Stegcn::create(params, prefix + ".conv_r", 2 * d, d, options.depth, options.terms, rng);
  c.conv_z_ = Stegcn::create(params, prefix + ".conv_z", 2 * d, d, options.depth, options.terms, rng);
  c.conv_h_ = Stegcn::create(params, prefix + ".conv_h", 2 * d, d, options.depth, options.terms, rng);
  c.b_r_ = params.add_zeros(prefix + ".b_r", {d});
  c.b_z_ = params.add_zeros(prefix + ".b_z", {d});
  c.b_h_ = params.add_zeros(prefix + ".b_h", {d});
  return c;
}

PropagationGraphs StnscuCell::step_graphs(const GraphSet& graphs, const Tensor& x_gated, const Tensor& h_prev,
                                          Tensor* raw_dyn, Instrumentation* instr) const {
  PropagationGraphs g;
  if (options_.terms.geo) {
    g.geo_fwd = graphs.geo_fwd;
    g.geo_bwd = graphs.geo_bwd;
  }
  if (options_.terms.trans) {
    g.trans_fwd = graphs.trans_fwd;
    g.trans_bwd = graphs.trans_bwd;
  }
  if (options_.terms.dyn) {
    const Tensor a = generator_->generate(x_gated, h_prev, instr);
    g.dyn_fwd = row_normalize(a);
    g.dyn_bwd = row_normalize(transpose_last2(a));
    if (raw_dyn) *raw_dyn = a;
  }
  return g;
}

CellStep StnscuCell::step(const Tensor& x_gated, const Tensor& h_prev, const GraphSet& graphs,
                          Instrumentation* instr) const {
  Tensor raw;
  const PropagationGraphs g = step_graphs(graphs, x_gated, h_prev, &raw, instr);
  CellStep s = step_with(x_gated, h_prev, g, instr);
  s.dyn_graph = raw;
  return s;
}

CellStep StnscuCell::step_with(const Tensor& x_gated, const Tensor& h_prev, const PropagationGraphs& g,
                               Instrumentation* instr) const {
  if (x_gated.shape() != h_prev.shape() || x_gated.shape().back() != options_.d) {
    throw DimensionError("cell: X' " + shape_str(x_gated.shape()) + " and H " + shape_str(h_prev.shape()) +
                         " must both have width " + std::to_string(options_.d));
  }
  const Tensor xh = concat_lastdim({x_gated, h_prev});
  CellStep s;
  s.r = sigmoid(add(conv_r_.forward(xh, g, instr), b_r_));
  require_finite(s.r, "r");
  s.z = sigmoid(add(conv_z_.forward(xh, g, instr), b_z_));
  require_finite(s.z, "z");
  s.h_tilde = tanh(add(conv_h_.forward(concat_lastdim({x_gated, mul(s.r, h_prev)}), g, instr), b_h_));
  require_finite(s.h_tilde, "h_tilde");
  s.h = add(mul(s.z, h_prev), mul(one_minus(s.z), s.h_tilde));
  require_finite(s.h, "state");
  return s;
}

std::vector<Tensor> encode(const StnscuCell& cell, const std::vector<Tensor>& inputs, const GraphSet& graphs,
                           const Tensor& h0, Instrumentation* instr) {
  if (inputs.empty()) throw ConfigError("encode needs at least one step");
  Tensor h = h0.defined() ? h0 : Tensor::zeros(inputs.front().shape());
  std::vector<Tensor> states;
  states.reserve(inputs.size());
  for (const auto& x : inputs) {
    h = cell.step(x, h, graphs, instr).h;
    states.push_back(h);
  }
  return states;
}

}  // namespace stnscm
