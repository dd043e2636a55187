#include "stnscm/stegcn.hpp"

#include <cmath>

#include "stnscm/error.hpp"

namespace stnscm {

namespace {

StegcnDirection make_direction(ParamRegistry& params, const std::string& prefix, std::size_t in, std::size_t out,
                               std::size_t depth, const GraphTerms& terms, std::mt19937_64& rng) {
  StegcnDirection d;
  d.alpha_self = params.add_constant(prefix + ".alpha0", {1}, 0.5);
  if (terms.geo) d.alpha_geo = params.add_constant(prefix + ".alpha1", {1}, 0.5);
  if (terms.trans) d.alpha_trans = params.add_constant(prefix + ".alpha2", {1}, 0.5);
  if (terms.dyn) d.alpha_dyn = params.add_constant(prefix + ".alpha3", {1}, 0.5);
  // Glorot bound over the effective fan-in: both directions and all hops
  // feed the same output units.
  const double bound = std::sqrt(6.0 / static_cast<double>(2 * (depth + 1) * in + out));
  for (std::size_t k = 0; k <= depth; ++k) {
    d.w.push_back(params.add_uniform(prefix + ".w" + std::to_string(k), {in, out}, bound, rng));
    d.b.push_back(params.add_zeros(prefix + ".b" + std::to_string(k), {out}));
  }
  return d;
}

}  // namespace

void validate_propagation_matrix(const Tensor& g, const std::string& name) {
  if (g.rank() < 2 || g.shape()[g.rank() - 1] != g.shape()[g.rank() - 2]) {
    throw DimensionError("graph '" + name + "' is not square: " + shape_str(g.shape()));
  }
  const std::size_t n = g.shape().back();
  const auto v = g.values();
  for (std::size_t r = 0; r < v.size() / n; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += v[r * n + j];
    if (s > 1.0 + 1e-6) {
      throw ValidationError("graph '" + name + "' is not row-normalized (row " + std::to_string(r % n) +
                            " sums to " + std::to_string(s) + ")");
    }
  }
}

Stegcn Stegcn::create(ParamRegistry& params, const std::string& prefix, std::size_t in_dim, std::size_t out_dim,
                      std::size_t depth, const GraphTerms& terms, std::mt19937_64& rng) {
  if (depth == 0) throw ConfigError("propagation depth must be >= 1");
  Stegcn s;
  s.in_ = in_dim;
  s.out_ = out_dim;
  s.depth_ = depth;
  s.terms_ = terms;
  s.fwd_ = make_direction(params, prefix + ".fwd", in_dim, out_dim, depth, terms, rng);
  s.bwd_ = make_direction(params, prefix + ".bwd", in_dim, out_dim, depth, terms, rng);
  return s;
}

Tensor Stegcn::propagate_direction(const StegcnDirection& p, const Tensor& x0, const Tensor& geo, const Tensor& trans,
                                   const Tensor& dyn, Instrumentation* instr) const {
  if (x0.shape().back() != in_) {
    throw DimensionError("stegcn: input width " + std::to_string(x0.shape().back()) + " != " + std::to_string(in_));
  }
  // One combined operator per hop: alpha0 I + alpha1 A_geo + alpha2 A_trans + alpha3 A_dyn.
  const std::size_t n = x0.shape()[x0.rank() - 2];
  std::vector<double> eye(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) eye[i * n + i] = 1.0;
  Tensor op = mul(Tensor::from({n, n}, std::move(eye)), p.alpha_self);
  if (terms_.geo) op = add(op, mul(geo, p.alpha_geo));
  if (terms_.trans) op = add(op, mul(trans, p.alpha_trans));
  if (terms_.dyn) op = add(op, mul(dyn, p.alpha_dyn));
  std::vector<Tensor> hops{x0};
  for (std::size_t k = 1; k <= depth_; ++k) {
    if (instr) {
      if (terms_.geo) ++instr->geo_terms;
      if (terms_.trans) ++instr->trans_terms;
      if (terms_.dyn) ++instr->dyn_terms;
    }
    hops.push_back(matmul(op, hops.back()));
  }
  // sum_k X(k) W(k) as one product over the stacked hops.
  Tensor acc = matmul(concat_lastdim(hops), concat(p.w, 0));
  for (const auto& b : p.b) acc = add(acc, b);
  return relu(acc);
}

Tensor Stegcn::forward(const Tensor& x0, const PropagationGraphs& g, Instrumentation* instr) const {
  if (terms_.geo) {
    validate_propagation_matrix(g.geo_fwd, "geo");
    validate_propagation_matrix(g.geo_bwd, "geo^T");
  }
  if (terms_.trans) {
    validate_propagation_matrix(g.trans_fwd, "trans");
    validate_propagation_matrix(g.trans_bwd, "trans^T");
  }
  if (terms_.dyn) {
    validate_propagation_matrix(g.dyn_fwd, "dyn");
    validate_propagation_matrix(g.dyn_bwd, "dyn^T");
  }
  return add(propagate_direction(fwd_, x0, g.geo_fwd, g.trans_fwd, g.dyn_fwd, instr),
             propagate_direction(bwd_, x0, g.geo_bwd, g.trans_bwd, g.dyn_bwd, instr));
}

}  // namespace stnscm
