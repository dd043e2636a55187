#include "stnscm/dyn_causal.hpp"

#include <cmath>

#include "stnscm/error.hpp"

namespace stnscm {

namespace {

Tensor with_trailing_one(const Tensor& x) {
  Shape s = x.shape();
  s.push_back(1);
  return reshape(x, std::move(s));
}

Tensor drop_trailing_one(const Tensor& x) {
  Shape s = x.shape();
  s.pop_back();
  return reshape(x, std::move(s));
}

}  // namespace

std::size_t se_bottleneck(std::size_t num_nodes) { return std::max<std::size_t>(1, num_nodes / 16); }

Tensor squeeze_nodes(const Tensor& fused) { return mean(fused, fused.rank() - 1); }

Tensor excite_nodes(const Tensor& z_s, const Tensor& theta_ex1, const Tensor& theta_ex2) {
  const std::size_t n = z_s.shape().back();
  if (theta_ex1.rank() != 2 || theta_ex1.shape()[1] != n || theta_ex2.rank() != 2 || theta_ex2.shape()[0] != n ||
      theta_ex2.shape()[1] != theta_ex1.shape()[0]) {
    throw DimensionError("excite: node count " + std::to_string(n) + " inconsistent with " +
                         shape_str(theta_ex1.shape()) + " and " + shape_str(theta_ex2.shape()));
  }
  const Tensor hidden = relu(matmul(theta_ex1, with_trailing_one(z_s)));
  return drop_trailing_one(sigmoid(matmul(theta_ex2, hidden)));
}

Tensor causal_graph(const Tensor& fused, const Tensor& z_e, bool leaky, double slope) {
  const std::size_t d = fused.shape().back();
  Tensor dx = fused;
  if (z_e.defined()) {
    if (z_e.shape().back() != fused.shape()[fused.rank() - 2]) {
      throw DimensionError("causal_graph: z_e " + shape_str(z_e.shape()) + " does not match " +
                           shape_str(fused.shape()));
    }
    dx = mul(fused, with_trailing_one(z_e));
  }
  const Tensor sim = tanh(scale(matmul(dx, transpose_last2(dx)), 1.0 / std::sqrt(static_cast<double>(d))));
  return leaky ? leaky_relu(sim, slope) : relu(sim);
}

DynCausalGenerator DynCausalGenerator::create(ParamRegistry& params, const std::string& prefix, std::size_t num_nodes,
                                              std::size_t d, const DynCausalOptions& options, std::mt19937_64& rng,
                                              Instrumentation* instr) {
  if (!options.use_h && !options.use_x) throw ConfigError("dynamic generator needs X' or H as input");
  DynCausalGenerator g;
  g.options_ = options;
  g.n_ = num_nodes;
  g.d_ = d;
  g.bottleneck_ = se_bottleneck(num_nodes);
  const std::size_t in = (options.use_x ? d : 0) + (options.use_h ? d : 0);
  g.theta_dyn_ = params.add_glorot(prefix + ".theta_dyn", in, d, rng);
  g.b_dyn_ = params.add_zeros(prefix + ".b_dyn", {d});
  if (options.use_se) {
    g.theta_ex1_ = params.add_glorot(prefix + ".theta_ex1", g.bottleneck_, num_nodes, rng);
    g.theta_ex2_ = params.add_glorot(prefix + ".theta_ex2", num_nodes, g.bottleneck_, rng);
  }
  if (instr) ++instr->dyn_generators_built;
  return g;
}

Tensor DynCausalGenerator::fuse(const Tensor& x_gated, const Tensor& h_prev) const {
  if (options_.use_x && options_.use_h) {
    if (x_gated.shape() != h_prev.shape()) {
      throw DimensionError("dynamic generator: X' " + shape_str(x_gated.shape()) + " and H " +
                           shape_str(h_prev.shape()) + " differ");
    }
    return affine(concat_lastdim({x_gated, h_prev}), theta_dyn_, b_dyn_);
  }
  return affine(options_.use_x ? x_gated : h_prev, theta_dyn_, b_dyn_);
}

Tensor DynCausalGenerator::generate(const Tensor& x_gated, const Tensor& h_prev, Instrumentation* instr) const {
  if (instr) {
    ++instr->dyn_graph_calls;
    if (options_.use_x) ++instr->generator_used_x;
    if (options_.use_h) ++instr->generator_used_h;
  }
  const Tensor fused = fuse(x_gated, h_prev);
  Tensor z_e;
  if (options_.use_se) {
    if (instr) ++instr->se_calls;
    z_e = excite(squeeze(fused));
  }
  return causal_graph(fused, z_e, options_.leaky, options_.leaky_slope);
}

}  // namespace stnscm
