#include "stnscm/input_gate.hpp"

#include "stnscm/error.hpp"

namespace stnscm {

InputGateMode parse_input_gate_mode(const std::string& name) {
  if (name == "glu") return InputGateMode::Glu;
  if (name == "fc") return InputGateMode::Fc;
  if (name == "none") return InputGateMode::None;
  throw ConfigError("unknown input_gate mode '" + name + "' (expected glu, fc or none)");
}

std::string to_string(InputGateMode mode) {
  switch (mode) {
    case InputGateMode::Glu: return "glu";
    case InputGateMode::Fc: return "fc";
    case InputGateMode::None: return "none";
  }
  return "glu";
}

Tensor glu(const Tensor& x_in, const Tensor& theta1, const Tensor& a, const Tensor& theta2, const Tensor& b) {
  const std::size_t width = x_in.shape().back();
  if (theta1.shape() != Shape{width, width} || theta2.shape() != Shape{width, width}) {
    throw DimensionError("glu: residual needs square maps of width " + std::to_string(width) + ", got " +
                         shape_str(theta1.shape()) + " and " + shape_str(theta2.shape()));
  }
  return add(x_in, mul(tanh(affine(x_in, theta1, a)), sigmoid(affine(x_in, theta2, b))));
}

InputGate InputGate::create(ParamRegistry& params, const std::string& prefix, InputGateMode mode, std::size_t c1,
                            std::size_t c2, std::size_t d, std::mt19937_64& rng) {
  InputGate g;
  g.mode_ = mode;
  g.c1_ = c1;
  g.c2_ = c2;
  g.d_ = d;
  const std::size_t in = c1 + c2;
  switch (mode) {
    case InputGateMode::Glu: {
      g.d_branch_ = (d + 2) / 3;
      g.w_week_ = params.add_glorot(prefix + ".week.w", in, g.d_branch_, rng);
      g.b_week_ = params.add_zeros(prefix + ".week.b", {g.d_branch_});
      g.w_day_ = params.add_glorot(prefix + ".day.w", in, g.d_branch_, rng);
      g.b_day_ = params.add_zeros(prefix + ".day.b", {g.d_branch_});
      g.w_hour_ = params.add_glorot(prefix + ".hour.w", in, g.d_branch_, rng);
      g.b_hour_ = params.add_zeros(prefix + ".hour.b", {g.d_branch_});
      if (3 * g.d_branch_ != d) {
        g.w_proj_ = params.add_glorot(prefix + ".proj.w", 3 * g.d_branch_, d, rng);
        g.b_proj_ = params.add_zeros(prefix + ".proj.b", {d});
      }
      g.theta1_ = params.add_glorot(prefix + ".theta1", d, d, rng);
      g.a_ = params.add_zeros(prefix + ".a", {d});
      g.theta2_ = params.add_glorot(prefix + ".theta2", d, d, rng);
      g.b_ = params.add_zeros(prefix + ".b", {d});
      break;
    }
    case InputGateMode::Fc:
      g.w_fc_ = params.add_glorot(prefix + ".fc.w", 3 * in, d, rng);
      g.b_fc_ = params.add_zeros(prefix + ".fc.b", {d});
      break;
    case InputGateMode::None:
      g.w_fc_ = params.add_glorot(prefix + ".flow.w", c1, d, rng);
      g.b_fc_ = params.add_zeros(prefix + ".flow.b", {d});
      break;
  }
  return g;
}

Tensor InputGate::fuse_branches(const Tensor& week, const Tensor& day, const Tensor& hour) const {
  if (mode_ != InputGateMode::Glu) throw ConfigError("fuse_branches is only defined for the glu input gate");
  const std::size_t in = c1_ + c2_;
  for (const Tensor* t : {&week, &day, &hour}) {
    if (t->shape().back() != in || t->shape() != hour.shape()) {
      throw DimensionError("input gate: branch shapes " + shape_str(week.shape()) + ", " + shape_str(day.shape()) +
                           ", " + shape_str(hour.shape()) + " must agree with width " + std::to_string(in));
    }
  }
  return concat_lastdim({affine(week, w_week_, b_week_), affine(day, w_day_, b_day_), affine(hour, w_hour_, b_hour_)});
}

Tensor InputGate::gate(const Tensor& x_in) const {
  const Tensor x = has_projection() ? affine(x_in, w_proj_, b_proj_) : x_in;
  return glu(x, theta1_, a_, theta2_, b_);
}

Tensor InputGate::forward(const Tensor& week, const Tensor& day, const Tensor& hour, Instrumentation* instr) const {
  switch (mode_) {
    case InputGateMode::Glu:
      if (instr) ++instr->glu_calls;
      return gate(fuse_branches(week, day, hour));
    case InputGateMode::Fc:
      if (instr) ++instr->fc_gate_calls;
      return affine(concat_lastdim({week, day, hour}), w_fc_, b_fc_);
    case InputGateMode::None: {
      if (instr) ++instr->flow_only_inputs;
      const std::size_t axis = hour.rank() - 1;
      return affine(slice(hour, axis, 0, c1_), w_fc_, b_fc_);
    }
  }
  return {};
}

}  // namespace stnscm
