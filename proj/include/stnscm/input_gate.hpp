#pragma once

#include <random>
#include <string>

#include "stnscm/instrument.hpp"
#include "stnscm/params.hpp"

namespace stnscm {

enum class InputGateMode { Glu, Fc, None };
InputGateMode parse_input_gate_mode(const std::string& name);
std::string to_string(InputGateMode mode);

// x + tanh(x W1 + a) * sigmoid(x W2 + b)
Tensor glu(const Tensor& x_in, const Tensor& theta1, const Tensor& a, const Tensor& theta2, const Tensor& b);

// Fuses the week/day/hour slices (flow || context) of one step into the
// context-conditioned features X' of width d.
//
// Glu:  per-branch affine maps, concatenation, optional projection to d,
//       then the gated residual unit.
// Fc:   one affine map over the concatenated raw branches.
// None: affine map of the hour-branch flow only.
class InputGate {
 public:
  static InputGate create(ParamRegistry& params, const std::string& prefix, InputGateMode mode, std::size_t c1,
                          std::size_t c2, std::size_t d, std::mt19937_64& rng);

  InputGateMode mode() const { return mode_; }
  std::size_t branch_width() const { return d_branch_; }
  std::size_t fused_width() const { return 3 * d_branch_; }
  bool has_projection() const { return w_proj_.defined(); }

  // Each branch is [..., N, c1 + c2]; result [..., N, 3 * d_branch].
  Tensor fuse_branches(const Tensor& week, const Tensor& day, const Tensor& hour) const;
  // [..., N, d_in] -> [..., N, d] (projection first when d_in != d).
  Tensor gate(const Tensor& x_in) const;
  Tensor forward(const Tensor& week, const Tensor& day, const Tensor& hour, Instrumentation* instr = nullptr) const;

 private:
  InputGateMode mode_ = InputGateMode::Glu;
  std::size_t c1_ = 0, c2_ = 0, d_ = 0, d_branch_ = 0;
  Tensor w_week_, b_week_, w_day_, b_day_, w_hour_, b_hour_;
  Tensor w_proj_, b_proj_;
  Tensor theta1_, a_, theta2_, b_;
  Tensor w_fc_, b_fc_;
};

}  // namespace stnscm
