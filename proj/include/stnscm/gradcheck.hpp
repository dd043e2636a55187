#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "stnscm/params.hpp"

namespace stnscm {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
};

struct GradCheckOptions {
  double eps = 1e-5;
  // 0 checks every element; otherwise a seeded subsample of this many
  // elements (at least one per parameter, never fewer than 200).
  std::size_t max_elements = 0;
  std::uint64_t seed = 7;
};

// |g_a - g_fd| / max(1e-8, |g_a| + |g_fd|)
double relative_error(double analytic, double numeric);

// Central-difference check of every selected parameter element of the
// scalar function `f` against the reverse-mode gradient.
GradCheckReport grad_check(const std::function<Tensor()>& f, ParamRegistry& params,
                           const GradCheckOptions& options = {});

}  // namespace stnscm
