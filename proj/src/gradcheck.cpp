#include "stnscm/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "stnscm/error.hpp"

namespace stnscm {

namespace {

double evaluate(const std::function<Tensor()>& f) {
  const Tensor y = f();
  if (y.numel() != 1) throw DimensionError("grad_check: function must be scalar, got " + shape_str(y.shape()));
  const double v = y.item();
  if (!std::isfinite(v)) throw NumericError("grad_check: function value is not finite");
  return v;
}

void require_finite(std::span<const double> values, const std::string& what) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite value in " + what);
  }
}

}  // namespace

double relative_error(double analytic, double numeric) {
  return std::fabs(analytic - numeric) / std::max(1e-8, std::fabs(analytic) + std::fabs(numeric));
}

GradCheckReport grad_check(const std::function<Tensor()>& f, ParamRegistry& params, const GradCheckOptions& options) {
  if (!(options.eps >= 1e-7 && options.eps <= 1e-4)) {
    throw ConfigError("grad_check: eps must lie in [1e-7, 1e-4]");
  }
  for (const auto& [name, t] : params) require_finite(t.values(), "parameter '" + name + "'");

  params.zero_grads();
  const Tensor y = f();
  if (y.numel() != 1) throw DimensionError("grad_check: function must be scalar, got " + shape_str(y.shape()));
  if (!std::isfinite(y.item())) throw NumericError("grad_check: function value is not finite");
  y.backward();

  std::vector<std::vector<double>> analytic;
  for (const auto& [name, t] : params) {
    require_finite(t.grad(), "gradient of '" + name + "'");
    analytic.emplace_back(t.grad().begin(), t.grad().end());
  }

  // (param index, element index) pairs to probe.
  std::vector<std::pair<std::size_t, std::size_t>> probes;
  const std::size_t total = params.num_elements();
  const std::size_t budget = options.max_elements == 0 ? total : std::max<std::size_t>(200, options.max_elements);
  if (budget >= total) {
    for (std::size_t p = 0; p < params.size(); ++p) {
      for (std::size_t i = 0; i < params.entries()[p].second.numel(); ++i) probes.emplace_back(p, i);
    }
  } else {
    std::mt19937_64 rng(options.seed);
    std::vector<std::pair<std::size_t, std::size_t>> pool;
    for (std::size_t p = 0; p < params.size(); ++p) {
      const std::size_t n = params.entries()[p].second.numel();
      if (n == 0) continue;
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      const std::size_t first = pick(rng);
      probes.emplace_back(p, first);
      for (std::size_t i = 0; i < n; ++i) {
        if (i != first) pool.emplace_back(p, i);
      }
    }
    std::shuffle(pool.begin(), pool.end(), rng);
    const std::size_t extra = budget > probes.size() ? budget - probes.size() : 0;
    probes.insert(probes.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(std::min(extra, pool.size())));
  }

  GradCheckReport report;
  for (const auto& [p, i] : probes) {
    auto& [name, t] = params.entries()[p];
    double& slot = t.mutable_values()[i];
    const double saved = slot;
    slot = saved + options.eps;
    const double plus = evaluate(f);
    slot = saved - options.eps;
    const double minus = evaluate(f);
    slot = saved;
    const double numeric = (plus - minus) / (2.0 * options.eps);
    const double err = relative_error(analytic[p][i], numeric);
    ++report.checked;
    if (err > report.max_rel_error || report.checked == 1) {
      report.max_rel_error = err;
      report.worst_param = name;
      report.worst_index = i;
      report.worst_analytic = analytic[p][i];
      report.worst_numeric = numeric;
    }
  }
  return report;
}

}  // namespace stnscm
