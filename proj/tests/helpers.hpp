#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "stnscm/tensor.hpp"

namespace testing {

inline stnscm::Tensor random_tensor(stnscm::Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                                    bool requires_grad = false) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(stnscm::numel_of(shape));
  for (double& x : v) x = dist(rng);
  return stnscm::Tensor::from(std::move(shape), std::move(v), requires_grad);
}

inline double max_abs_diff(const stnscm::Tensor& a, const stnscm::Tensor& b) {
  double m = 0.0;
  auto av = a.values();
  auto bv = b.values();
  if (av.size() != bv.size()) return INFINITY;
  for (std::size_t i = 0; i < av.size(); ++i) m = std::max(m, std::abs(av[i] - bv[i]));
  return m;
}

inline double max_abs(const stnscm::Tensor& a) {
  double m = 0.0;
  for (double v : a.values()) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace testing
