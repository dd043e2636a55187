#include "stnscm/params.hpp"

#include <algorithm>
#include <cmath>

#include "stnscm/error.hpp"

namespace stnscm {

Tensor& ParamRegistry::add(const std::string& name, Tensor tensor) {
  if (contains(name)) throw ValidationError("duplicate parameter name '" + name + "'");
  if (!tensor.requires_grad()) tensor = Tensor::from(tensor.shape(), {tensor.values().begin(), tensor.values().end()}, true);
  entries_.emplace_back(name, std::move(tensor));
  return entries_.back().second;
}

Tensor& ParamRegistry::add_zeros(const std::string& name, Shape shape) {
  return add(name, Tensor::zeros(std::move(shape), true));
}

Tensor& ParamRegistry::add_constant(const std::string& name, Shape shape, double value) {
  return add(name, Tensor::full(std::move(shape), value, true));
}

Tensor& ParamRegistry::add_glorot(const std::string& name, std::size_t fan_in, std::size_t fan_out,
                                  std::mt19937_64& rng) {
  return add_uniform(name, {fan_in, fan_out}, std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)), rng);
}

Tensor& ParamRegistry::add_uniform(const std::string& name, Shape shape, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> values(numel_of(shape));
  for (double& v : values) v = dist(rng);
  return add(name, Tensor::from(std::move(shape), std::move(values), true));
}

bool ParamRegistry::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.first == name; });
}

const Tensor& ParamRegistry::get(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.first == name) return e.second;
  }
  throw ValidationError("unknown parameter '" + name + "'");
}

Tensor& ParamRegistry::get(const std::string& name) {
  return const_cast<Tensor&>(static_cast<const ParamRegistry&>(*this).get(name));
}

std::size_t ParamRegistry::num_elements() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.numel();
  return n;
}

void ParamRegistry::zero_grads() {
  for (auto& e : entries_) e.second.zero_grad();
}

ParamRegistry ParamRegistry::clone() const {
  ParamRegistry copy;
  for (const auto& [name, t] : entries_) {
    copy.add(name, Tensor::from(t.shape(), {t.values().begin(), t.values().end()}, true));
  }
  return copy;
}

void ParamRegistry::assign_values(const ParamRegistry& other) {
  if (other.size() != size()) throw ValidationError("parameter registries differ in size");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto& [name, t] = entries_[i];
    const auto& [oname, ot] = other.entries_[i];
    if (name != oname || t.shape() != ot.shape()) {
      throw ValidationError("parameter mismatch: '" + name + "' " + shape_str(t.shape()) + " vs '" + oname + "' " +
                            shape_str(ot.shape()));
    }
    std::copy(ot.values().begin(), ot.values().end(), t.mutable_values().begin());
  }
}

}  // namespace stnscm
