#pragma once

#include <cstdint>
#include <deque>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "stnscm/tensor.hpp"

namespace stnscm {

// Ordered name -> leaf tensor registry. Iteration order is insertion order.
class ParamRegistry {
 public:
  using Entry = std::pair<std::string, Tensor>;

  // Registers a new trainable leaf; names must be unique.
  Tensor& add(const std::string& name, Tensor tensor);
  Tensor& add_zeros(const std::string& name, Shape shape);
  Tensor& add_constant(const std::string& name, Shape shape, double value);
  // Uniform(-b, b) with b = sqrt(6 / (fan_in + fan_out)).
  Tensor& add_glorot(const std::string& name, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);
  Tensor& add_uniform(const std::string& name, Shape shape, double bound, std::mt19937_64& rng);

  bool contains(const std::string& name) const;
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);

  std::size_t size() const { return entries_.size(); }
  std::size_t num_elements() const;
  const std::deque<Entry>& entries() const { return entries_; }
  std::deque<Entry>& entries() { return entries_; }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  void zero_grads();
  // Deep copy of all values (fresh leaves, grads zeroed).
  ParamRegistry clone() const;
  // Copies values from another registry with identical names and shapes.
  void assign_values(const ParamRegistry& other);

 private:
  std::deque<Entry> entries_;
};

}  // namespace stnscm
