#include "stnscm/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "stnscm/error.hpp"

namespace stnscm {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> parents,
                   std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  for (const auto& p : parents) {
    if (p.requires_grad()) node->requires_grad = true;
  }
  if (node->requires_grad) {
    node->grad.assign(node->value.size(), 0.0);
    node->parents.reserve(parents.size());
    for (const auto& p : parents) node->parents.push_back(p.node());
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor::wrap(std::move(node));
}

struct Broadcast {
  Shape out;
  std::vector<std::size_t> stride_a;
  std::vector<std::size_t> stride_b;
  bool same = false;
};

std::vector<std::size_t> aligned_strides(const Shape& shape, const Shape& out) {
  const std::size_t rank = out.size();
  std::vector<std::size_t> strides(rank, 0);
  std::size_t running = 1;
  for (std::size_t j = shape.size(); j-- > 0;) {
    const std::size_t i = j + (rank - shape.size());
    strides[i] = (shape[j] == 1 && out[i] != 1) ? 0 : running;
    running *= shape[j];
  }
  return strides;
}

Broadcast broadcast(const Shape& a, const Shape& b, const char* op) {
  Broadcast bc;
  if (a == b) {
    bc.out = a;
    bc.same = true;
    return bc;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  bc.out.assign(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw DimensionError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                           " are not broadcastable");
    }
    bc.out[i] = std::max(da, db);
  }
  bc.stride_a = aligned_strides(a, bc.out);
  bc.stride_b = aligned_strides(b, bc.out);
  return bc;
}

template <class F>
void for_each_broadcast(const Broadcast& bc, F&& f) {
  const std::size_t n = numel_of(bc.out);
  if (bc.same) {
    for (std::size_t o = 0; o < n; ++o) f(o, o, o);
    return;
  }
  const std::size_t rank = bc.out.size();
  if (rank == 0 || n == 0) {
    if (n) f(0, 0, 0);
    return;
  }
  // Tight loop over the last axis, odometer over the rest.
  const std::size_t inner = bc.out.back();
  const std::size_t sa = bc.stride_a.back(), sb = bc.stride_b.back();
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0;
  std::size_t ib = 0;
  for (std::size_t o = 0; o < n; o += inner) {
    for (std::size_t i = 0; i < inner; ++i) f(o + i, ia + i * sa, ib + i * sb);
    for (std::size_t d = rank - 1; d-- > 0;) {
      ++idx[d];
      ia += bc.stride_a[d];
      ib += bc.stride_b[d];
      if (idx[d] < bc.out[d]) break;
      ia -= bc.stride_a[d] * bc.out[d];
      ib -= bc.stride_b[d] * bc.out[d];
      idx[d] = 0;
    }
  }
}

template <class Fwd, class Dfn>
Tensor unary(const Tensor& x, Fwd fwd, Dfn dfn) {
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  return make_result(x.shape(), std::move(out), {x}, [dfn](Node& self) {
    Node& in = *self.parents[0];
    if (!in.requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      in.grad[i] += self.grad[i] * dfn(in.value[i], self.value[i]);
    }
  });
}

// outer x len x inner decomposition around one axis.
struct AxisSplit {
  std::size_t outer = 1;
  std::size_t len = 1;
  std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

void check_axis(const Tensor& x, std::size_t axis, const char* op) {
  if (axis >= x.rank()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " invalid for shape " +
                         shape_str(x.shape()));
  }
}

}  // namespace

std::size_t numel_of(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = numel_of(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (numel_of(shape) != values.size()) {
    throw DimensionError("tensor of shape " + shape_str(shape) + " cannot hold " +
                         std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->grad.assign(node->value.size(), 0.0);
  node->requires_grad = requires_grad;
  return wrap(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
  return shape()[axis];
}

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

std::size_t Tensor::flat_index(std::initializer_list<std::size_t> index) const {
  if (index.size() != rank()) throw DimensionError("index rank mismatch for " + shape_str(shape()));
  std::size_t flat = 0;
  std::size_t i = 0;
  for (std::size_t v : index) {
    if (v >= shape()[i]) throw DimensionError("index out of range for " + shape_str(shape()));
    flat = flat * shape()[i] + v;
    ++i;
  }
  return flat;
}

double Tensor::at(std::initializer_list<std::size_t> index) const { return node_->value[flat_index(index)]; }
double Tensor::grad_at(std::initializer_list<std::size_t> index) const {
  const std::size_t i = flat_index(index);
  return node_->grad.empty() ? 0.0 : node_->grad[i];
}

void Tensor::zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

Tensor Tensor::detach() const { return from(shape(), node_->value, false); }

void Tensor::backward() const {
  if (numel() != 1) throw DimensionError("backward() needs a single-element tensor, got " + shape_str(shape()));
  if (!node_->requires_grad) return;

  // Iterative post-order DFS for a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
}

Tensor add(const Tensor& a, const Tensor& b) {
  const Broadcast bc = broadcast(a.shape(), b.shape(), "add");
  std::vector<double> out(numel_of(bc.out));
  const auto av = a.values();
  const auto bv = b.values();
  for_each_broadcast(bc, [&](std::size_t o, std::size_t ia, std::size_t ib) { out[o] = av[ia] + bv[ib]; });
  return make_result(bc.out, std::move(out), {a, b}, [bc](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    for_each_broadcast(bc, [&](std::size_t o, std::size_t ia, std::size_t ib) {
      if (pa.requires_grad) pa.grad[ia] += self.grad[o];
      if (pb.requires_grad) pb.grad[ib] += self.grad[o];
    });
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const Broadcast bc = broadcast(a.shape(), b.shape(), "sub");
  std::vector<double> out(numel_of(bc.out));
  const auto av = a.values();
  const auto bv = b.values();
  for_each_broadcast(bc, [&](std::size_t o, std::size_t ia, std::size_t ib) { out[o] = av[ia] - bv[ib]; });
  return make_result(bc.out, std::move(out), {a, b}, [bc](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    for_each_broadcast(bc, [&](std::size_t o, std::size_t ia, std::size_t ib) {
      if (pa.requires_grad) pa.grad[ia] += self.grad[o];
      if (pb.requires_grad) pb.grad[ib] -= self.grad[o];
    });
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const Broadcast bc = broadcast(a.shape(), b.shape(), "mul");
  std::vector<double> out(numel_of(bc.out));
  const auto av = a.values();
  const auto bv = b.values();
  for_each_broadcast(bc, [&](std::size_t o, std::size_t ia, std::size_t ib) { out[o] = av[ia] * bv[ib]; });
  return make_result(bc.out, std::move(out), {a, b}, [bc](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    for_each_broadcast(bc, [&](std::size_t o, std::size_t ia, std::size_t ib) {
      if (pa.requires_grad) pa.grad[ia] += self.grad[o] * pb.value[ib];
      if (pb.requires_grad) pb.grad[ib] += self.grad[o] * pa.value[ia];
    });
  });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(x, [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double offset) {
  return unary(x, [offset](double v) { return v + offset; }, [](double, double) { return 1.0; });
}

Tensor one_minus(const Tensor& x) {
  return unary(x, [](double v) { return 1.0 - v; }, [](double, double) { return -1.0; });
}

Tensor tanh(const Tensor& x) {
  return unary(x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& x) {
  return unary(x, [](double v) { return v > 0 || std::isnan(v) ? v : 0.0; }, [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& x, double slope) {
  return unary(
      x, [slope](double v) { return v > 0 ? v : slope * v; },
      [slope](double v, double) { return v > 0 ? 1.0 : slope; });
}

Tensor abs(const Tensor& x) {
  return unary(
      x, [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

Tensor square(const Tensor& x) {
  return unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor apply(Unary kind, const Tensor& x) {
  switch (kind) {
    case Unary::Tanh: return tanh(x);
    case Unary::Sigmoid: return sigmoid(x);
    case Unary::Relu: return relu(x);
    case Unary::Abs: return abs(x);
    case Unary::Square: return square(x);
  }
  return x;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw DimensionError("matmul: operands need rank >= 2, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.shape()[a.rank() - 2];
  const std::size_t k = a.shape()[a.rank() - 1];
  const std::size_t kb = b.shape()[b.rank() - 2];
  const std::size_t n = b.shape()[b.rank() - 1];
  if (k != kb) {
    throw DimensionError("matmul: inner dimensions disagree for " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const Shape batch_a(a.shape().begin(), a.shape().end() - 2);
  const Shape batch_b(b.shape().begin(), b.shape().end() - 2);
  if (batch_b.empty()) {
    // Shared right operand: fold all leading dims of a into rows.
    const std::size_t rows = a.numel() / k;
    Shape out_shape = a.shape();
    out_shape.back() = n;
    std::vector<double> out(rows * n);
    MutMap(out.data(), rows, n).noalias() = ConstMap(a.values().data(), rows, k) * ConstMap(b.values().data(), k, n);
    return make_result(std::move(out_shape), std::move(out), {a, b}, [rows, k, n](Node& self) {
      Node& pa = *self.parents[0];
      Node& pb = *self.parents[1];
      ConstMap g(self.grad.data(), rows, n);
      if (pa.requires_grad) MutMap(pa.grad.data(), rows, k).noalias() += g * ConstMap(pb.value.data(), k, n).transpose();
      if (pb.requires_grad) MutMap(pb.grad.data(), k, n).noalias() += ConstMap(pa.value.data(), rows, k).transpose() * g;
    });
  }
  const bool small = m * k * n <= 16384;
  Broadcast bc = broadcast(batch_a, batch_b, "matmul");
  if (bc.same && batch_a.empty()) bc.out.clear();
  if (bc.same) {
    bc.same = false;
    bc.stride_a = aligned_strides(batch_a, bc.out);
    bc.stride_b = aligned_strides(batch_b, bc.out);
  }
  Shape out_shape = bc.out;
  out_shape.push_back(m);
  out_shape.push_back(n);
  std::vector<double> out(numel_of(out_shape), 0.0);
  const double* av = a.values().data();
  const double* bv = b.values().data();
  // Small blocks skip Eigen's packed GEMM, whose setup cost dominates there.
  for_each_broadcast(bc, [&](std::size_t o, std::size_t ia, std::size_t ib) {
    MutMap c(out.data() + o * m * n, m, n);
    ConstMap x(av + ia * m * k, m, k), y(bv + ib * k * n, k, n);
    if (small) {
      c.noalias() = x.lazyProduct(y);
    } else {
      c.noalias() = x * y;
    }
  });
  return make_result(std::move(out_shape), std::move(out), {a, b}, [bc, m, k, n, small](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    for_each_broadcast(bc, [&](std::size_t o, std::size_t ia, std::size_t ib) {
      ConstMap g(self.grad.data() + o * m * n, m, n);
      ConstMap x(pa.value.data() + ia * m * k, m, k), y(pb.value.data() + ib * k * n, k, n);
      if (pa.requires_grad) {
        MutMap ga(pa.grad.data() + ia * m * k, m, k);
        if (small) {
          ga.noalias() += g.lazyProduct(y.transpose());
        } else {
          ga.noalias() += g * y.transpose();
        }
      }
      if (pb.requires_grad) {
        MutMap gb(pb.grad.data() + ib * k * n, k, n);
        if (small) {
          gb.noalias() += x.transpose().lazyProduct(g);
        } else {
          gb.noalias() += x.transpose() * g;
        }
      }
    });
  });
}

Tensor affine(const Tensor& x, const Tensor& weight, const Tensor& bias) { return add(matmul(x, weight), bias); }

Tensor transpose_last2(const Tensor& x) {
  if (x.rank() < 2) throw DimensionError("transpose_last2: rank < 2 for " + shape_str(x.shape()));
  const std::size_t m = x.shape()[x.rank() - 2];
  const std::size_t n = x.shape()[x.rank() - 1];
  const std::size_t batches = x.numel() / std::max<std::size_t>(1, m * n);
  Shape out_shape = x.shape();
  std::swap(out_shape[out_shape.size() - 1], out_shape[out_shape.size() - 2]);
  std::vector<double> out(x.numel());
  const auto xv = x.values();
  for (std::size_t bi = 0; bi < batches; ++bi) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) out[bi * m * n + j * m + i] = xv[bi * m * n + i * n + j];
    }
  }
  return make_result(std::move(out_shape), std::move(out), {x}, [batches, m, n](Node& self) {
    Node& in = *self.parents[0];
    for (std::size_t bi = 0; bi < batches; ++bi) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) in.grad[bi * m * n + i * n + j] += self.grad[bi * m * n + j * m + i];
      }
    }
  });
}

Tensor softmax_lastdim(const Tensor& x) {
  if (x.rank() == 0 || x.shape().back() == 0) {
    throw DimensionError("softmax_lastdim: empty last dimension in " + shape_str(x.shape()));
  }
  const std::size_t len = x.shape().back();
  const std::size_t rows = x.numel() / len;
  const auto xv = x.values();
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * len;
    double* y = out.data() + r * len;
    const double mx = *std::max_element(in, in + len);
    double total = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      y[i] = std::exp(in[i] - mx);
      total += y[i];
    }
    for (std::size_t i = 0; i < len; ++i) y[i] /= total;
  }
  return make_result(x.shape(), std::move(out), {x}, [rows, len](Node& self) {
    Node& in = *self.parents[0];
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * len;
      const double* g = self.grad.data() + r * len;
      double dot = 0.0;
      for (std::size_t i = 0; i < len; ++i) dot += g[i] * y[i];
      for (std::size_t i = 0; i < len; ++i) in.grad[r * len + i] += y[i] * (g[i] - dot);
    }
  });
}

Tensor sum(const Tensor& x, std::size_t axis, bool keepdim) {
  check_axis(x, axis, "sum");
  const AxisSplit s = split_axis(x.shape(), axis);
  Shape out_shape = x.shape();
  if (keepdim) {
    out_shape[axis] = 1;
  } else {
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  }
  std::vector<double> out(s.outer * s.inner, 0.0);
  const auto xv = x.values();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t l = 0; l < s.len; ++l) {
      for (std::size_t i = 0; i < s.inner; ++i) out[o * s.inner + i] += xv[(o * s.len + l) * s.inner + i];
    }
  }
  return make_result(std::move(out_shape), std::move(out), {x}, [s](Node& self) {
    Node& in = *self.parents[0];
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t l = 0; l < s.len; ++l) {
        for (std::size_t i = 0; i < s.inner; ++i) in.grad[(o * s.len + l) * s.inner + i] += self.grad[o * s.inner + i];
      }
    }
  });
}

Tensor mean(const Tensor& x, std::size_t axis, bool keepdim) {
  check_axis(x, axis, "mean");
  if (x.shape()[axis] == 0) throw DimensionError("mean over empty axis of " + shape_str(x.shape()));
  return scale(sum(x, axis, keepdim), 1.0 / static_cast<double>(x.shape()[axis]));
}

Tensor sum_all(const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  return make_result({1}, {total}, {x}, [](Node& self) {
    Node& in = *self.parents[0];
    for (double& g : in.grad) g += self.grad[0];
  });
}

Tensor mean_all(const Tensor& x) {
  if (x.numel() == 0) throw DimensionError("mean_all of empty tensor");
  return scale(sum_all(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor concat(const std::vector<Tensor>& xs, std::size_t axis) {
  if (xs.empty()) throw DimensionError("concat: no inputs");
  check_axis(xs[0], axis, "concat");
  Shape out_shape = xs[0].shape();
  out_shape[axis] = 0;
  std::vector<std::size_t> lens;
  for (const auto& x : xs) {
    if (x.rank() != out_shape.size()) throw DimensionError("concat: rank mismatch " + shape_str(x.shape()));
    for (std::size_t d = 0; d < out_shape.size(); ++d) {
      if (d != axis && x.shape()[d] != xs[0].shape()[d]) {
        throw DimensionError("concat: shapes " + shape_str(xs[0].shape()) + " and " + shape_str(x.shape()) +
                             " differ outside axis " + std::to_string(axis));
      }
    }
    lens.push_back(x.shape()[axis]);
    out_shape[axis] += x.shape()[axis];
  }
  const AxisSplit s = split_axis(out_shape, axis);
  std::vector<double> out(numel_of(out_shape));
  std::size_t offset = 0;
  for (std::size_t p = 0; p < xs.size(); ++p) {
    const auto xv = xs[p].values();
    const std::size_t block = lens[p] * s.inner;
    for (std::size_t o = 0; o < s.outer; ++o) {
      std::copy_n(xv.data() + o * block, block, out.data() + o * s.len * s.inner + offset * s.inner);
    }
    offset += lens[p];
  }
  return make_result(std::move(out_shape), std::move(out), xs, [s, lens](Node& self) {
    std::size_t offset = 0;
    for (std::size_t p = 0; p < lens.size(); ++p) {
      Node& in = *self.parents[p];
      const std::size_t block = lens[p] * s.inner;
      if (in.requires_grad) {
        for (std::size_t o = 0; o < s.outer; ++o) {
          const double* g = self.grad.data() + o * s.len * s.inner + offset * s.inner;
          double* dst = in.grad.data() + o * block;
          for (std::size_t i = 0; i < block; ++i) dst[i] += g[i];
        }
      }
      offset += lens[p];
    }
  });
}

Tensor concat_lastdim(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw DimensionError("concat_lastdim: no inputs");
  return concat(xs, xs[0].rank() - 1);
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
  check_axis(x, axis, "slice");
  if (start + length > x.shape()[axis]) {
    throw DimensionError("slice [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") out of range on axis " + std::to_string(axis) + " of " + shape_str(x.shape()));
  }
  const AxisSplit s = split_axis(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape[axis] = length;
  std::vector<double> out(numel_of(out_shape));
  const auto xv = x.values();
  const std::size_t block = length * s.inner;
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(xv.data() + (o * s.len + start) * s.inner, block, out.data() + o * block);
  }
  return make_result(std::move(out_shape), std::move(out), {x}, [s, start, block](Node& self) {
    Node& in = *self.parents[0];
    for (std::size_t o = 0; o < s.outer; ++o) {
      const double* g = self.grad.data() + o * block;
      double* dst = in.grad.data() + (o * s.len + start) * s.inner;
      for (std::size_t i = 0; i < block; ++i) dst[i] += g[i];
    }
  });
}

Tensor select(const Tensor& x, std::size_t axis, std::size_t index) {
  Tensor s = slice(x, axis, index, 1);
  Shape shape = x.shape();
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  return reshape(s, std::move(shape));
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel_of(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape) + " changes element count");
  }
  return make_result(std::move(shape), std::vector<double>(x.values().begin(), x.values().end()), {x},
                     [](Node& self) {
                       Node& in = *self.parents[0];
                       for (std::size_t i = 0; i < self.grad.size(); ++i) in.grad[i] += self.grad[i];
                     });
}

Tensor row_normalize(const Tensor& a) {
  if (a.rank() < 2) throw DimensionError("row_normalize: rank < 2 for " + shape_str(a.shape()));
  // rows lighter than this count as empty; their gradient would scale like 1/degree
  constexpr double kMinDegree = 1e-12;
  const std::size_t n = a.shape().back();
  const std::size_t rows = n == 0 ? 0 : a.numel() / n;
  const auto av = a.values();
  std::vector<double> out(a.numel(), 0.0);
  std::vector<double> degree(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += av[r * n + j];
    degree[r] = s;
    if (s > kMinDegree) {
      for (std::size_t j = 0; j < n; ++j) out[r * n + j] = av[r * n + j] / s;
    }
  }
  std::vector<double> normalized = out;
  return make_result(a.shape(), std::move(out), {a}, [rows, n, degree, normalized](Node& self) {
    Node& in = *self.parents[0];
    for (std::size_t r = 0; r < rows; ++r) {
      const double s = degree[r];
      if (!(s > kMinDegree)) continue;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += self.grad[r * n + j] * normalized[r * n + j];
      for (std::size_t j = 0; j < n; ++j) in.grad[r * n + j] += (self.grad[r * n + j] - dot) / s;
    }
  });
}

const char* error_class_name(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Dimension: return "DimensionError";
    case ErrorKind::Validation: return "ValidationError";
    case ErrorKind::Alignment: return "AlignmentError";
    case ErrorKind::Degenerate: return "DegenerateInputError";
    case ErrorKind::Numeric: return "NumericError";
    case ErrorKind::Config: return "ConfigError";
    case ErrorKind::Io: return "IoError";
  }
  return "Error";
}

}  // namespace stnscm
