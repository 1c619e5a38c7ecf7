// Dense n-dimensional tensors with reverse-mode automatic differentiation.
// The graph is dynamic: every op records its inputs and a backward rule on
// the result node; backward() replays the tape in reverse topological order.
// Nodes are freed when the last Tensor handle referencing them goes away.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace moodseq {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ')';
  return os.str();
}

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct UsageError : std::logic_error {
  using std::logic_error::logic_error;
};

namespace detail {

template <class T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }
};

// C(M,N) = A(M,K) * B(K,N), optionally with either operand transposed
// (transX means the stored matrix is the transpose of the logical one).
// Row-parallel and accumulation-order fixed, so results are bitwise
// reproducible for any thread count.
template <class T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const T* a, const T* b, T* c, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, T(0));
  if (!trans_a && !trans_b) {
#pragma omp parallel for schedule(static) if (m * n * k > (1u << 16))
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
      T* crow = c + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const T av = a[i * k + p];
        const T* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else if (!trans_a && trans_b) {
    // b stored as (N,K); dot products of rows.
#pragma omp parallel for schedule(static) if (m * n * k > (1u << 16))
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
      const T* arow = a + i * k;
      T* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) {
        const T* brow = b + j * k;
        T acc = T(0);
        for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
        crow[j] += acc;
      }
    }
  } else if (trans_a && !trans_b) {
    // a stored as (K,M).
#pragma omp parallel for schedule(static) if (m * n * k > (1u << 16))
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
      T* crow = c + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const T av = a[p * m + i];
        const T* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else {
#pragma omp parallel for schedule(static) if (m * n * k > (1u << 16))
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
      T* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) {
        T acc = T(0);
        for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * b[j * k + p];
        crow[j] += acc;
      }
    }
  }
}

}  // namespace detail

template <class T>
class Tensor {
 public:
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() : node_(std::make_shared<detail::Node<T>>()) {}

  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false)
      : node_(std::make_shared<detail::Node<T>>()) {
    if (numel(shape) != data.size())
      throw DimensionError("tensor data length " + std::to_string(data.size()) +
                           " does not match shape " + shape_str(shape));
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::vector<T> data(numel(shape), T(0));
    return Tensor(std::move(shape), std::move(data), requires_grad);
  }

  static Tensor full(Shape shape, T value, bool requires_grad = false) {
    std::vector<T> data(numel(shape), value);
    return Tensor(std::move(shape), std::move(data), requires_grad);
  }

  static Tensor scalar(T value, bool requires_grad = false) {
    return Tensor({1}, {value}, requires_grad);
  }

  // Glorot-uniform initialization on fan_in/fan_out of a 2-D weight.
  static Tensor glorot(Shape shape, std::mt19937_64& rng, bool requires_grad = true) {
    std::size_t fan_in = shape.empty() ? 1 : shape[0];
    std::size_t fan_out = shape.size() > 1 ? shape[1] : 1;
    T limit = std::sqrt(T(6) / T(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-double(limit), double(limit));
    std::vector<T> data(numel(shape));
    for (auto& v : data) v = T(dist(rng));
    return Tensor(std::move(shape), std::move(data), requires_grad);
  }

  static Tensor uniform(Shape shape, T lo, T hi, std::mt19937_64& rng,
                        bool requires_grad = false) {
    std::uniform_real_distribution<double> dist{double(lo), double(hi)};
    std::vector<T> data(numel(shape));
    for (auto& v : data) v = T(dist(rng));
    return Tensor(std::move(shape), std::move(data), requires_grad);
  }

  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->data.size(); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }

  std::span<const T> data() const { return node_->data; }
  std::vector<T>& mutable_data() { return node_->data; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }

  bool has_grad() const { return node_->grad.size() == node_->data.size(); }
  std::span<const T> grad() const {
    if (!has_grad()) throw UsageError("gradient not populated");
    return node_->grad;
  }
  std::vector<T>& mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() { node_->grad.clear(); }

  T item() const {
    if (size() != 1) throw UsageError("item() on non-scalar tensor " + shape_str(shape()));
    return node_->data[0];
  }

  // Same data, detached from the graph.
  Tensor detach() const {
    return Tensor(node_->shape, node_->data, false);
  }

  // Reverse pass from a scalar root. Visits each recorded op exactly once,
  // accumulating gradients additively across fan-out.
  void backward() const {
    if (size() != 1) throw UsageError("backward() requires a scalar root");
    std::vector<detail::Node<T>*> order;
    std::unordered_set<detail::Node<T>*> seen;
    std::vector<std::pair<detail::Node<T>*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        detail::Node<T>* p = node->parents[next++].get();
        if (seen.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
    node_->ensure_grad();
    node_->grad[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      detail::Node<T>* n = *it;
      if (n->backward_fn && n->grad.size() == n->data.size()) n->backward_fn(*n);
    }
  }

  NodePtr node() const { return node_; }

 private:
  explicit Tensor(NodePtr n) : node_(std::move(n)) {}
  NodePtr node_;

  template <class U>
  friend Tensor<U> make_op(Shape, std::vector<U>, std::vector<Tensor<U>>,
                           std::function<void(detail::Node<U>&)>);
};

// Builds a result tensor wired into the graph. The backward callable receives
// the result node and must accumulate into the parents' grads.
template <class T>
Tensor<T> make_op(Shape shape, std::vector<T> data, std::vector<Tensor<T>> inputs,
                  std::function<void(detail::Node<T>&)> backward) {
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  bool rg = false;
  for (const auto& in : inputs) rg = rg || in.requires_grad();
  node->requires_grad = rg;
  if (rg) {
    node->parents.reserve(inputs.size());
    for (const auto& in : inputs) node->parents.push_back(in.node());
    node->backward_fn = std::move(backward);
  }
  return Tensor<T>(node);
}

// ---------------------------------------------------------------------------
// elementwise ops (binary ops support trailing-dimension broadcasting: the
// second operand's shape must be a suffix of the first's)

namespace detail {

template <class T>
void check_suffix(const Shape& a, const Shape& b) {
  if (b.size() > a.size() ||
      !std::equal(b.rbegin(), b.rend(), a.rbegin()))
    throw DimensionError("shapes not broadcastable: " + shape_str(a) + " vs " + shape_str(b));
}

// Accumulate grad of a broadcast operand: sum over the leading axes.
template <class T>
void reduce_into(const std::vector<T>& g, std::vector<T>& out) {
  const std::size_t nb = out.size();
  for (std::size_t i = 0; i < g.size(); ++i) out[i % nb] += g[i];
}

}  // namespace detail

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_suffix<T>(a.shape(), b.shape());
  const std::size_t nb = b.size();
  std::vector<T> out(a.data().begin(), a.data().end());
  auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i % nb];
  return make_op<T>(a.shape(), std::move(out), {a, b}, [](detail::Node<T>& n) {
    auto& pa = *n.parents[0];
    auto& pb = *n.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      detail::reduce_into(n.grad, pb.grad);
    }
  });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_suffix<T>(a.shape(), b.shape());
  const std::size_t nb = b.size();
  std::vector<T> out(a.data().begin(), a.data().end());
  auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bd[i % nb];
  return make_op<T>(a.shape(), std::move(out), {a, b}, [](detail::Node<T>& n) {
    auto& pa = *n.parents[0];
    auto& pb = *n.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      const std::size_t m = pb.grad.size();
      for (std::size_t i = 0; i < n.grad.size(); ++i) pb.grad[i % m] -= n.grad[i];
    }
  });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_suffix<T>(a.shape(), b.shape());
  const std::size_t nb = b.size();
  std::vector<T> out(a.data().begin(), a.data().end());
  auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bd[i % nb];
  return make_op<T>(a.shape(), std::move(out), {a, b}, [](detail::Node<T>& n) {
    auto& pa = *n.parents[0];
    auto& pb = *n.parents[1];
    const std::size_t m = pb.data.size();
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i)
        pa.grad[i] += n.grad[i] * pb.data[i % m];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i)
        pb.grad[i % m] += n.grad[i] * pa.data[i];
    }
  });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T k) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= k;
  return make_op<T>(a.shape(), std::move(out), {a}, [k](detail::Node<T>& n) {
    auto& pa = *n.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += k * n.grad[i];
  });
}

template <class T>
Tensor<T> tanh_op(const Tensor<T>& a) {
  std::vector<T> out(a.size());
  auto ad = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(ad[i]);
  return make_op<T>(a.shape(), std::move(out), {a}, [](detail::Node<T>& n) {
    auto& pa = *n.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      pa.grad[i] += n.grad[i] * (T(1) - n.data[i] * n.data[i]);
  });
}

template <class T>
Tensor<T> sigmoid_op(const Tensor<T>& a) {
  std::vector<T> out(a.size());
  auto ad = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    // split by sign for stability
    T x = ad[i];
    out[i] = x >= T(0) ? T(1) / (T(1) + std::exp(-x))
                       : std::exp(x) / (T(1) + std::exp(x));
  }
  return make_op<T>(a.shape(), std::move(out), {a}, [](detail::Node<T>& n) {
    auto& pa = *n.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      pa.grad[i] += n.grad[i] * n.data[i] * (T(1) - n.data[i]);
  });
}

template <class T>
Tensor<T> relu_op(const Tensor<T>& a) {
  std::vector<T> out(a.size());
  auto ad = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] > T(0) ? ad[i] : T(0);
  return make_op<T>(a.shape(), std::move(out), {a}, [](detail::Node<T>& n) {
    auto& pa = *n.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      if (n.data[i] > T(0)) pa.grad[i] += n.grad[i];
  });
}

// ---------------------------------------------------------------------------
// matrix product

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw DimensionError("matmul shape mismatch: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> out(m * n);
  detail::gemm<T>(false, false, m, n, k, a.data().data(), b.data().data(), out.data(), false);
  return make_op<T>({m, n}, std::move(out), {a, b}, [m, n, k](detail::Node<T>& node) {
    auto& pa = *node.parents[0];
    auto& pb = *node.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      // dA = dC * B^T
      detail::gemm<T>(false, true, m, k, n, node.grad.data(), pb.data.data(), pa.grad.data(), true);
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      // dB = A^T * dC
      detail::gemm<T>(true, false, k, n, m, pa.data.data(), node.grad.data(), pb.grad.data(), true);
    }
  });
}

// ---------------------------------------------------------------------------
// reductions and reshaping

template <class T>
Tensor<T> sum_all(const Tensor<T>& a) {
  T s = T(0);
  for (T v : a.data()) s += v;
  return make_op<T>({1}, {s}, {a}, [](detail::Node<T>& n) {
    auto& pa = *n.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    for (auto& g : pa.grad) g += n.grad[0];
  });
}

template <class T>
Tensor<T> mean_all(const Tensor<T>& a) {
  return scale(sum_all(a), T(1) / T(a.size()));
}

template <class T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (numel(shape) != a.size())
    throw DimensionError("reshape " + shape_str(a.shape()) + " -> " + shape_str(shape) +
                         " changes element count");
  std::vector<T> out(a.data().begin(), a.data().end());
  return make_op<T>(std::move(shape), std::move(out), {a}, [](detail::Node<T>& n) {
    auto& pa = *n.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i];
  });
}

// Mean over axis 1 of a (B,T,M) tensor -> (B,M).
template <class T>
Tensor<T> mean_time(const Tensor<T>& a) {
  if (a.rank() != 3) throw DimensionError("mean_time expects rank-3, got " + shape_str(a.shape()));
  const std::size_t B = a.dim(0), Tn = a.dim(1), M = a.dim(2);
  std::vector<T> out(B * M, T(0));
  auto ad = a.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < Tn; ++t)
      for (std::size_t j = 0; j < M; ++j) out[b * M + j] += ad[(b * Tn + t) * M + j];
  const T inv = T(1) / T(Tn);
  for (auto& v : out) v *= inv;
  return make_op<T>({B, M}, std::move(out), {a}, [B, Tn, M, inv](detail::Node<T>& n) {
    auto& pa = *n.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t t = 0; t < Tn; ++t)
        for (std::size_t j = 0; j < M; ++j)
          pa.grad[(b * Tn + t) * M + j] += inv * n.grad[b * M + j];
  });
}

// Max over axis 1 of a (B,T,M) tensor -> (B,M); gradient routes to the argmax.
template <class T>
Tensor<T> max_time(const Tensor<T>& a) {
  if (a.rank() != 3) throw DimensionError("max_time expects rank-3, got " + shape_str(a.shape()));
  const std::size_t B = a.dim(0), Tn = a.dim(1), M = a.dim(2);
  std::vector<T> out(B * M);
  auto argmax = std::make_shared<std::vector<std::size_t>>(B * M);
  auto ad = a.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t j = 0; j < M; ++j) {
      std::size_t best = 0;
      T bv = ad[(b * Tn + 0) * M + j];
      for (std::size_t t = 1; t < Tn; ++t) {
        T v = ad[(b * Tn + t) * M + j];
        if (v > bv) { bv = v; best = t; }
      }
      out[b * M + j] = bv;
      (*argmax)[b * M + j] = best;
    }
  return make_op<T>({B, M}, std::move(out), {a}, [B, Tn, M, argmax](detail::Node<T>& n) {
    auto& pa = *n.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t j = 0; j < M; ++j)
        pa.grad[(b * Tn + (*argmax)[b * M + j]) * M + j] += n.grad[b * M + j];
  });
}

// ---------------------------------------------------------------------------
// sequence plumbing

// Select timestep t from (B,T,M) -> (B,M).
template <class T>
Tensor<T> slice_time(const Tensor<T>& a, std::size_t t) {
  if (a.rank() != 3) throw DimensionError("slice_time expects rank-3, got " + shape_str(a.shape()));
  const std::size_t B = a.dim(0), Tn = a.dim(1), M = a.dim(2);
  if (t >= Tn) throw UsageError("slice_time index out of range");
  std::vector<T> out(B * M);
  auto ad = a.data();
  for (std::size_t b = 0; b < B; ++b)
    std::copy_n(ad.data() + (b * Tn + t) * M, M, out.data() + b * M);
  return make_op<T>({B, M}, std::move(out), {a}, [B, Tn, M, t](detail::Node<T>& n) {
    auto& pa = *n.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t j = 0; j < M; ++j)
        pa.grad[(b * Tn + t) * M + j] += n.grad[b * M + j];
  });
}

// Stack T tensors of shape (B,M) along a new time axis -> (B,T,M).
template <class T>
Tensor<T> stack_time(const std::vector<Tensor<T>>& steps) {
  if (steps.empty()) throw UsageError("stack_time on empty sequence");
  const std::size_t B = steps[0].dim(0), M = steps[0].dim(1), Tn = steps.size();
  std::vector<T> out(B * Tn * M);
  for (std::size_t t = 0; t < Tn; ++t) {
    if (steps[t].shape() != steps[0].shape())
      throw DimensionError("stack_time shape mismatch at step " + std::to_string(t));
    auto sd = steps[t].data();
    for (std::size_t b = 0; b < B; ++b)
      std::copy_n(sd.data() + b * M, M, out.data() + (b * Tn + t) * M);
  }
  return make_op<T>({B, Tn, M}, std::move(out), steps, [B, Tn, M](detail::Node<T>& n) {
    for (std::size_t t = 0; t < Tn; ++t) {
      auto& p = *n.parents[t];
      if (!p.requires_grad) continue;
      p.ensure_grad();
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t j = 0; j < M; ++j)
          p.grad[b * M + j] += n.grad[(b * Tn + t) * M + j];
    }
  });
}

// Concatenate along the last axis; both operands share all leading dims.
template <class T>
Tensor<T> concat_last(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != b.rank() || a.rank() < 1)
    throw DimensionError("concat_last rank mismatch");
  for (std::size_t i = 0; i + 1 < a.rank(); ++i)
    if (a.dim(i) != b.dim(i))
      throw DimensionError("concat_last leading dims differ: " + shape_str(a.shape()) + " vs " +
                           shape_str(b.shape()));
  const std::size_t ma = a.dim(a.rank() - 1), mb = b.dim(b.rank() - 1);
  const std::size_t rows = a.size() / ma;
  Shape shape = a.shape();
  shape.back() = ma + mb;
  std::vector<T> out(rows * (ma + mb));
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(ad.data() + r * ma, ma, out.data() + r * (ma + mb));
    std::copy_n(bd.data() + r * mb, mb, out.data() + r * (ma + mb) + ma);
  }
  return make_op<T>(std::move(shape), std::move(out), {a, b},
                    [rows, ma, mb](detail::Node<T>& n) {
                      auto& pa = *n.parents[0];
                      auto& pb = *n.parents[1];
                      if (pa.requires_grad) {
                        pa.ensure_grad();
                        for (std::size_t r = 0; r < rows; ++r)
                          for (std::size_t j = 0; j < ma; ++j)
                            pa.grad[r * ma + j] += n.grad[r * (ma + mb) + j];
                      }
                      if (pb.requires_grad) {
                        pb.ensure_grad();
                        for (std::size_t r = 0; r < rows; ++r)
                          for (std::size_t j = 0; j < mb; ++j)
                            pb.grad[r * mb + j] += n.grad[r * (ma + mb) + ma + j];
                      }
                    });
}

// Repeat a (B,M) tensor T times along a new middle axis -> (B,T,M).
template <class T>
Tensor<T> repeat_time(const Tensor<T>& a, std::size_t Tn) {
  if (a.rank() != 2) throw DimensionError("repeat_time expects rank-2, got " + shape_str(a.shape()));
  const std::size_t B = a.dim(0), M = a.dim(1);
  std::vector<T> out(B * Tn * M);
  auto ad = a.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < Tn; ++t)
      std::copy_n(ad.data() + b * M, M, out.data() + (b * Tn + t) * M);
  return make_op<T>({B, Tn, M}, std::move(out), {a}, [B, Tn, M](detail::Node<T>& n) {
    auto& pa = *n.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t t = 0; t < Tn; ++t)
        for (std::size_t j = 0; j < M; ++j)
          pa.grad[b * M + j] += n.grad[(b * Tn + t) * M + j];
  });
}

// Weighted sum over time: states (B,T,H), weights (B,T) -> (B,H).
template <class T>
Tensor<T> weighted_sum_time(const Tensor<T>& states, const Tensor<T>& weights) {
  if (states.rank() != 3 || weights.rank() != 2 || states.dim(0) != weights.dim(0) ||
      states.dim(1) != weights.dim(1))
    throw DimensionError("weighted_sum_time shape mismatch: " + shape_str(states.shape()) +
                         " vs " + shape_str(weights.shape()));
  const std::size_t B = states.dim(0), Tn = states.dim(1), H = states.dim(2);
  std::vector<T> out(B * H, T(0));
  auto sd = states.data();
  auto wd = weights.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < Tn; ++t) {
      const T w = wd[b * Tn + t];
      for (std::size_t j = 0; j < H; ++j) out[b * H + j] += w * sd[(b * Tn + t) * H + j];
    }
  return make_op<T>({B, H}, std::move(out), {states, weights}, [B, Tn, H](detail::Node<T>& n) {
    auto& ps = *n.parents[0];
    auto& pw = *n.parents[1];
    if (ps.requires_grad) {
      ps.ensure_grad();
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < Tn; ++t) {
          const T w = pw.data[b * Tn + t];
          for (std::size_t j = 0; j < H; ++j)
            ps.grad[(b * Tn + t) * H + j] += w * n.grad[b * H + j];
        }
    }
    if (pw.requires_grad) {
      pw.ensure_grad();
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < Tn; ++t) {
          T acc = T(0);
          for (std::size_t j = 0; j < H; ++j)
            acc += ps.data[(b * Tn + t) * H + j] * n.grad[b * H + j];
          pw.grad[b * Tn + t] += acc;
        }
    }
  });
}

// ---------------------------------------------------------------------------
// softmax (last axis), max-subtracted for stability

template <class T>
Tensor<T> softmax(const Tensor<T>& a) {
  if (a.rank() < 1 || a.dim(a.rank() - 1) < 1)
    throw DimensionError("softmax on empty axis");
  const std::size_t n = a.dim(a.rank() - 1);
  const std::size_t rows = a.size() / n;
  std::vector<T> out(a.size());
  auto ad = a.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = ad.data() + r * n;
    T* y = out.data() + r * n;
    T mx = *std::max_element(x, x + n);
    T sum = T(0);
    for (std::size_t j = 0; j < n; ++j) {
      y[j] = std::exp(x[j] - mx);
      sum += y[j];
    }
    for (std::size_t j = 0; j < n; ++j) y[j] /= sum;
  }
  return make_op<T>(a.shape(), std::move(out), {a}, [rows, n](detail::Node<T>& node) {
    auto& pa = *node.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const T* y = node.data.data() + r * n;
      const T* g = node.grad.data() + r * n;
      T dot = T(0);
      for (std::size_t j = 0; j < n; ++j) dot += y[j] * g[j];
      for (std::size_t j = 0; j < n; ++j) pa.grad[r * n + j] += y[j] * (g[j] - dot);
    }
  });
}

// ---------------------------------------------------------------------------
// dropout (inverted scaling, training only; call sites skip it in inference)

template <class T>
Tensor<T> dropout(const Tensor<T>& a, T p, std::mt19937_64& rng) {
  if (p <= T(0)) return a;
  if (p >= T(1)) throw UsageError("dropout rate must be < 1");
  auto mask = std::make_shared<std::vector<T>>(a.size());
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  const T keep_scale = T(1) / (T(1) - p);
  std::vector<T> out(a.size());
  auto ad = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    (*mask)[i] = dist(rng) < double(p) ? T(0) : keep_scale;
    out[i] = ad[i] * (*mask)[i];
  }
  return make_op<T>(a.shape(), std::move(out), {a}, [mask](detail::Node<T>& n) {
    auto& pa = *n.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i] * (*mask)[i];
  });
}

// Thread budget for the parallel kernels (no-op without OpenMP).
void set_threads(int n);

}  // namespace moodseq
