#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "sharingan/rng.hpp"

namespace sharingan {

using Shape = std::vector<int>;

inline int64_t numel_of(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ']';
  return os.str();
}

namespace detail {
inline uint64_t next_tensor_id() {
  static std::atomic<uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}
}  // namespace detail

// Dense row-major tensor. A cheap handle over shared storage; copies alias.
// Gradients live on leaf tensors (parameters, inputs) and are populated by
// Tape::backward. Intermediate gradients stay tape-local.
template <typename S>
struct TensorT {
  struct Storage {
    Shape shape;
    std::vector<S> data;
    std::vector<S> grad;  // leaves only, lazily allocated
    bool requires_grad = false;
    bool tracked = false;  // produced by an op recorded on some tape
    uint64_t id = detail::next_tensor_id();
  };

  std::shared_ptr<Storage> st;

  TensorT() = default;

  static TensorT zeros(Shape shape) { return filled(std::move(shape), S(0)); }

  static TensorT filled(Shape shape, S value) {
    TensorT t;
    t.st = std::make_shared<Storage>();
    validate_shape(shape);
    t.st->shape = std::move(shape);
    t.st->data.assign(static_cast<size_t>(numel_of(t.st->shape)), value);
    return t;
  }

  static TensorT from_data(Shape shape, std::vector<S> data) {
    validate_shape(shape);
    if (static_cast<int64_t>(data.size()) != numel_of(shape))
      throw std::invalid_argument("tensor: data length " + std::to_string(data.size()) +
                                  " does not match shape " + shape_str(shape));
    TensorT t;
    t.st = std::make_shared<Storage>();
    t.st->shape = std::move(shape);
    t.st->data = std::move(data);
    return t;
  }

  static TensorT scalar(S v) { return from_data({1}, {v}); }

  static TensorT randn(Shape shape, Rng& rng, S stddev = S(1), S mean = S(0)) {
    TensorT t = zeros(std::move(shape));
    for (auto& v : t.st->data) v = static_cast<S>(rng.normal(mean, stddev));
    return t;
  }

  bool defined() const { return st != nullptr; }
  const Shape& shape() const { return st->shape; }
  int rank() const { return static_cast<int>(st->shape.size()); }
  int dim(int i) const {
    if (i < 0) i += rank();
    return st->shape[static_cast<size_t>(i)];
  }
  int64_t numel() const { return static_cast<int64_t>(st->data.size()); }
  S* data() { return st->data.data(); }
  const S* data() const { return st->data.data(); }
  std::vector<S>& vec() { return st->data; }
  const std::vector<S>& vec() const { return st->data; }
  uint64_t id() const { return st->id; }

  S item() const {
    if (numel() != 1) throw std::runtime_error("item: tensor has " + std::to_string(numel()) + " elements");
    return st->data[0];
  }

  S at(const std::vector<int>& idx) const { return st->data[flat_index(idx)]; }
  void set(const std::vector<int>& idx, S v) { st->data[flat_index(idx)] = v; }

  bool requires_grad() const { return st && st->requires_grad; }
  TensorT& set_requires_grad(bool b = true) {
    st->requires_grad = b;
    return *this;
  }

  std::vector<S>& grad() {
    if (st->grad.size() != st->data.size()) st->grad.assign(st->data.size(), S(0));
    return st->grad;
  }
  bool has_grad() const { return st->grad.size() == st->data.size(); }
  void zero_grad() {
    if (!st->grad.empty()) std::fill(st->grad.begin(), st->grad.end(), S(0));
  }

  // deep copy of values; result is an untracked leaf
  TensorT clone() const {
    TensorT t = from_data(st->shape, st->data);
    return t;
  }

  size_t flat_index(const std::vector<int>& idx) const {
    if (idx.size() != st->shape.size()) throw std::runtime_error("index rank mismatch");
    size_t flat = 0;
    for (size_t k = 0; k < idx.size(); ++k) {
      if (idx[k] < 0 || idx[k] >= st->shape[k]) throw std::runtime_error("index out of bounds");
      flat = flat * static_cast<size_t>(st->shape[k]) + static_cast<size_t>(idx[k]);
    }
    return flat;
  }

 private:
  static void validate_shape(const Shape& shape) {
    for (int d : shape)
      if (d <= 0) throw std::invalid_argument("tensor: non-positive dimension in shape " + shape_str(shape));
  }
};

template <typename To, typename From>
TensorT<To> cast(const TensorT<From>& x) {
  std::vector<To> d(x.vec().begin(), x.vec().end());
  return TensorT<To>::from_data(x.shape(), std::move(d));
}

// Ordered record of executed ops. Reverse replay accumulates gradients into
// tape-local buffers keyed by tensor id; leaf gradients are merged into
// Tensor::grad at the end. Per-sample tapes make sample-parallel training
// race-free: shared parameters are only read during forward, and merges are
// driven by the training loop in sample order.
template <typename S>
struct TapeT {
  struct Node {
    TensorT<S> out;
    std::function<void(TapeT&)> backward;
  };

  std::vector<Node> nodes;
  std::unordered_map<uint64_t, std::vector<S>> grad_bufs;
  std::unordered_map<uint64_t, TensorT<S>> leaves;

  void note_leaf(const TensorT<S>& t) { leaves.emplace(t.id(), t); }

  std::vector<S>& grad_buf(const TensorT<S>& t) {
    auto& g = grad_bufs[t.id()];
    if (g.size() != t.st->data.size()) g.assign(t.st->data.size(), S(0));
    return g;
  }

  const std::vector<S>* find_grad(uint64_t id) const {
    auto it = grad_bufs.find(id);
    return it == grad_bufs.end() ? nullptr : &it->second;
  }

  // reverse accumulation only; leaf grads stay tape-local
  void backward_local(const TensorT<S>& loss) {
    if (!loss.defined() || loss.numel() != 1)
      throw std::runtime_error("backward: loss must be a scalar tensor");
    grad_bufs.clear();
    grad_buf(loss)[0] = S(1);
    for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
      if (!find_grad(it->out.id())) continue;  // not reachable from loss
      it->backward(*this);
    }
  }

  // add tape-local leaf grads into Tensor::grad
  void merge_leaf_grads() {
    for (auto& [id, t] : leaves) {
      const std::vector<S>* g = find_grad(id);
      if (!g) continue;
      auto& dst = t.grad();
      for (size_t i = 0; i < g->size(); ++i) dst[i] += (*g)[i];
    }
  }

  void backward(const TensorT<S>& loss) {
    backward_local(loss);
    merge_leaf_grads();
  }

  void reset() {
    nodes.clear();
    grad_bufs.clear();
    leaves.clear();
  }
};

template <typename S>
inline TapeT<S>*& current_tape() {
  thread_local TapeT<S>* tape = nullptr;
  return tape;
}

template <typename S>
struct TapeScopeT {
  TapeT<S>* prev;
  explicit TapeScopeT(TapeT<S>& t) : prev(current_tape<S>()) { current_tape<S>() = &t; }
  ~TapeScopeT() { current_tape<S>() = prev; }
  TapeScopeT(const TapeScopeT&) = delete;
  TapeScopeT& operator=(const TapeScopeT&) = delete;
};

// Returns the tape an op should record on, or nullptr. Registers any leaf
// inputs on the tape so their grads can be merged after backward.
template <typename S>
inline TapeT<S>* tape_for(std::initializer_list<const TensorT<S>*> inputs) {
  TapeT<S>* t = current_tape<S>();
  if (!t) return nullptr;
  bool need = false;
  for (const TensorT<S>* in : inputs) {
    if (in->st && (in->st->requires_grad || in->st->tracked)) {
      need = true;
      break;
    }
  }
  if (!need) return nullptr;
  for (const TensorT<S>* in : inputs)
    if (in->st && in->st->requires_grad && !in->st->tracked) t->note_leaf(*in);
  return t;
}

template <typename S, typename F>
inline void record(TapeT<S>* tape, const TensorT<S>& out, F&& fn) {
  if (!tape) return;
  out.st->tracked = true;
  tape->nodes.push_back({out, std::forward<F>(fn)});
}

// Optional forward-time NaN/Inf detection, off by default.
inline bool& debug_check_finite_flag() {
  static bool flag = false;
  return flag;
}
inline void set_debug_check_finite(bool on) { debug_check_finite_flag() = on; }

template <typename S>
inline void debug_check(const TensorT<S>& t, const char* op) {
  if (!debug_check_finite_flag()) return;
  for (const S v : t.vec())
    if (!std::isfinite(static_cast<double>(v)))
      throw std::runtime_error(std::string("non-finite value produced by op ") + op);
}

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;
using Tape = TapeT<float>;
using TapeD = TapeT<double>;
using TapeScope = TapeScopeT<float>;
using TapeScopeD = TapeScopeT<double>;

}  // namespace sharingan
