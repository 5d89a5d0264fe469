#pragma once

// Dense float tensors with reverse-mode automatic differentiation.
//
// A TensorT<S> is a cheap shared handle to a Storage holding a flat, row-major
// Eigen array plus shape metadata. Differentiable operations (ops.hpp) run
// eagerly on values and, when a Tape is active on the current thread, push a
// closure that knows how to route output gradients back into operand
// gradients. Calling backward(loss) replays those closures in exact reverse
// recording order, which is what makes gradients deterministic: the same
// graph always accumulates in the same order.
//
// Gradient lifetime rules:
//   - gradients of interior results (tensors produced by recorded ops) are
//     zeroed at the start of every backward pass;
//   - gradients of leaves (parameters, inputs) accumulate across backward
//     calls until zero_grad() is called explicitly.

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sgt {

// Extents of a row-major dense tensor, outermost dimension first.
using Shape = std::vector<int>;

inline std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d < 0) throw std::invalid_argument("shape: negative extent");
    n *= d;
  }
  return n;
}

inline std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

template <typename S>
class TapeT;

namespace detail {

template <typename S>
struct StorageT {
  using Array = Eigen::Array<S, Eigen::Dynamic, 1>;

  Shape shape;
  Array values;
  Array grad;  // empty until first touched
  bool requires_grad = false;
  TapeT<S>* tape = nullptr;  // tape that produced this tensor; null for leaves

  void ensure_grad() {
    if (grad.size() != values.size()) grad = Array::Zero(values.size());
  }
};

}  // namespace detail

template <typename S>
class TensorT {
 public:
  using Storage = detail::StorageT<S>;

  TensorT() = default;

  static TensorT zeros(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), S(0), requires_grad);
  }

  static TensorT full(Shape shape, S value, bool requires_grad = false) {
    TensorT t;
    t.s_ = std::make_shared<Storage>();
    t.s_->shape = std::move(shape);
    t.s_->values.setConstant(numel(t.s_->shape), value);
    t.s_->requires_grad = requires_grad;
    return t;
  }

  static TensorT from_span(Shape shape, std::span<const S> data,
                           bool requires_grad = false) {
    TensorT t = zeros(std::move(shape), requires_grad);
    if (static_cast<std::int64_t>(data.size()) != t.size())
      throw std::invalid_argument("Tensor::from_span: data size " +
                                  std::to_string(data.size()) +
                                  " does not match shape " +
                                  shape_to_string(t.shape()));
    for (std::int64_t i = 0; i < t.size(); ++i) t.s_->values(i) = data[i];
    return t;
  }

  static TensorT from_list(Shape shape, std::initializer_list<S> data,
                           bool requires_grad = false) {
    return from_span(std::move(shape), std::span<const S>(data.begin(), data.size()),
                     requires_grad);
  }

  static TensorT scalar(S value, bool requires_grad = false) {
    return full({}, value, requires_grad);
  }

  bool defined() const { return static_cast<bool>(s_); }
  const Shape& shape() const { return check().shape; }
  int rank() const { return static_cast<int>(check().shape.size()); }
  int dim(int i) const { return check().shape.at(static_cast<std::size_t>(i)); }
  std::int64_t size() const { return check().values.size(); }

  std::span<const S> data() const {
    return {check().values.data(), static_cast<std::size_t>(size())};
  }

  // Direct value mutation is only legal on leaves; results recorded on a tape
  // have closures capturing their values, so mutating them would corrupt the
  // backward pass.
  std::span<S> mutable_data() {
    if (check().tape != nullptr)
      throw std::logic_error("Tensor: in-place mutation of an op result is not allowed");
    return {s_->values.data(), static_cast<std::size_t>(size())};
  }

  // Flat element accessors (row-major), mainly for tests and data assembly.
  S at_flat(std::int64_t i) const { return check().values(i); }
  S at(const Shape& index) const {
    const Shape& sh = shape();
    if (index.size() != sh.size())
      throw std::invalid_argument("Tensor::at: rank mismatch");
    std::int64_t flat = 0;
    for (std::size_t d = 0; d < sh.size(); ++d) {
      if (index[d] < 0 || index[d] >= sh[d])
        throw std::out_of_range("Tensor::at: index out of range");
      flat = flat * sh[d] + index[d];
    }
    return s_->values(flat);
  }

  S item() const {
    if (size() != 1) throw std::invalid_argument("Tensor::item: tensor is not scalar");
    return check().values(0);
  }

  bool requires_grad() const { return check().requires_grad; }

  void set_requires_grad(bool value) {
    if (check().tape != nullptr)
      throw std::logic_error("Tensor: requires_grad can only be toggled on leaves");
    s_->requires_grad = value;
  }

  // Gradient view; empty span when no gradient has been materialized yet.
  std::span<const S> grad() const {
    const Storage& st = check();
    return {st.grad.data(), static_cast<std::size_t>(st.grad.size())};
  }

  void zero_grad() {
    Storage& st = check();
    if (st.grad.size() == st.values.size()) st.grad.setZero();
  }

  // Deep copy of values into a fresh leaf (no tape, no grad history).
  TensorT copy(bool requires_grad = false) const {
    TensorT t = zeros(shape(), requires_grad);
    t.s_->values = check().values;
    return t;
  }

  bool same_storage(const TensorT& other) const { return s_ == other.s_; }

  Storage* storage() const { return s_.get(); }
  const std::shared_ptr<Storage>& storage_ptr() const { return s_; }

 private:
  Storage& check() const {
    if (!s_) throw std::logic_error("Tensor: undefined handle");
    return *s_;
  }

  std::shared_ptr<Storage> s_;
};

// Records the backward closures for one forward pass. Create one per
// optimization step, activate it with a TapeScope, run the forward ops, call
// backward(loss), step the optimizer, then let it go out of scope.
template <typename S>
class TapeT {
 public:
  using StoragePtr = std::shared_ptr<detail::StorageT<S>>;

  TapeT() = default;
  TapeT(const TapeT&) = delete;
  TapeT& operator=(const TapeT&) = delete;

  void record(StoragePtr out, std::function<void()> backward_fn) {
    nodes_.push_back(Node{std::move(out), std::move(backward_fn)});
  }

  std::size_t node_count() const { return nodes_.size(); }

  void clear() { nodes_.clear(); }

  // Seeds d(loss)/d(loss) = 1 and replays all recorded closures in reverse.
  // Interior gradients are zeroed first; leaf gradients accumulate.
  void backward(const TensorT<S>& loss) {
    if (!loss.defined()) throw std::invalid_argument("backward: undefined tensor");
    if (loss.size() != 1) throw std::invalid_argument("backward: loss must be scalar");
    if (loss.storage()->tape != this)
      throw std::invalid_argument("backward: loss was not recorded on this tape");
    for (Node& n : nodes_) {
      n.out->ensure_grad();
      n.out->grad.setZero();
    }
    loss.storage()->grad(0) += S(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->backward_fn();
  }

 private:
  struct Node {
    StoragePtr out;
    std::function<void()> backward_fn;
  };
  std::vector<Node> nodes_;
};

namespace detail {
template <typename S>
inline TapeT<S>*& active_tape_slot() {
  thread_local TapeT<S>* tape = nullptr;
  return tape;
}
}  // namespace detail

// Tape currently recording on this thread, or null (ops then run inference-only).
template <typename S>
inline TapeT<S>* active_tape() {
  return detail::active_tape_slot<S>();
}

// RAII activation of a tape on the current thread; restores the previous
// active tape on destruction so scopes nest cleanly.
template <typename S>
class TapeScopeT {
 public:
  explicit TapeScopeT(TapeT<S>& tape) : prev_(detail::active_tape_slot<S>()) {
    detail::active_tape_slot<S>() = &tape;
  }
  ~TapeScopeT() { detail::active_tape_slot<S>() = prev_; }
  TapeScopeT(const TapeScopeT&) = delete;
  TapeScopeT& operator=(const TapeScopeT&) = delete;

 private:
  TapeT<S>* prev_;
};

// Entry point for gradient computation. For a tape-recorded scalar this runs
// the reverse pass; for a leaf scalar that requires grad it seeds grad += 1.
template <typename S>
inline void backward(const TensorT<S>& loss) {
  if (!loss.defined()) throw std::invalid_argument("backward: undefined tensor");
  if (loss.size() != 1) throw std::invalid_argument("backward: loss must be scalar");
  detail::StorageT<S>* st = loss.storage();
  if (st->tape != nullptr) {
    st->tape->backward(loss);
  } else if (st->requires_grad) {
    st->ensure_grad();
    st->grad(0) += S(1);
  } else {
    throw std::invalid_argument("backward: tensor is not differentiable (no tape, no requires_grad)");
  }
}

using Tensor = TensorT<float>;
using Tape = TapeT<float>;
using TapeScope = TapeScopeT<float>;

}  // namespace sgt
