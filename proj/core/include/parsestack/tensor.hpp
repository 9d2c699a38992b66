#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "parsestack/common.hpp"

namespace pstk {

// Dense N-d array with canonical image layout [N,C,H,W]. Copying a Tensor
// copies a handle; the buffer and gradient state are shared (clone() makes a
// deep copy). Scalar type is float in training mode, double in verification
// mode; both instantiations are compiled.
template <typename T>
class Tensor {
 public:
  struct Impl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until populated by backward()
    bool requires_grad = false;
    bool from_op = false;  // produced by an op recorded on a tape
  };

  Tensor() = default;

  static Tensor zeros(Shape shape) {
    Tensor t;
    int64_t n = numel_of(shape);
    check(n >= 0, "tensor: negative extent in " + shape_str(shape));
    t.impl_ = std::make_shared<Impl>();
    t.impl_->shape = std::move(shape);
    t.impl_->data.assign(static_cast<size_t>(n), T(0));
    return t;
  }

  static Tensor full(Shape shape, T value) {
    Tensor t = zeros(std::move(shape));
    for (T& x : t.impl_->data) x = value;
    return t;
  }

  static Tensor from(Shape shape, std::vector<T> data) {
    check(numel_of(shape) == static_cast<int64_t>(data.size()),
          cat("tensor: shape ", shape_str(shape), " does not match data length ",
              data.size()));
    Tensor t;
    t.impl_ = std::make_shared<Impl>();
    t.impl_->shape = std::move(shape);
    t.impl_->data = std::move(data);
    return t;
  }

  static Tensor scalar(T value) { return from({1}, {value}); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  int64_t dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(impl_->data.size()); }

  std::vector<T>& data() { return impl_->data; }
  const std::vector<T>& data() const { return impl_->data; }
  T* ptr() { return impl_->data.data(); }
  const T* ptr() const { return impl_->data.data(); }

  T item() const {
    check(numel() == 1, "item(): tensor is not scalar, shape " + shape_str(shape()));
    return impl_->data[0];
  }

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  Tensor& set_requires_grad(bool v) {
    impl_->requires_grad = v;
    return *this;
  }

  bool has_grad() const { return impl_ && !impl_->grad.empty(); }
  const std::vector<T>& grad() const {
    check(has_grad(), "grad(): gradient not populated");
    return impl_->grad;
  }
  // Zero-initialized on first access.
  std::vector<T>& grad_buffer() {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), T(0));
    return impl_->grad;
  }
  void clear_grad() { impl_->grad.clear(); }

  Tensor clone() const {
    Tensor t;
    t.impl_ = std::make_shared<Impl>();
    t.impl_->shape = impl_->shape;
    t.impl_->data = impl_->data;
    t.impl_->requires_grad = impl_->requires_grad;
    return t;
  }

  bool needs_grad_path() const {
    return impl_ && (impl_->requires_grad || impl_->from_op);
  }
  void mark_from_op() { impl_->from_op = true; }

  std::shared_ptr<Impl> impl() const { return impl_; }

 private:
  std::shared_ptr<Impl> impl_;
};

// Reverse-mode tape: ordered backward rules, replayed last-to-first.
// Gradients flowing into the same tensor from several uses are summed.
// One tape belongs to one thread; independent networks on different threads
// each use their own.
template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::function<void()> backward_fn) {
    nodes_.push_back(std::move(backward_fn));
  }

  size_t size() const { return nodes_.size(); }

  void clear() { nodes_.clear(); }

  void backward(const Tensor<T>& loss) {
    check(loss.defined() && loss.numel() == 1,
          "backward: loss must be scalar, got shape " +
              (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
    loss.impl()->grad.assign(1, T(1));
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  }

  static Tape*& active() {
    thread_local Tape* t = nullptr;
    return t;
  }

 private:
  std::vector<std::function<void()>> nodes_;
};

// RAII activation of a fresh tape on the current thread.
template <typename T>
class TapeScope {
 public:
  TapeScope() : prev_(Tape<T>::active()) { Tape<T>::active() = &tape_; }
  ~TapeScope() { Tape<T>::active() = prev_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

  Tape<T>& tape() { return tape_; }

 private:
  Tape<T> tape_;
  Tape<T>* prev_;
};

template <typename T>
void backward(const Tensor<T>& loss) {
  Tape<T>* tape = Tape<T>::active();
  check(tape != nullptr, "backward: no active tape on this thread");
  tape->backward(loss);
}

}  // namespace pstk
