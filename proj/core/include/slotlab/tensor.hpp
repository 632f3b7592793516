#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace slotlab {

using Shape = std::vector<std::size_t>;

std::size_t NumElements(const Shape& shape);
std::string ShapeString(const Shape& shape);

// Cache-line aligned storage. Vectorized kernels pick their summation order
// from the buffer address, so unaligned storage would make results depend on
// the allocator.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

template <typename T>
class Tape;

namespace detail {

template <typename T>
struct TensorNode {
  Shape shape;
  AlignedVector<T> data;
  AlignedVector<T> grad;  // empty until something accumulates into it
  bool requires_grad = false;
  Tape<T>* tape = nullptr;  // tape that recorded the op producing this value

  AlignedVector<T>& GradBuffer() {
    if (grad.empty()) grad.assign(data.size(), T{0});
    return grad;
  }
};

}  // namespace detail

// Dense row-major tensor. Copies share storage (handle semantics); use
// Clone() for an independent copy. T is float for training and double for
// gradient verification.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor();  // scalar zero
  explicit Tensor(Shape shape, T fill = T{0});
  Tensor(Shape shape, std::vector<T> values);

  static Tensor Scalar(T value) { return Tensor(Shape{}, std::vector<T>{value}); }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return node_->data.size(); }

  std::span<const T> data() const { return node_->data; }
  std::span<T> mutable_data() { return node_->data; }
  T item() const;
  T at(std::size_t flat_index) const { return node_->data.at(flat_index); }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool value);
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->GradBuffer(); }
  void zero_grad() { node_->grad.clear(); }

  // Fresh storage, no gradient tracking.
  Tensor Detach() const;
  Tensor Clone() const { return Detach(); }
  // Detached copy with a new shape; not recorded on any tape.
  Tensor View(Shape shape) const;

  bool SameNode(const Tensor& other) const { return node_ == other.node_; }

  detail::TensorNode<T>& node() const { return *node_; }
  const std::shared_ptr<detail::TensorNode<T>>& node_ptr() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorNode<T>> node) : node_(std::move(node)) {}

  std::shared_ptr<detail::TensorNode<T>> node_;
};

// Ordered record of executed differentiable operations. Each op appends a
// pullback closure; Backward replays them in reverse, once. A consumed tape
// must be Reset() before it records again.
template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape();

  void Record(std::function<void()> pullback);
  void Backward(const Tensor<T>& loss);
  void Reset();

  std::size_t size() const { return pullbacks_.size(); }
  bool consumed() const { return consumed_; }

  static Tape* Active() { return active_; }

 private:
  template <typename>
  friend class TapeScope;
  template <typename>
  friend class NoGradScope;

  std::vector<std::function<void()>> pullbacks_;
  bool consumed_ = false;
  static inline thread_local Tape* active_ = nullptr;
};

// Makes `tape` the recording tape of the current thread for the scope.
template <typename T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>& tape) : previous_(Tape<T>::active_) { Tape<T>::active_ = &tape; }
  ~TapeScope() { Tape<T>::active_ = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<T>* previous_;
};

// Suspends recording on the current thread for the scope.
template <typename T>
class NoGradScope {
 public:
  NoGradScope() : previous_(Tape<T>::active_) { Tape<T>::active_ = nullptr; }
  ~NoGradScope() { Tape<T>::active_ = previous_; }
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape<T>* previous_;
};

// Seeds d(loss)/d(loss) = 1 and runs the loss's tape in reverse.
template <typename T>
void Backward(const Tensor<T>& loss);

}  // namespace slotlab
