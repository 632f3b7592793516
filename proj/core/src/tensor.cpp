#include "slotlab/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "slotlab/error.hpp"

namespace slotlab {

std::string_view CategoryName(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::kDimension: return "dimension";
    case ErrorCategory::kContract: return "contract";
    case ErrorCategory::kNumeric: return "numeric";
    case ErrorCategory::kCapacity: return "capacity";
    case ErrorCategory::kCatalog: return "catalog";
    case ErrorCategory::kSimulation: return "simulation";
    case ErrorCategory::kInfeasible: return "infeasible";
    case ErrorCategory::kIo: return "io";
    case ErrorCategory::kFormat: return "format";
    case ErrorCategory::kConfig: return "config";
    case ErrorCategory::kUnsupported: return "unsupported";
  }
  return "unknown";
}

void Fail(ErrorCategory category, const std::string& message) { throw Error(category, message); }

std::size_t NumElements(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string ShapeString(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "," : "") << shape[i];
  out << ']';
  return out.str();
}

template <typename T>
Tensor<T>::Tensor() : Tensor(Shape{}, std::vector<T>{T{0}}) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : node_(std::make_shared<detail::TensorNode<T>>()) {
  node_->data.assign(NumElements(shape), fill);
  node_->shape = std::move(shape);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values)
    : node_(std::make_shared<detail::TensorNode<T>>()) {
  if (NumElements(shape) != values.size()) {
    Fail(ErrorCategory::kDimension, "tensor shape " + ShapeString(shape) + " does not match " +
                                        std::to_string(values.size()) + " values");
  }
  node_->shape = std::move(shape);
  node_->data.assign(values.begin(), values.end());
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  if (axis >= rank()) {
    Fail(ErrorCategory::kDimension,
         "axis " + std::to_string(axis) + " out of range for shape " + ShapeString(shape()));
  }
  return node_->shape[axis];
}

template <typename T>
T Tensor<T>::item() const {
  if (size() != 1) {
    Fail(ErrorCategory::kContract, "item() on non-scalar tensor " + ShapeString(shape()));
  }
  return node_->data[0];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool value) {
  node_->requires_grad = value;
  return *this;
}

template <typename T>
Tensor<T> Tensor<T>::Detach() const {
  auto node = std::make_shared<detail::TensorNode<T>>();
  node->shape = node_->shape;
  node->data = node_->data;
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::View(Shape shape) const {
  if (NumElements(shape) != size()) {
    Fail(ErrorCategory::kDimension,
         "cannot view " + ShapeString(node_->shape) + " as " + ShapeString(shape));
  }
  auto node = std::make_shared<detail::TensorNode<T>>();
  node->shape = std::move(shape);
  node->data = node_->data;
  return Tensor(std::move(node));
}

template <typename T>
Tape<T>::~Tape() {
  if (active_ == this) active_ = nullptr;
}

template <typename T>
void Tape<T>::Record(std::function<void()> pullback) {
  if (consumed_) {
    Fail(ErrorCategory::kContract, "recording on a tape that already ran backward; call Reset()");
  }
  pullbacks_.push_back(std::move(pullback));
}

template <typename T>
void Tape<T>::Backward(const Tensor<T>& loss) {
  if (loss.size() != 1) {
    Fail(ErrorCategory::kContract, "backward requires a scalar loss, got " + ShapeString(loss.shape()));
  }
  if (consumed_) {
    Fail(ErrorCategory::kContract, "backward called twice on the same tape without Reset()");
  }
  if (loss.node().tape != this || !loss.requires_grad()) {
    Fail(ErrorCategory::kContract, "loss is not connected to this tape");
  }
  consumed_ = true;
  loss.node().GradBuffer()[0] += T{1};
  for (auto it = pullbacks_.rbegin(); it != pullbacks_.rend(); ++it) (*it)();
  // Release captured intermediates right away.
  pullbacks_.clear();
}

template <typename T>
void Tape<T>::Reset() {
  pullbacks_.clear();
  consumed_ = false;
}

template <typename T>
void Backward(const Tensor<T>& loss) {
  if (loss.size() != 1) {
    Fail(ErrorCategory::kContract, "backward requires a scalar loss, got " + ShapeString(loss.shape()));
  }
  Tape<T>* tape = loss.node().tape;
  if (tape == nullptr) Fail(ErrorCategory::kContract, "loss is not connected to a tape");
  tape->Backward(loss);
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template void Backward(const Tensor<float>&);
template void Backward(const Tensor<double>&);

}  // namespace slotlab
