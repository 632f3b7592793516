#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "slotlab/tensor.hpp"

namespace slotlab {

// Ordered, named collection of trainable tensors. Order is insertion order
// and is what checkpoints and optimizers iterate.
template <typename T>
class ParameterSet {
 public:
  Tensor<T>& Add(std::string name, Tensor<T> tensor);

  std::size_t size() const { return entries_.size(); }
  const std::string& name(std::size_t i) const { return entries_[i].first; }
  Tensor<T>& operator[](std::size_t i) { return entries_[i].second; }
  const Tensor<T>& operator[](std::size_t i) const { return entries_[i].second; }

  Tensor<T>* Find(const std::string& name);
  const Tensor<T>* Find(const std::string& name) const;

  void ZeroGrad();
  std::size_t NumScalars() const;

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  std::vector<std::pair<std::string, Tensor<T>>> entries_;
};

struct AdamConfig {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Moments are kept in double regardless of the parameter precision.
struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

template <typename T>
AdamState MakeAdamState(const ParameterSet<T>& params, AdamConfig config = {});

// Bias-corrected Adam update; zeroes every gradient afterwards. A parameter
// without a populated gradient is a contract error.
template <typename T>
void AdamStep(ParameterSet<T>& params, AdamState& state);

}  // namespace slotlab
