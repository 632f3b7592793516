#pragma once

#include <string>

#include "slotlab/ops.hpp"
#include "slotlab/optim.hpp"
#include "slotlab/rng.hpp"

namespace slotlab::models {

// Fills a tensor with U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <typename T>
Tensor<T> FanInUniform(Shape shape, std::size_t fan_in, Rng& rng);

template <typename T>
struct Dense {
  Tensor<T> weight;  // [out, in]
  Tensor<T> bias;    // [out]

  Tensor<T> operator()(const Tensor<T>& x) const { return Linear(x, weight, bias); }
};

template <typename T>
struct Norm {
  Tensor<T> gain;
  Tensor<T> offset;

  Tensor<T> operator()(const Tensor<T>& x) const { return LayerNorm(x, gain, offset); }
};

template <typename T>
struct Conv {
  Tensor<T> kernel;
  Tensor<T> bias;
  std::size_t stride = 1;
  std::size_t padding = 0;

  Tensor<T> operator()(const Tensor<T>& x) const { return Conv2d(x, kernel, bias, stride, padding); }
};

template <typename T>
Dense<T> MakeDense(ParameterSet<T>& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                   bool zero = false);
template <typename T>
Norm<T> MakeNorm(ParameterSet<T>& params, const std::string& name, std::size_t width);
template <typename T>
Conv<T> MakeConv(ParameterSet<T>& params, const std::string& name, std::size_t in, std::size_t out,
                 std::size_t kernel, std::size_t stride, std::size_t padding, Rng& rng);

}  // namespace slotlab::models
