#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "slotlab/tensor.hpp"

// Differentiable operations. Every op records a pullback on the active tape
// when a tape is active and at least one input requires grad. Forward outputs
// are checked for NaN/Inf and raise ErrorCategory::kNumeric.
namespace slotlab {

// input [C_in,H,W] or [B,C_in,H,W]; kernel [C_out,C_in,kH,kW]; bias [C_out].
template <typename T>
Tensor<T> Conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                 std::size_t stride, std::size_t padding);

// input [C_in,H,W] or [B,C_in,H,W]; kernel [C_in,C_out,kH,kW]; bias [C_out].
// Output extent (H - 1) * stride - 2 * padding + kH.
template <typename T>
Tensor<T> ConvTranspose2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                          std::size_t stride, std::size_t padding);

// Affine map over the trailing axis: input [..., F_in], weight [F_out, F_in].
template <typename T>
Tensor<T> Linear(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias);
template <typename T>
Tensor<T> Linear(const Tensor<T>& input, const Tensor<T>& weight);

// x + scale * bias, bias broadcast over the trailing axis.
template <typename T>
Tensor<T> AddBias(const Tensor<T>& input, const Tensor<T>& bias, T scale = T{1});

template <typename T>
Tensor<T> Relu(const Tensor<T>& x);
template <typename T>
Tensor<T> LeakyRelu(const Tensor<T>& x, T slope = T(0.01));
template <typename T>
Tensor<T> Sigmoid(const Tensor<T>& x);

inline constexpr double kLayerNormEpsilon = 1e-8;

// Normalizes each trailing-axis slice to zero mean and unit (population)
// variance, then applies gain and offset. Trailing extent must be >= 2.
template <typename T>
Tensor<T> LayerNorm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& offset);

template <typename T>
Tensor<T> Add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> Sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> Mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> Scale(const Tensor<T>& x, T factor);
template <typename T>
Tensor<T> AddScalar(const Tensor<T>& x, T value);
template <typename T>
Tensor<T> Square(const Tensor<T>& x);

template <typename T>
Tensor<T> Sum(const Tensor<T>& x);  // scalar
template <typename T>
Tensor<T> Mean(const Tensor<T>& x);  // scalar
template <typename T>
Tensor<T> SumLastAxis(const Tensor<T>& x);  // [..., n] -> [...]
template <typename T>
Tensor<T> MeanLastAxis(const Tensor<T>& x);

template <typename T>
Tensor<T> Reshape(const Tensor<T>& x, Shape shape);

// Concatenates along the trailing axis; leading extents must agree.
template <typename T>
Tensor<T> ConcatLastAxis(std::span<const Tensor<T>> parts);

// Rows of a [N, F] view of x (leading axes flattened): out[e] = x[index[e]].
template <typename T>
Tensor<T> GatherRows(const Tensor<T>& x, std::span<const std::size_t> index);

// out[segment[e]] += x[e] over rows of a [E, F] view; out is [num_segments, F].
template <typename T>
Tensor<T> SegmentSum(const Tensor<T>& x, std::span<const std::size_t> segment,
                     std::size_t num_segments);

// Fused edge stage of a fully connected graph over groups of `group`
// consecutive rows: out[i] = sum over j != i in i's group of
// relu(layer_norm(source[i] + target[j], gain, offset)). Activations are
// recomputed in the backward pass rather than stored.
template <typename T>
Tensor<T> PairwiseNormReluSum(const Tensor<T>& source, const Tensor<T>& target, const Tensor<T>& gain,
                              const Tensor<T>& offset, std::size_t group);

// Mean of squared differences; target is treated as a constant.
template <typename T>
Tensor<T> MseLoss(const Tensor<T>& prediction, const Tensor<T>& target);

}  // namespace slotlab
