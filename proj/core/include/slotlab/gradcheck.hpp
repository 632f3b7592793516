#pragma once

#include <functional>
#include <string>
#include <vector>

#include "slotlab/tensor.hpp"

namespace slotlab {

struct GradCheckReport {
  double max_relative_error = 0.0;
  double tolerance = 0.0;
  std::size_t coordinates = 0;
  std::string worst;  // "input[i]" of the worst coordinate
  bool passed = false;
};

inline constexpr double kFiniteDifferenceStep = 1e-5;
inline constexpr double kGradCheckFloor = 1e-3;

// Compares tape gradients of a scalar function against central differences
// with step h per coordinate. Per-coordinate error is
// |analytic - numeric| / max(|analytic|, |numeric|, kGradCheckFloor).
// `inputs` must be leaves; their values are perturbed in place and restored.
GradCheckReport GradCheck(const std::function<Tensor<double>()>& f, std::vector<Tensor<double>> inputs,
                          double tolerance, double step = kFiniteDifferenceStep);

}  // namespace slotlab
