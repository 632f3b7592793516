#include "slotlab/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "slotlab/error.hpp"

namespace slotlab {

GradCheckReport GradCheck(const std::function<Tensor<double>()>& f, std::vector<Tensor<double>> inputs,
                          double tolerance, double step) {
  for (auto& input : inputs) {
    input.set_requires_grad(true);
    input.zero_grad();
  }
  {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    Tensor<double> loss = f();
    if (loss.size() != 1) Fail(ErrorCategory::kContract, "grad_check: function must be scalar-valued");
    tape.Backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  for (auto& input : inputs) {
    if (input.has_grad()) {
      analytic.emplace_back(input.grad().begin(), input.grad().end());
    } else {
      analytic.emplace_back(input.size(), 0.0);
    }
    input.zero_grad();
  }

  GradCheckReport report;
  report.tolerance = tolerance;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto values = inputs[k].mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      const double plus = f().item();
      values[i] = saved - step;
      const double minus = f().item();
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * step);
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), kGradCheckFloor});
      const double err = std::abs(a - numeric) / denom;
      ++report.coordinates;
      if (err > report.max_relative_error) {
        report.max_relative_error = err;
        report.worst = "input" + std::to_string(k) + "[" + std::to_string(i) + "]";
      }
    }
  }
  report.passed = report.max_relative_error < tolerance;
  return report;
}

}  // namespace slotlab
