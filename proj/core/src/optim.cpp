#include "slotlab/optim.hpp"

#include <cmath>

#include "slotlab/error.hpp"

namespace slotlab {

template <typename T>
Tensor<T>& ParameterSet<T>::Add(std::string name, Tensor<T> tensor) {
  if (Find(name) != nullptr) Fail(ErrorCategory::kContract, "duplicate parameter name " + name);
  tensor.set_requires_grad(true);
  entries_.emplace_back(std::move(name), std::move(tensor));
  return entries_.back().second;
}

template <typename T>
Tensor<T>* ParameterSet<T>::Find(const std::string& name) {
  for (auto& [n, t] : entries_) {
    if (n == name) return &t;
  }
  return nullptr;
}

template <typename T>
const Tensor<T>* ParameterSet<T>::Find(const std::string& name) const {
  for (const auto& [n, t] : entries_) {
    if (n == name) return &t;
  }
  return nullptr;
}

template <typename T>
void ParameterSet<T>::ZeroGrad() {
  for (auto& entry : entries_) entry.second.zero_grad();
}

template <typename T>
std::size_t ParameterSet<T>::NumScalars() const {
  std::size_t n = 0;
  for (const auto& entry : entries_) n += entry.second.size();
  return n;
}

template <typename T>
AdamState MakeAdamState(const ParameterSet<T>& params, AdamConfig config) {
  AdamState state;
  state.config = config;
  for (const auto& [name, t] : params) {
    state.first_moment.emplace_back(t.size(), 0.0);
    state.second_moment.emplace_back(t.size(), 0.0);
  }
  return state;
}

template <typename T>
void AdamStep(ParameterSet<T>& params, AdamState& state) {
  if (state.first_moment.size() != params.size()) {
    Fail(ErrorCategory::kContract, "adam state does not match parameter set");
  }
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (!params[p].has_grad()) {
      Fail(ErrorCategory::kContract, "adam step: parameter " + params.name(p) + " has no gradient");
    }
    if (state.first_moment[p].size() != params[p].size()) {
      Fail(ErrorCategory::kContract, "adam step: moment shape mismatch for " + params.name(p));
    }
  }
  const AdamConfig& c = state.config;
  ++state.step;
  const double correction1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto values = params[p].mutable_data();
    auto grad = params[p].grad();
    auto& m = state.first_moment[p];
    auto& v = state.second_moment[p];
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad[i];
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      values[i] = static_cast<T>(values[i] - c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon));
    }
    params[p].zero_grad();
  }
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template AdamState MakeAdamState(const ParameterSet<float>&, AdamConfig);
template AdamState MakeAdamState(const ParameterSet<double>&, AdamConfig);
template void AdamStep(ParameterSet<float>&, AdamState&);
template void AdamStep(ParameterSet<double>&, AdamState&);

}  // namespace slotlab
