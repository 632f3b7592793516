#include "slotlab/models/layers.hpp"

#include <cmath>

namespace slotlab::models {

template <typename T>
Tensor<T> FanInUniform(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor<T> t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (T& v : t.mutable_data()) v = static_cast<T>(rng.Uniform(-bound, bound));
  return t;
}

template <typename T>
Dense<T> MakeDense(ParameterSet<T>& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                   bool zero) {
  Dense<T> d;
  d.weight = params.Add(name + ".weight", zero ? Tensor<T>({out, in}) : FanInUniform<T>({out, in}, in, rng));
  d.bias = params.Add(name + ".bias", zero ? Tensor<T>({out}) : FanInUniform<T>({out}, in, rng));
  return d;
}

template <typename T>
Norm<T> MakeNorm(ParameterSet<T>& params, const std::string& name, std::size_t width) {
  Norm<T> n;
  n.gain = params.Add(name + ".gain", Tensor<T>({width}, T{1}));
  n.offset = params.Add(name + ".offset", Tensor<T>({width}));
  return n;
}

template <typename T>
Conv<T> MakeConv(ParameterSet<T>& params, const std::string& name, std::size_t in, std::size_t out,
                 std::size_t kernel, std::size_t stride, std::size_t padding, Rng& rng) {
  const std::size_t fan_in = in * kernel * kernel;
  Conv<T> c;
  c.kernel = params.Add(name + ".kernel", FanInUniform<T>({out, in, kernel, kernel}, fan_in, rng));
  c.bias = params.Add(name + ".bias", FanInUniform<T>({out}, fan_in, rng));
  c.stride = stride;
  c.padding = padding;
  return c;
}

#define SLOTLAB_INSTANTIATE(T)                                                                                   \
  template Tensor<T> FanInUniform<T>(Shape, std::size_t, Rng&);                                               \
  template Dense<T> MakeDense<T>(ParameterSet<T>&, const std::string&, std::size_t, std::size_t, Rng&, bool); \
  template Norm<T> MakeNorm<T>(ParameterSet<T>&, const std::string&, std::size_t);                            \
  template Conv<T> MakeConv<T>(ParameterSet<T>&, const std::string&, std::size_t, std::size_t, std::size_t,   \
                               std::size_t, std::size_t, Rng&);
SLOTLAB_INSTANTIATE(float)
SLOTLAB_INSTANTIATE(double)
#undef SLOTLAB_INSTANTIATE

}  // namespace slotlab::models
