#include "slotlab/models/batch.hpp"

#include "slotlab/error.hpp"
#include "slotlab/models/cswm.hpp"

namespace slotlab::models {

std::vector<StepRef> AllSteps(const envs::ExperienceBuffer& buffer) {
  std::vector<StepRef> refs;
  refs.reserve(buffer.num_transitions());
  for (std::size_t e = 0; e < buffer.episodes.size(); ++e) {
    for (std::size_t t = 0; t < buffer.steps; ++t) refs.push_back({e, t});
  }
  return refs;
}

template <typename T>
void ImageToChw(const envs::Image& image, std::span<T> out) {
  const std::size_t plane = image.height * image.width;
  Require(out.size() == plane * image.channels, ErrorCategory::kDimension, "image does not fit the output span");
  for (std::size_t p = 0; p < plane; ++p) {
    for (std::size_t c = 0; c < image.channels; ++c) {
      out[c * plane + p] = static_cast<T>(image.pixels[p * image.channels + c]) / T{255};
    }
  }
}

template <typename T>
Tensor<T> ObservationBatch(const envs::ExperienceBuffer& buffer, std::span<const StepRef> refs, std::size_t offset) {
  const std::size_t C = buffer.env.channels();
  const std::size_t S = buffer.env.image_size();
  const std::size_t per = C * S * S;
  Tensor<T> batch({refs.size(), C, S, S});
  auto data = batch.mutable_data();
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const envs::Episode& ep = buffer.episodes.at(refs[i].episode);
    const std::size_t t = refs[i].step + offset;
    Require(t < ep.observations.size(), ErrorCategory::kContract, "step index beyond episode length");
    ImageToChw<T>(ep.observations[t], data.subspan(i * per, per));
  }
  return batch;
}

template <typename T>
Tensor<T> ActionBatch(const envs::ExperienceBuffer& buffer, std::span<const StepRef> refs, std::size_t offset) {
  const std::size_t K = buffer.num_objects();
  Tensor<T> batch({refs.size(), K, kActionsPerObject});
  auto data = batch.mutable_data();
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const envs::Episode& ep = buffer.episodes.at(refs[i].episode);
    const std::size_t t = refs[i].step + offset;
    Require(t < ep.actions.size(), ErrorCategory::kContract, "action index beyond episode length");
    const std::vector<float> code = envs::EncodeAction(ep.actions[t], K);
    for (std::size_t j = 0; j < code.size(); ++j) data[i * code.size() + j] = static_cast<T>(code[j]);
  }
  return batch;
}

#define SLOTLAB_INSTANTIATE(T)                                                                             \
  template void ImageToChw<T>(const envs::Image&, std::span<T>);                                          \
  template Tensor<T> ObservationBatch<T>(const envs::ExperienceBuffer&, std::span<const StepRef>, std::size_t); \
  template Tensor<T> ActionBatch<T>(const envs::ExperienceBuffer&, std::span<const StepRef>, std::size_t);
SLOTLAB_INSTANTIATE(float)
SLOTLAB_INSTANTIATE(double)
#undef SLOTLAB_INSTANTIATE

}  // namespace slotlab::models
