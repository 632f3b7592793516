#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "slotlab/envs/buffer.hpp"
#include "slotlab/tensor.hpp"

namespace slotlab::models {

struct StepRef {
  std::size_t episode = 0;
  std::size_t step = 0;
};

// Every (episode, t) with t < steps, in episode-major order.
std::vector<StepRef> AllSteps(const envs::ExperienceBuffer& buffer);

// Writes an HWC u8 image as CHW values scaled to [0, 1].
template <typename T>
void ImageToChw(const envs::Image& image, std::span<T> out);

// Observation at step ref.step + offset for each ref, as [B, C, H, W].
template <typename T>
Tensor<T> ObservationBatch(const envs::ExperienceBuffer& buffer, std::span<const StepRef> refs,
                           std::size_t offset = 0);

// One-hot actions at step ref.step + offset, as [B, K, 4]; zeros without
// actions.
template <typename T>
Tensor<T> ActionBatch(const envs::ExperienceBuffer& buffer, std::span<const StepRef> refs, std::size_t offset = 0);

}  // namespace slotlab::models
