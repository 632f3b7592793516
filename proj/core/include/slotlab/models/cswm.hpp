#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "slotlab/checkpoint.hpp"
#include "slotlab/envs/buffer.hpp"
#include "slotlab/models/layers.hpp"

namespace slotlab::models {

inline constexpr std::size_t kActionsPerObject = 4;

struct CswmConfig {
  envs::EnvKind env = envs::EnvKind::kShapes;
  std::size_t channels = 3;
  std::size_t image_size = 50;
  std::size_t num_slots = 5;
  std::size_t latent_dim = 2;
  std::size_t hidden = 512;
  std::size_t edge_dim = 512;
  std::size_t conv_channels = 32;  // first layer of the three-body extractor
  std::size_t grid_hidden = 0;     // grid extractor: 0 = one conv, else per-cell hidden channels
  double gamma = 1.0;
  double sigma = 0.5;

  std::size_t map_size() const;  // H' (= W') of the extractor output
  nlohmann::json ToJson() const;
  static CswmConfig FromJson(const nlohmann::json& j);
};

// Defaults for an environment: D = 2 for grid worlds, 4 for three-body.
CswmConfig DefaultCswmConfig(const envs::EnvSpec& env, std::size_t num_slots);

// Observations as [B, C, H, W] in [0, 1]; latents as [B, K, D]; actions as
// [B, K, 4].
template <typename T>
class CswmModel {
 public:
  CswmModel(const CswmConfig& config, std::uint64_t seed);

  const CswmConfig& config() const { return config_; }
  ParameterSet<T>& params() { return params_; }
  const ParameterSet<T>& params() const { return params_; }

  Tensor<T> ExtractMasks(const Tensor<T>& obs) const;    // [B, K, H', W']
  Tensor<T> EncodeSlots(const Tensor<T>& masks) const;   // [B, K, D]
  Tensor<T> Encode(const Tensor<T>& obs) const { return EncodeSlots(ExtractMasks(obs)); }
  Tensor<T> Transition(const Tensor<T>& z, const Tensor<T>& actions) const;  // delta, [B, K, D]

  Checkpoint ToCheckpoint(const nlohmann::json& extra = nlohmann::json::object()) const;
  static CswmModel FromCheckpoint(const Checkpoint& checkpoint);

 private:
  void CheckObs(const Tensor<T>& obs) const;

  CswmConfig config_;
  ParameterSet<T> params_;
  std::vector<Conv<T>> extractor_;
  Dense<T> enc1_, enc2_;
  Norm<T> enc_norm_;
  Dense<T> edge_source_, edge2_;
  Tensor<T> edge_target_weight_;
  Norm<T> edge_norm_;
  Dense<T> node1_, node2_;
  Norm<T> node_norm_;
};

// Per-sample energy, [B]: (1 / (2 sigma^2)) * mean over slots of squared
// distance.
template <typename T>
Tensor<T> Energy(const Tensor<T>& z_pred, const Tensor<T>& z_target, double sigma);

// Batch mean of H(z + delta, z_next) + max(0, gamma - H(z_neg, z_next)).
template <typename T>
Tensor<T> ContrastiveLoss(const Tensor<T>& z, const Tensor<T>& delta, const Tensor<T>& z_next,
                          const Tensor<T>& z_negative, double gamma, double sigma);

// Model loss for one batch; negatives are next-states reordered by
// `negative_order`.
template <typename T>
Tensor<T> CswmBatchLoss(const CswmModel<T>& model, const Tensor<T>& obs, const Tensor<T>& actions,
                        const Tensor<T>& next_obs, std::span<const std::size_t> negative_order);

}  // namespace slotlab::models
