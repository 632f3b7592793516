#pragma once

#include <cstdint>

#include <json.hpp>

#include "slotlab/checkpoint.hpp"
#include "slotlab/models/cswm.hpp"

namespace slotlab::models {

// Shares the environment fields of CswmConfig; the latent is one flat vector
// of K * D values.
struct AeConfig {
  envs::EnvKind env = envs::EnvKind::kShapes;
  std::size_t channels = 3;
  std::size_t image_size = 50;
  std::size_t num_slots = 5;
  std::size_t latent_dim = 2;
  std::size_t hidden = 512;

  std::size_t map_size() const { return image_size / envs::kCellPixels; }
  std::size_t flat_latent() const { return num_slots * latent_dim; }
  nlohmann::json ToJson() const;
  static AeConfig FromJson(const nlohmann::json& j);
};

AeConfig DefaultAeConfig(const envs::EnvSpec& env, std::size_t num_slots);

template <typename T>
struct AeOutput {
  Tensor<T> latent;
  Tensor<T> reconstruction;
};

// Encoder: conv 10x10 stride 10 to K sigmoid maps, flatten, MLP to K*D.
// Decoder mirrors it with a transposed convolution and a sigmoid output.
// A residual MLP head over (latent, actions) supplies latent rollouts.
template <typename T>
class AeModel {
 public:
  AeModel(const AeConfig& config, std::uint64_t seed);

  const AeConfig& config() const { return config_; }
  ParameterSet<T>& params() { return params_; }
  const ParameterSet<T>& params() const { return params_; }

  Tensor<T> ExtractMasks(const Tensor<T>& obs) const;  // [B, K, H', W']
  Tensor<T> Encode(const Tensor<T>& obs) const;        // [B, K*D]
  Tensor<T> Decode(const Tensor<T>& latent) const;     // [B, C, H, W]
  Tensor<T> Transition(const Tensor<T>& latent, const Tensor<T>& actions) const;  // actions [B, K, 4]
  AeOutput<T> Forward(const Tensor<T>& obs) const {
    Tensor<T> latent = Encode(obs);
    return {latent, Decode(latent)};
  }

  Checkpoint ToCheckpoint(const nlohmann::json& extra = nlohmann::json::object()) const;
  static AeModel FromCheckpoint(const Checkpoint& checkpoint);

 private:
  AeConfig config_;
  ParameterSet<T> params_;
  Conv<T> conv_;
  Dense<T> enc1_, enc2_;
  Norm<T> enc_norm_;
  Dense<T> dec1_, dec2_;
  Norm<T> dec_norm_;
  Tensor<T> deconv_kernel_, deconv_bias_;
  Dense<T> head1_, head2_;
  Norm<T> head_norm_;
};

// Pixel mean squared error.
template <typename T>
Tensor<T> AeLoss(const Tensor<T>& reconstruction, const Tensor<T>& target);

// Reconstruction of obs plus the head's squared error toward the detached
// next latent; the head sees detached latents so it cannot reshape the code.
template <typename T>
Tensor<T> AeBatchLoss(const AeModel<T>& model, const Tensor<T>& obs, const Tensor<T>& actions,
                      const Tensor<T>& next_obs);

}  // namespace slotlab::models
