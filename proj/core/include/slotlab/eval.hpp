#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "slotlab/envs/buffer.hpp"
#include "slotlab/models/autoencoder.hpp"
#include "slotlab/models/batch.hpp"
#include "slotlab/models/cswm.hpp"

namespace slotlab::eval {

using models::StepRef;

// Anything that maps observations to flat latents and rolls them forward.
// Latents are [B, L].
class LatentDynamics {
 public:
  virtual ~LatentDynamics() = default;
  virtual std::size_t latent_size() const = 0;
  virtual Tensor<float> EncodeObservations(const Tensor<float>& obs) const = 0;
  virtual Tensor<float> Step(const Tensor<float>& z, const Tensor<float>& actions) const = 0;

  // Latents of the observations at ref.step + offset.
  virtual Tensor<float> Encode(const envs::ExperienceBuffer& buffer, std::span<const StepRef> refs,
                               std::size_t offset) const;
  // Encodes ref.step and applies `horizon` transitions with the recorded
  // actions, never re-encoding intermediate frames.
  virtual Tensor<float> Rollout(const envs::ExperienceBuffer& buffer, std::span<const StepRef> refs,
                                std::size_t horizon) const;
};

class CswmDynamics : public LatentDynamics {
 public:
  explicit CswmDynamics(const models::CswmModel<float>& model) : model_(model) {}
  std::size_t latent_size() const override;
  Tensor<float> EncodeObservations(const Tensor<float>& obs) const override;
  Tensor<float> Step(const Tensor<float>& z, const Tensor<float>& actions) const override;

 private:
  const models::CswmModel<float>& model_;
};

class AeDynamics : public LatentDynamics {
 public:
  explicit AeDynamics(const models::AeModel<float>& model) : model_(model) {}
  std::size_t latent_size() const override;
  Tensor<float> EncodeObservations(const Tensor<float>& obs) const override;
  Tensor<float> Step(const Tensor<float>& z, const Tensor<float>& actions) const override;

 private:
  const models::AeModel<float>& model_;
};

// Reads simulator state instead of pixels and rolls forward by looking up
// the recorded future state: a perfect world model.
class OracleDynamics : public LatentDynamics {
 public:
  std::size_t latent_size() const override { return 0; }
  Tensor<float> EncodeObservations(const Tensor<float>& obs) const override;
  Tensor<float> Step(const Tensor<float>& z, const Tensor<float>& actions) const override;
  Tensor<float> Encode(const envs::ExperienceBuffer& buffer, std::span<const StepRef> refs,
                       std::size_t offset) const override;
  Tensor<float> Rollout(const envs::ExperienceBuffer& buffer, std::span<const StepRef> refs,
                        std::size_t horizon) const override;
};

// z_0 = encode(obs_0); z_t = step(z_{t-1}, a_t). actions[t] is [B, K, 4].
Tensor<float> RolloutLatent(const LatentDynamics& dynamics, const Tensor<float>& obs0,
                            std::span<const Tensor<float>> actions);

struct ReferenceBuffer {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<float> data;  // row-major

  static ReferenceBuffer FromTensor(const Tensor<float>& latents);  // [N, ...] flattened per row
  std::span<const float> row(std::size_t i) const { return {data.data() + i * dim, dim}; }
};

// 1 + number of rows strictly closer (squared Euclidean) to `predicted` than
// row `truth_index`; ties count in favor of the truth.
std::size_t RankOfTruth(std::span<const float> predicted, std::size_t truth_index, const ReferenceBuffer& buffer);

struct HorizonMetrics {
  std::size_t horizon = 0;
  std::size_t samples = 0;
  double hits_at_1 = 0.0;
  double mrr = 0.0;
};

struct MetricsReport {
  std::vector<HorizonMetrics> horizons;
  nlohmann::json provenance = nlohmann::json::object();  // split, seed, config hash

  nlohmann::json ToJson() const;
  std::string ToCsv() const;  // header: horizon,samples,hits_at_1,mrr
};

struct EvalOptions {
  std::vector<std::size_t> horizons = {1, 5, 10};
  std::size_t batch_size = 250;
  unsigned workers = 1;  // scoring threads; results do not depend on it
};

// One query per episode, starting at t = 0; the reference set for horizon T
// is the true step-T latent of every episode.
MetricsReport Evaluate(const LatentDynamics& dynamics, const envs::ExperienceBuffer& buffer,
                       const EvalOptions& options = {});

}  // namespace slotlab::eval
