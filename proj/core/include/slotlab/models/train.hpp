#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "slotlab/checkpoint.hpp"
#include "slotlab/envs/buffer.hpp"
#include "slotlab/models/autoencoder.hpp"
#include "slotlab/models/cswm.hpp"

namespace slotlab::models {

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 512;
  double learning_rate = 5e-4;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 10;  // epochs; 0 writes only the final checkpoint
  std::string checkpoint_path;        // empty disables checkpoint files
  nlohmann::json provenance = nlohmann::json::object();  // copied into every checkpoint
};

struct EpochRecord {
  std::size_t epoch = 0;  // 0-based
  double mean_loss = 0.0;
  std::size_t batches = 0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;  // includes epochs restored from a resume
  bool aborted = false;
  std::string abort_message;
  std::size_t epochs_done() const { return epochs.size(); }
};

// Optimizer and progress restored from a checkpoint.
struct ResumeState {
  AdamState adam;
  std::vector<EpochRecord> history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Epoch e shuffles with DeriveSeed(seed, e) and draws each batch's negative
// permutation from the same stream, so a resumed run reproduces an
// uninterrupted one exactly. A non-finite loss aborts the run, leaving the
// last written checkpoint in place.
TrainReport TrainCswm(CswmModel<float>& model, const envs::ExperienceBuffer& buffer, const TrainConfig& config,
                      const std::optional<ResumeState>& resume = std::nullopt, const EpochCallback& on_epoch = {});
TrainReport TrainAe(AeModel<float>& model, const envs::ExperienceBuffer& buffer, const TrainConfig& config,
                    const std::optional<ResumeState>& resume = std::nullopt, const EpochCallback& on_epoch = {});

// Reads the optimizer state and loss history a training checkpoint carries.
ResumeState ReadResumeState(const Checkpoint& checkpoint, const ParameterSet<float>& params, double learning_rate);

// "cswm" or "ae", from the checkpoint preamble.
std::string CheckpointModelKind(const Checkpoint& checkpoint);
nlohmann::json CheckpointPreamble(const Checkpoint& checkpoint);

}  // namespace slotlab::models
