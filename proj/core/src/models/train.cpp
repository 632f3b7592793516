#include "slotlab/models/train.hpp"

#include <cmath>
#include <numeric>

#include "slotlab/error.hpp"
#include "slotlab/models/batch.hpp"
#include "slotlab/rng.hpp"

namespace slotlab::models {
namespace {

using nlohmann::json;

json HistoryToJson(const std::vector<EpochRecord>& history) {
  json out = json::array();
  for (const EpochRecord& r : history) out.push_back({{"epoch", r.epoch}, {"loss", r.mean_loss}, {"batches", r.batches}});
  return out;
}

template <typename Model, typename BatchLoss>
TrainReport RunTraining(Model& model, const envs::ExperienceBuffer& buffer, const TrainConfig& config,
                        const std::optional<ResumeState>& resume, const EpochCallback& on_epoch,
                        BatchLoss batch_loss) {
  Require(buffer.num_transitions() > 0, ErrorCategory::kContract, "training buffer is empty");
  Require(config.batch_size > 0, ErrorCategory::kConfig, "batch size must be positive");
  ParameterSet<float>& params = model.params();
  AdamConfig adam_config;
  adam_config.learning_rate = config.learning_rate;
  AdamState adam = resume ? resume->adam : MakeAdamState(params, adam_config);
  adam.config.learning_rate = config.learning_rate;

  TrainReport report;
  if (resume) report.epochs = resume->history;
  const std::vector<StepRef> all = AllSteps(buffer);

  auto save = [&]() {
    if (config.checkpoint_path.empty()) return;
    json extra = {{"epochs_done", report.epochs.size()},
                  {"history", HistoryToJson(report.epochs)},
                  {"train", {{"seed", config.seed}, {"batch_size", config.batch_size},
                             {"learning_rate", config.learning_rate}}},
                  {"provenance", config.provenance}};
    Checkpoint ck = model.ToCheckpoint(extra);
    AppendAdamState(ck, adam, params);
    WriteCheckpoint(config.checkpoint_path, ck);
  };

  for (std::size_t epoch = report.epochs.size(); epoch < config.epochs; ++epoch) {
    Rng rng(DeriveSeed(config.seed, epoch));
    std::vector<StepRef> order = all;
    rng.Shuffle(std::span<StepRef>(order));
    double total = 0.0;
    std::size_t batches = 0;
    try {
      for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
        const std::size_t n = std::min(config.batch_size, order.size() - begin);
        const std::span<const StepRef> refs(order.data() + begin, n);
        std::vector<std::size_t> negatives(n);
        std::iota(negatives.begin(), negatives.end(), std::size_t{0});
        rng.Shuffle(std::span<std::size_t>(negatives));
        const Tensor<float> obs = ObservationBatch<float>(buffer, refs, 0);
        const Tensor<float> next = ObservationBatch<float>(buffer, refs, 1);
        const Tensor<float> actions = ActionBatch<float>(buffer, refs, 0);
        Tape<float> tape;
        Tensor<float> loss;
        {
          TapeScope<float> scope(tape);
          loss = batch_loss(model, obs, actions, next, negatives);
        }
        const double value = loss.item();
        if (!std::isfinite(value)) Fail(ErrorCategory::kNumeric, "non-finite loss");
        tape.Backward(loss);
        AdamStep(params, adam);
        total += value;
        ++batches;
      }
    } catch (const Error& e) {
      if (e.category() != ErrorCategory::kNumeric) throw;
      report.aborted = true;
      report.abort_message = "epoch " + std::to_string(epoch) + ": " + e.what();
      return report;
    }
    const EpochRecord record{epoch, total / static_cast<double>(batches), batches};
    report.epochs.push_back(record);
    if (on_epoch) on_epoch(record);
    const bool last = epoch + 1 == config.epochs;
    if (last || (config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0)) save();
  }
  return report;
}

}  // namespace

TrainReport TrainCswm(CswmModel<float>& model, const envs::ExperienceBuffer& buffer, const TrainConfig& config,
                      const std::optional<ResumeState>& resume, const EpochCallback& on_epoch) {
  Require(buffer.num_objects() == model.config().num_slots, ErrorCategory::kConfig,
          "buffer object count differs from the model's slot count");
  return RunTraining(model, buffer, config, resume, on_epoch,
                     [](const CswmModel<float>& m, const Tensor<float>& obs, const Tensor<float>& actions,
                        const Tensor<float>& next, const std::vector<std::size_t>& negatives) {
                       return CswmBatchLoss(m, obs, actions, next, negatives);
                     });
}

TrainReport TrainAe(AeModel<float>& model, const envs::ExperienceBuffer& buffer, const TrainConfig& config,
                    const std::optional<ResumeState>& resume, const EpochCallback& on_epoch) {
  Require(buffer.num_objects() == model.config().num_slots, ErrorCategory::kConfig,
          "buffer object count differs from the model's slot count");
  return RunTraining(model, buffer, config, resume, on_epoch,
                     [](const AeModel<float>& m, const Tensor<float>& obs, const Tensor<float>& actions,
                        const Tensor<float>& next, const std::vector<std::size_t>&) {
                       return AeBatchLoss(m, obs, actions, next);
                     });
}

json CheckpointPreamble(const Checkpoint& checkpoint) {
  try {
    return json::parse(checkpoint.preamble);
  } catch (const json::exception& e) {
    Fail(ErrorCategory::kFormat, std::string("checkpoint preamble is not JSON: ") + e.what());
  }
}

std::string CheckpointModelKind(const Checkpoint& checkpoint) {
  const json pre = CheckpointPreamble(checkpoint);
  const std::string kind = pre.value("model", "");
  if (kind != "cswm" && kind != "ae") Fail(ErrorCategory::kFormat, "checkpoint names no known model");
  return kind;
}

ResumeState ReadResumeState(const Checkpoint& checkpoint, const ParameterSet<float>& params, double learning_rate) {
  const json pre = CheckpointPreamble(checkpoint);
  ResumeState state;
  AdamConfig config;
  config.learning_rate = learning_rate;
  state.adam = LoadAdamState(checkpoint, params, config);
  try {
    for (const json& r : pre.at("extra").at("history")) {
      state.history.push_back({r.at("epoch").get<std::size_t>(), r.at("loss").get<double>(),
                               r.at("batches").get<std::size_t>()});
    }
  } catch (const json::exception& e) {
    Fail(ErrorCategory::kFormat, std::string("checkpoint carries no training history: ") + e.what());
  }
  return state;
}

}  // namespace slotlab::models
