#include "slotlab/eval.hpp"

#include <algorithm>
#include <sstream>
#include <thread>

#include "slotlab/error.hpp"

namespace slotlab::eval {

using nlohmann::json;

Tensor<float> LatentDynamics::Encode(const envs::ExperienceBuffer& buffer, std::span<const StepRef> refs,
                                     std::size_t offset) const {
  return EncodeObservations(models::ObservationBatch<float>(buffer, refs, offset));
}

Tensor<float> LatentDynamics::Rollout(const envs::ExperienceBuffer& buffer, std::span<const StepRef> refs,
                                      std::size_t horizon) const {
  Tensor<float> z = Encode(buffer, refs, 0);
  for (std::size_t t = 0; t < horizon; ++t) z = Step(z, models::ActionBatch<float>(buffer, refs, t));
  return z;
}

std::size_t CswmDynamics::latent_size() const {
  return model_.config().num_slots * model_.config().latent_dim;
}

Tensor<float> CswmDynamics::EncodeObservations(const Tensor<float>& obs) const {
  NoGradScope<float> no_grad;
  const Tensor<float> z = model_.Encode(obs);
  return Reshape(z, {z.dim(0), latent_size()});
}

Tensor<float> CswmDynamics::Step(const Tensor<float>& z, const Tensor<float>& actions) const {
  NoGradScope<float> no_grad;
  const auto& c = model_.config();
  const Tensor<float> slots = Reshape(z, {z.dim(0), c.num_slots, c.latent_dim});
  return Reshape(Add(slots, model_.Transition(slots, actions)), z.shape());
}

std::size_t AeDynamics::latent_size() const { return model_.config().flat_latent(); }

Tensor<float> AeDynamics::EncodeObservations(const Tensor<float>& obs) const {
  NoGradScope<float> no_grad;
  return model_.Encode(obs);
}

Tensor<float> AeDynamics::Step(const Tensor<float>& z, const Tensor<float>& actions) const {
  NoGradScope<float> no_grad;
  return Add(z, model_.Transition(z, actions));
}

Tensor<float> OracleDynamics::EncodeObservations(const Tensor<float>&) const {
  Fail(ErrorCategory::kUnsupported, "the oracle reads simulator state, not pixels");
}

Tensor<float> OracleDynamics::Step(const Tensor<float>&, const Tensor<float>&) const {
  Fail(ErrorCategory::kUnsupported, "the oracle has no latent transition of its own");
}

Tensor<float> OracleDynamics::Encode(const envs::ExperienceBuffer& buffer, std::span<const StepRef> refs,
                                     std::size_t offset) const {
  std::vector<float> values;
  std::size_t width = 0;
  for (const StepRef& ref : refs) {
    const envs::Episode& ep = buffer.episodes.at(ref.episode);
    const std::size_t t = ref.step + offset;
    const std::size_t before = values.size();
    if (!ep.grid_states.empty()) {
      const envs::GridState& s = ep.grid_states.at(t);
      for (std::size_t k = 0; k < s.positions.size(); ++k) {
        values.insert(values.end(), {static_cast<float>(s.positions[k].row), static_cast<float>(s.positions[k].col),
                                     static_cast<float>(s.attributes[k].shape),
                                     static_cast<float>(s.attributes[k].color)});
      }
    } else {
      for (const envs::Body& b : ep.body_states.at(t).bodies) {
        values.insert(values.end(), {static_cast<float>(b.position[0]), static_cast<float>(b.position[1]),
                                     static_cast<float>(b.velocity[0]), static_cast<float>(b.velocity[1])});
      }
    }
    width = values.size() - before;
  }
  return Tensor<float>({refs.size(), width}, std::move(values));
}

Tensor<float> OracleDynamics::Rollout(const envs::ExperienceBuffer& buffer, std::span<const StepRef> refs,
                                      std::size_t horizon) const {
  return Encode(buffer, refs, horizon);
}

Tensor<float> RolloutLatent(const LatentDynamics& dynamics, const Tensor<float>& obs0,
                            std::span<const Tensor<float>> actions) {
  Require(!actions.empty(), ErrorCategory::kContract, "rollout needs at least one action step");
  Tensor<float> z = dynamics.EncodeObservations(obs0);
  for (const Tensor<float>& a : actions) {
    Require(a.rank() == 3 && a.dim(0) == z.dim(0), ErrorCategory::kDimension,
            "rollout actions must be [B,K,4] with the observation batch size");
    z = dynamics.Step(z, a);
  }
  return z;
}

ReferenceBuffer ReferenceBuffer::FromTensor(const Tensor<float>& latents) {
  Require(latents.rank() >= 1, ErrorCategory::kDimension, "reference latents need a leading row axis");
  ReferenceBuffer buffer;
  buffer.rows = latents.dim(0);
  buffer.dim = buffer.rows == 0 ? 0 : latents.size() / buffer.rows;
  buffer.data.assign(latents.data().begin(), latents.data().end());
  return buffer;
}

namespace {

double SquaredDistance(std::span<const float> a, std::span<const float> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    d += diff * diff;
  }
  return d;
}

}  // namespace

std::size_t RankOfTruth(std::span<const float> predicted, std::size_t truth_index, const ReferenceBuffer& buffer) {
  Require(buffer.rows > 0, ErrorCategory::kContract, "reference buffer is empty");
  Require(truth_index < buffer.rows, ErrorCategory::kContract, "truth index outside the reference buffer");
  Require(predicted.size() == buffer.dim, ErrorCategory::kDimension, "query width differs from the reference rows");
  const double truth = SquaredDistance(predicted, buffer.row(truth_index));
  std::size_t closer = 0;
  for (std::size_t r = 0; r < buffer.rows; ++r) {
    if (r != truth_index && SquaredDistance(predicted, buffer.row(r)) < truth) ++closer;
  }
  return closer + 1;
}

json MetricsReport::ToJson() const {
  json rows = json::array();
  for (const HorizonMetrics& h : horizons) {
    rows.push_back({{"horizon", h.horizon}, {"samples", h.samples}, {"hits_at_1", h.hits_at_1}, {"mrr", h.mrr}});
  }
  return {{"horizons", rows}, {"provenance", provenance}};
}

std::string MetricsReport::ToCsv() const {
  std::ostringstream out;
  out.precision(17);
  out << "horizon,samples,hits_at_1,mrr\n";
  for (const HorizonMetrics& h : horizons) {
    out << h.horizon << ',' << h.samples << ',' << h.hits_at_1 << ',' << h.mrr << '\n';
  }
  return out.str();
}

MetricsReport Evaluate(const LatentDynamics& dynamics, const envs::ExperienceBuffer& buffer,
                       const EvalOptions& options) {
  Require(!buffer.episodes.empty(), ErrorCategory::kContract, "evaluation buffer is empty");
  Require(options.batch_size > 0, ErrorCategory::kConfig, "evaluation batch size must be positive");
  std::vector<StepRef> starts;
  for (std::size_t e = 0; e < buffer.episodes.size(); ++e) starts.push_back({e, 0});

  auto batched = [&](auto&& fn) {
    std::vector<float> rows;
    std::size_t width = 0;
    for (std::size_t begin = 0; begin < starts.size(); begin += options.batch_size) {
      const std::size_t n = std::min(options.batch_size, starts.size() - begin);
      const Tensor<float> part = fn(std::span<const StepRef>(starts.data() + begin, n));
      width = part.size() / n;
      rows.insert(rows.end(), part.data().begin(), part.data().end());
    }
    return Tensor<float>({starts.size(), width}, std::move(rows));
  };

  MetricsReport report;
  for (std::size_t horizon : options.horizons) {
    if (horizon < 1 || horizon > buffer.steps) {
      Fail(ErrorCategory::kContract, "horizon " + std::to_string(horizon) + " exceeds the episode length " +
                                         std::to_string(buffer.steps));
    }
    const ReferenceBuffer reference = ReferenceBuffer::FromTensor(
        batched([&](std::span<const StepRef> refs) { return dynamics.Encode(buffer, refs, horizon); }));
    const ReferenceBuffer predicted = ReferenceBuffer::FromTensor(
        batched([&](std::span<const StepRef> refs) { return dynamics.Rollout(buffer, refs, horizon); }));

    std::vector<std::size_t> ranks(starts.size());
    const unsigned workers = std::max(1u, options.workers);
    auto score = [&](std::size_t w) {
      for (std::size_t q = w; q < starts.size(); q += workers) ranks[q] = RankOfTruth(predicted.row(q), q, reference);
    };
    if (workers == 1) {
      score(0);
    } else {
      std::vector<std::thread> pool;
      for (unsigned w = 0; w < workers; ++w) pool.emplace_back(score, w);
      for (std::thread& t : pool) t.join();
    }
    HorizonMetrics m;
    m.horizon = horizon;
    m.samples = starts.size();
    for (std::size_t r : ranks) {
      m.hits_at_1 += r == 1 ? 1.0 : 0.0;
      m.mrr += 1.0 / static_cast<double>(r);
    }
    m.hits_at_1 /= static_cast<double>(m.samples);
    m.mrr /= static_cast<double>(m.samples);
    report.horizons.push_back(m);
  }
  return report;
}

}  // namespace slotlab::eval
