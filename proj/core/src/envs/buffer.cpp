#include "slotlab/envs/buffer.hpp"

#include <algorithm>
#include <atomic>
#include <thread>

#include "slotlab/error.hpp"
#include "slotlab/rng.hpp"

namespace slotlab::envs {

std::string_view EnvName(EnvKind kind) {
  switch (kind) {
    case EnvKind::kShapes: return "shapes";
    case EnvKind::kBlocks: return "blocks";
    case EnvKind::kThreeBody: return "three-body";
  }
  return "unknown";
}

EnvKind ParseEnvKind(std::string_view name) {
  if (name == "shapes") return EnvKind::kShapes;
  if (name == "blocks") return EnvKind::kBlocks;
  if (name == "three-body") return EnvKind::kThreeBody;
  Fail(ErrorCategory::kConfig, "unknown environment '" + std::string(name) + "'");
}

std::size_t EnvSpec::image_size() const {
  switch (kind) {
    case EnvKind::kShapes: return static_cast<std::size_t>(grid_size) * kCellPixels;
    case EnvKind::kBlocks: return static_cast<std::size_t>(IsoGeometry{}.image_size);
    case EnvKind::kThreeBody: return static_cast<std::size_t>(view.image_size);
  }
  return 0;
}

Image RenderGridEnv(const EnvSpec& env, const GridState& state) {
  if (env.kind == EnvKind::kBlocks) return RenderBlocksIso(state, env.catalog);
  return RenderGrid(state, env.catalog);
}

namespace {

std::vector<Rgb> BodyColors(const EnvSpec& env, const Assignment& assignment) {
  std::vector<Rgb> colors;
  for (const AttributePair& a : assignment) {
    if (a.color < 0 || a.color >= static_cast<int>(env.catalog.num_colors())) {
      Fail(ErrorCategory::kCatalog, "body color id outside catalog");
    }
    colors.push_back(env.catalog.colors[a.color]);
  }
  return colors;
}

}  // namespace

Episode GenerateEpisode(const EnvSpec& env, const Assignment& assignment, std::size_t steps, std::uint64_t seed) {
  Rng rng(seed);
  Episode ep;
  if (env.kind == EnvKind::kThreeBody) {
    const std::vector<Rgb> colors = BodyColors(env, assignment);
    BodySamplingOptions options;
    options.num_bodies = assignment.size();
    ep.previous_body_state = SampleBoundedBodies(rng, steps + 1, env.dt, env.gravity, env.view, options);
    BodyState previous = ep.previous_body_state;
    BodyState current = ThreeBodyStep(previous, env.dt, env.gravity);
    for (std::size_t t = 0; t <= steps; ++t) {
      ep.observations.push_back(RenderBodies(current, previous, colors, env.view));
      ep.body_states.push_back(current);
      if (t == steps) break;
      ep.actions.push_back(std::nullopt);
      previous = current;
      current = ThreeBodyStep(current, env.dt, env.gravity);
    }
    return ep;
  }
  GridState state = GridReset(rng, env.grid_size, env.catalog, assignment);
  ep.grid_states.push_back(state);
  ep.observations.push_back(RenderGridEnv(env, state));
  for (std::size_t t = 0; t < steps; ++t) {
    GridAction action;
    action.object = rng.UniformInt(assignment.size());
    action.direction = static_cast<Direction>(rng.UniformInt(kNumDirections));
    state = GridStep(state, action);
    ep.actions.push_back(action);
    ep.grid_states.push_back(state);
    ep.observations.push_back(RenderGridEnv(env, state));
  }
  return ep;
}

ExperienceBuffer GenerateBuffer(const EnvSpec& env, const Assignment& assignment, std::string descriptor,
                                std::size_t episodes, std::size_t steps, std::uint64_t seed, unsigned workers) {
  ValidateCatalog(env.catalog);
  if (assignment.empty()) Fail(ErrorCategory::kContract, "assignment has no objects");
  ExperienceBuffer buffer;
  buffer.env = env;
  buffer.steps = steps;
  buffer.assignment = assignment;
  buffer.descriptor = std::move(descriptor);
  buffer.episodes.resize(episodes);
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(episodes, 1))));
  if (workers == 1) {
    for (std::size_t i = 0; i < episodes; ++i) {
      buffer.episodes[i] = GenerateEpisode(env, assignment, steps, DeriveSeed(seed, i));
    }
    return buffer;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      (void)w;
      for (std::size_t i = next++; i < episodes && !failed; i = next++) {
        try {
          buffer.episodes[i] = GenerateEpisode(env, assignment, steps, DeriveSeed(seed, i));
        } catch (...) {
          if (!failed.exchange(true)) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return buffer;
}

void CheckEpisode(const EnvSpec& env, const Assignment& assignment, const Episode& episode) {
  const std::size_t steps = episode.steps();
  if (episode.observations.size() != steps + 1) Fail(ErrorCategory::kContract, "episode: observation count");
  if (env.kind == EnvKind::kThreeBody) {
    const std::vector<Rgb> colors = BodyColors(env, assignment);
    if (episode.body_states.size() != steps + 1) Fail(ErrorCategory::kContract, "episode: state count");
    BodyState previous = episode.previous_body_state;
    for (std::size_t t = 0; t <= steps; ++t) {
      const BodyState expected = ThreeBodyStep(previous, env.dt, env.gravity);
      if (!(expected == episode.body_states[t])) Fail(ErrorCategory::kContract, "episode: body state diverges");
      if (!(RenderBodies(expected, previous, colors, env.view) == episode.observations[t])) {
        Fail(ErrorCategory::kContract, "episode: observation is not render(state)");
      }
      previous = expected;
    }
    return;
  }
  if (episode.grid_states.size() != steps + 1) Fail(ErrorCategory::kContract, "episode: state count");
  for (std::size_t t = 0; t <= steps; ++t) {
    if (!(RenderGridEnv(env, episode.grid_states[t]) == episode.observations[t])) {
      Fail(ErrorCategory::kContract, "episode: observation is not render(state)");
    }
    if (t < steps) {
      if (!episode.actions[t]) Fail(ErrorCategory::kContract, "episode: grid step without action");
      if (!(GridStep(episode.grid_states[t], *episode.actions[t]) == episode.grid_states[t + 1])) {
        Fail(ErrorCategory::kContract, "episode: next state is not step(state, action)");
      }
    }
  }
}

}  // namespace slotlab::envs
