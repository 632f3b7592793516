#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "slotlab/envs/catalog.hpp"
#include "slotlab/envs/grid_world.hpp"
#include "slotlab/envs/image.hpp"
#include "slotlab/envs/render.hpp"
#include "slotlab/envs/three_body.hpp"

namespace slotlab::envs {

enum class EnvKind : std::uint8_t { kShapes = 0, kBlocks = 1, kThreeBody = 2 };

std::string_view EnvName(EnvKind kind);
EnvKind ParseEnvKind(std::string_view name);  // "shapes" | "blocks" | "three-body"

struct EnvSpec {
  EnvKind kind = EnvKind::kShapes;
  int grid_size = 5;
  AttributeCatalog catalog = DefaultCatalog();
  GravityParams gravity;
  double dt = 0.01;
  BodyView view;

  std::size_t channels() const { return kind == EnvKind::kThreeBody ? 6 : 3; }
  std::size_t image_size() const;
  bool has_actions() const { return kind != EnvKind::kThreeBody; }
};

// Observations and states are aligned: observations[t] renders states[t].
// actions[t] maps step t to step t + 1.
struct Episode {
  std::vector<Image> observations;                 // steps + 1
  std::vector<std::optional<GridAction>> actions;  // steps; nullopt without actions
  std::vector<GridState> grid_states;              // steps + 1, grid environments
  std::vector<BodyState> body_states;              // steps + 1, three-body
  BodyState previous_body_state;                   // state before step 0, three-body

  std::size_t steps() const { return actions.size(); }
};

struct ExperienceBuffer {
  EnvSpec env;
  std::size_t steps = 0;
  Assignment assignment;
  std::string descriptor;  // JSON provenance block (split, seed, config hash)
  std::vector<Episode> episodes;

  std::size_t num_objects() const { return assignment.size(); }
  std::size_t num_transitions() const { return episodes.size() * steps; }
};

Image RenderGridEnv(const EnvSpec& env, const GridState& state);

// One episode from its own seed. Grid environments draw a uniform
// (object, direction) action per step; three-body rolls physics only.
Episode GenerateEpisode(const EnvSpec& env, const Assignment& assignment, std::size_t steps, std::uint64_t seed);

// Episode i uses DeriveSeed(seed, i). Workers only change wall time; the
// buffer is identical for any worker count.
ExperienceBuffer GenerateBuffer(const EnvSpec& env, const Assignment& assignment, std::string descriptor,
                                std::size_t episodes, std::size_t steps, std::uint64_t seed, unsigned workers = 1);

// Re-simulates an episode and throws kContract on any mismatch between
// stored pixels/states and the simulator.
void CheckEpisode(const EnvSpec& env, const Assignment& assignment, const Episode& episode);

}  // namespace slotlab::envs
