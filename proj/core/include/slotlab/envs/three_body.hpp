#pragma once

#include <array>
#include <vector>

#include "slotlab/rng.hpp"

namespace slotlab::envs {

using Vec2 = std::array<double, 2>;

struct Body {
  Vec2 position{};
  Vec2 velocity{};
  double mass = 1.0;
  bool operator==(const Body&) const = default;
};

struct BodyState {
  std::vector<Body> bodies;
  bool operator==(const BodyState&) const = default;
};

struct GravityParams {
  double gravitational_constant = 1.0;
  double softening = 0.1;
};

// Pixel frame for rendering: world square [-half_extent, half_extent]^2 maps
// onto an image_size x image_size raster; x grows with the column, y with the row.
struct BodyView {
  double half_extent = 2.5;
  int image_size = 50;
  double disc_radius = 3.0;  // pixels

  double ToColumn(double x) const { return (x + half_extent) / (2 * half_extent) * image_size; }
  double ToRow(double y) const { return (y + half_extent) / (2 * half_extent) * image_size; }
};

// a_i = sum_{j != i} G m_j (p_j - p_i) / (|p_j - p_i|^2 + eps^2)^{3/2}
std::vector<Vec2> Accelerations(const BodyState& state, const GravityParams& params);

// One kick-drift-kick leapfrog step. Throws kSimulation on non-finite state
// and kContract on dt <= 0.
BodyState ThreeBodyStep(const BodyState& state, double dt, const GravityParams& params = {});

Vec2 TotalMomentum(const BodyState& state);
// Kinetic plus softened (Plummer) potential energy, consistent with the force.
double TotalEnergy(const BodyState& state, const GravityParams& params);

struct BodySamplingOptions {
  std::size_t num_bodies = 3;
  double mass_min = 0.5;
  double mass_max = 1.5;
  double position_extent = 1.2;  // initial positions uniform in [-e, e]^2
  double speed_max = 0.6;
  double min_separation = 0.4;   // over the whole checked horizon
  double frame_margin_pixels = 3.0;
  int max_attempts = 10000;
};

// Rejection-samples an initial state whose trajectory stays inside the view
// (with margin) and keeps bodies separated for `steps` steps of size dt.
// Total momentum is shifted to zero so the system does not drift off-frame.
BodyState SampleBoundedBodies(Rng& rng, std::size_t steps, double dt, const GravityParams& params,
                              const BodyView& view, const BodySamplingOptions& options = {});

}  // namespace slotlab::envs
