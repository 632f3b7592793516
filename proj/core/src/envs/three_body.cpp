#include "slotlab/envs/three_body.hpp"

#include <cmath>

#include "slotlab/error.hpp"

namespace slotlab::envs {
namespace {

void CheckFinite(const BodyState& state) {
  for (const Body& b : state.bodies) {
    for (double v : {b.position[0], b.position[1], b.velocity[0], b.velocity[1], b.mass}) {
      if (!std::isfinite(v)) Fail(ErrorCategory::kSimulation, "non-finite body state");
    }
    if (!(b.mass > 0)) Fail(ErrorCategory::kSimulation, "body mass must be positive");
  }
}

}  // namespace

std::vector<Vec2> Accelerations(const BodyState& state, const GravityParams& params) {
  const std::size_t n = state.bodies.size();
  std::vector<Vec2> acc(n, Vec2{0.0, 0.0});
  const double eps2 = params.softening * params.softening;
  // Pairwise loop applies equal and opposite contributions, so the momentum
  // change sums to zero up to rounding.
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = state.bodies[j].position[0] - state.bodies[i].position[0];
      const double dy = state.bodies[j].position[1] - state.bodies[i].position[1];
      const double r2 = dx * dx + dy * dy + eps2;
      const double inv_r3 = params.gravitational_constant / (r2 * std::sqrt(r2));
      const double fx = dx * inv_r3, fy = dy * inv_r3;
      acc[i][0] += state.bodies[j].mass * fx;
      acc[i][1] += state.bodies[j].mass * fy;
      acc[j][0] -= state.bodies[i].mass * fx;
      acc[j][1] -= state.bodies[i].mass * fy;
    }
  }
  return acc;
}

BodyState ThreeBodyStep(const BodyState& state, double dt, const GravityParams& params) {
  if (!(dt > 0)) Fail(ErrorCategory::kContract, "dt must be positive");
  CheckFinite(state);
  BodyState next = state;
  auto acc = Accelerations(next, params);
  for (std::size_t i = 0; i < next.bodies.size(); ++i) {
    for (int d = 0; d < 2; ++d) next.bodies[i].velocity[d] += 0.5 * dt * acc[i][d];
  }
  for (Body& b : next.bodies) {
    for (int d = 0; d < 2; ++d) b.position[d] += dt * b.velocity[d];
  }
  acc = Accelerations(next, params);
  for (std::size_t i = 0; i < next.bodies.size(); ++i) {
    for (int d = 0; d < 2; ++d) next.bodies[i].velocity[d] += 0.5 * dt * acc[i][d];
  }
  CheckFinite(next);
  return next;
}

Vec2 TotalMomentum(const BodyState& state) {
  Vec2 p{0.0, 0.0};
  for (const Body& b : state.bodies) {
    p[0] += b.mass * b.velocity[0];
    p[1] += b.mass * b.velocity[1];
  }
  return p;
}

double TotalEnergy(const BodyState& state, const GravityParams& params) {
  double kinetic = 0, potential = 0;
  const double eps2 = params.softening * params.softening;
  const auto& bs = state.bodies;
  for (std::size_t i = 0; i < bs.size(); ++i) {
    kinetic += 0.5 * bs[i].mass * (bs[i].velocity[0] * bs[i].velocity[0] + bs[i].velocity[1] * bs[i].velocity[1]);
    for (std::size_t j = i + 1; j < bs.size(); ++j) {
      const double dx = bs[j].position[0] - bs[i].position[0];
      const double dy = bs[j].position[1] - bs[i].position[1];
      potential -= params.gravitational_constant * bs[i].mass * bs[j].mass / std::sqrt(dx * dx + dy * dy + eps2);
    }
  }
  return kinetic + potential;
}

BodyState SampleBoundedBodies(Rng& rng, std::size_t steps, double dt, const GravityParams& params,
                              const BodyView& view, const BodySamplingOptions& options) {
  const double limit_px = options.frame_margin_pixels + view.disc_radius;
  auto in_frame = [&](const Body& b) {
    const double col = view.ToColumn(b.position[0]), row = view.ToRow(b.position[1]);
    return col >= limit_px && row >= limit_px && col <= view.image_size - limit_px &&
           row <= view.image_size - limit_px;
  };
  auto separated = [&](const BodyState& s) {
    for (std::size_t i = 0; i < s.bodies.size(); ++i) {
      for (std::size_t j = i + 1; j < s.bodies.size(); ++j) {
        const double dx = s.bodies[i].position[0] - s.bodies[j].position[0];
        const double dy = s.bodies[i].position[1] - s.bodies[j].position[1];
        if (dx * dx + dy * dy < options.min_separation * options.min_separation) return false;
      }
    }
    return true;
  };
  for (int attempt = 0; attempt < options.max_attempts; ++attempt) {
    BodyState s;
    double total_mass = 0;
    for (std::size_t i = 0; i < options.num_bodies; ++i) {
      Body b;
      b.mass = rng.Uniform(options.mass_min, options.mass_max);
      b.position = {rng.Uniform(-options.position_extent, options.position_extent),
                    rng.Uniform(-options.position_extent, options.position_extent)};
      b.velocity = {rng.Uniform(-options.speed_max, options.speed_max),
                    rng.Uniform(-options.speed_max, options.speed_max)};
      total_mass += b.mass;
      s.bodies.push_back(b);
    }
    const Vec2 p = TotalMomentum(s);
    Vec2 com{0.0, 0.0};
    for (Body& b : s.bodies) {
      b.velocity[0] -= p[0] / total_mass;
      b.velocity[1] -= p[1] / total_mass;
      com[0] += b.mass * b.position[0] / total_mass;
      com[1] += b.mass * b.position[1] / total_mass;
    }
    for (Body& b : s.bodies) {
      b.position[0] -= com[0];
      b.position[1] -= com[1];
    }
    bool ok = true;
    BodyState probe = s;
    for (std::size_t t = 0; t <= steps && ok; ++t) {
      for (const Body& b : probe.bodies) ok = ok && in_frame(b);
      ok = ok && separated(probe);
      if (ok && t < steps) probe = ThreeBodyStep(probe, dt, params);
    }
    if (ok) return s;
  }
  Fail(ErrorCategory::kSimulation, "could not sample a bounded body configuration");
}

}  // namespace slotlab::envs
