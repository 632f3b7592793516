#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <numbers>
#include <set>

#include "slotlab/envs/buffer.hpp"
#include "slotlab/envs/dataset_io.hpp"
#include "slotlab/envs/grid_world.hpp"
#include "slotlab/envs/render.hpp"
#include "slotlab/envs/three_body.hpp"
#include "slotlab/error.hpp"
#include "slotlab/rng.hpp"

namespace slotlab::envs {
namespace {

Assignment Diagonal(int k) {
  Assignment a;
  for (int i = 0; i < k; ++i) a.push_back({i % 6, i % 6});
  return a;
}

GridState Make(int grid, std::vector<Cell> cells) {
  GridState s;
  s.grid_size = grid;
  s.positions = std::move(cells);
  s.attributes = Diagonal(static_cast<int>(s.positions.size()));
  return s;
}

TEST(GridReset, DistinctCellsInsideGrid) {
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const GridState s = GridReset(rng, 5, DefaultCatalog(), Diagonal(5));
    std::set<std::pair<int, int>> seen;
    for (const Cell& c : s.positions) {
      EXPECT_TRUE(c.row >= 0 && c.row < 5 && c.col >= 0 && c.col < 5);
      seen.insert({c.row, c.col});
    }
    EXPECT_EQ(seen.size(), 5u);
  }
}

TEST(GridReset, FullGridAndCapacity) {
  Rng rng(2);
  AttributeCatalog big = DefaultCatalog();
  Assignment many(25, AttributePair{0, 0});
  const GridState full = GridReset(rng, 5, big, many);
  std::set<std::pair<int, int>> seen;
  for (const Cell& c : full.positions) seen.insert({c.row, c.col});
  EXPECT_EQ(seen.size(), 25u);
  Assignment too_many(26, AttributePair{0, 0});
  try {
    GridReset(rng, 5, big, too_many);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::kCapacity);
  }
}

TEST(GridReset, OccupancyIsUniform) {
  Rng rng(3);
  const int draws = 10000;
  std::vector<int> count(25, 0);
  for (int i = 0; i < draws; ++i) {
    for (const Cell& c : GridReset(rng, 5, DefaultCatalog(), Diagonal(5)).positions) ++count[c.row * 5 + c.col];
  }
  // Each cell is occupied with probability 5/25 per reset.
  const double p = 0.2, expected = draws * p, se = std::sqrt(draws * p * (1 - p));
  double chi2 = 0;
  for (int c : count) {
    EXPECT_LE(std::abs(c - expected), 3 * se);
    chi2 += (c - expected) * (c - expected) / expected;
  }
  // 24 degrees of freedom; 99.9th percentile is about 51.2.
  EXPECT_LT(chi2, 51.2);
}

TEST(GridStep, Examples) {
  GridState top = Make(5, {{0, 2}});
  EXPECT_EQ(GridStep(top, {0, Direction::kUp}), top);
  GridState pair = Make(5, {{2, 2}, {2, 3}});
  EXPECT_EQ(GridStep(pair, {0, Direction::kRight}), pair);
  GridState alone = Make(5, {{2, 2}});
  EXPECT_EQ(GridStep(alone, {0, Direction::kRight}).positions[0], (Cell{2, 3}));
  EXPECT_EQ(GridStep(alone, {0, Direction::kUp}).positions[0], (Cell{1, 2}));
}

// Every state of two objects on a 3x3 grid against a hand-written table.
TEST(GridStep, ExhaustiveTwoObjectsThreeByThree) {
  const int dr[4] = {-1, 1, 0, 0};
  const int dc[4] = {0, 0, -1, 1};
  int checked = 0;
  for (int a = 0; a < 9; ++a) {
    for (int b = 0; b < 9; ++b) {
      if (a == b) continue;
      const GridState s = Make(3, {{a / 3, a % 3}, {b / 3, b % 3}});
      for (std::size_t obj = 0; obj < 2; ++obj) {
        for (int d = 0; d < 4; ++d) {
          const Cell from = s.positions[obj], other = s.positions[1 - obj];
          const Cell to{from.row + dr[d], from.col + dc[d]};
          const bool legal = to.row >= 0 && to.row < 3 && to.col >= 0 && to.col < 3 && !(to == other);
          GridState want = s;
          if (legal) want.positions[obj] = to;
          const GridState got = GridStep(s, {obj, static_cast<Direction>(d)});
          EXPECT_EQ(got, want) << "a=" << a << " b=" << b << " obj=" << obj << " d=" << d;
          EXPECT_NE(got.positions[0], got.positions[1]);
          EXPECT_EQ(got == s, !legal);
          ++checked;
        }
      }
    }
  }
  EXPECT_EQ(checked, 72 * 8);
}

TEST(EncodeAction, OneHotLayout) {
  const std::vector<float> v = EncodeAction(GridAction{2, Direction::kDown}, 5);
  ASSERT_EQ(v.size(), 20u);
  for (std::size_t i = 0; i < 20; ++i) EXPECT_EQ(v[i], i == 9 ? 1.0f : 0.0f);
  const std::vector<float> none = EncodeAction(std::nullopt, 3);
  EXPECT_EQ(none, std::vector<float>(12, 0.0f));
  try {
    EncodeAction(GridAction{5, Direction::kUp}, 5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::kContract);
  }
  for (std::size_t k = 0; k < 5; ++k) {
    for (int d = 0; d < 4; ++d) {
      const auto e = EncodeAction(GridAction{k, static_cast<Direction>(d)}, 5);
      float l1 = 0;
      for (float x : e) l1 += std::abs(x);
      EXPECT_EQ(l1, 1.0f);
    }
  }
}

TEST(RenderGrid, EmptyAndSingleSquare) {
  GridState empty = Make(5, {});
  const Image blank = RenderGrid(empty, DefaultCatalog());
  ASSERT_EQ(blank.pixels.size(), 50u * 50 * 3);
  for (auto p : blank.pixels) EXPECT_EQ(p, 0);
  GridState one = Make(5, {{0, 0}});
  one.attributes = {{0, 0}};  // square, red
  const Image img = RenderGrid(one, DefaultCatalog());
  for (std::size_t r = 0; r < 50; ++r) {
    for (std::size_t c = 0; c < 50; ++c) {
      const bool inside = r < 10 && c < 10;
      EXPECT_EQ(img.at(r, c, 0), inside ? 255 : 0);
      EXPECT_EQ(img.at(r, c, 1), 0);
      EXPECT_EQ(img.at(r, c, 2), 0);
    }
  }
}

TEST(RenderGrid, MoveChangesExactlyTwoBlocks) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    GridState s = GridReset(rng, 5, DefaultCatalog(), Diagonal(5));
    const std::size_t obj = rng.UniformInt(5);
    GridState t = GridStep(s, {obj, static_cast<Direction>(rng.UniformInt(4))});
    if (t == s) continue;
    const Image a = RenderGrid(s, DefaultCatalog()), b = RenderGrid(t, DefaultCatalog());
    const Cell from = s.positions[obj], to = t.positions[obj];
    bool from_changed = false, to_changed = false;
    for (std::size_t r = 0; r < 50; ++r) {
      for (std::size_t c = 0; c < 50; ++c) {
        bool diff = false;
        for (std::size_t ch = 0; ch < 3; ++ch) diff = diff || a.at(r, c, ch) != b.at(r, c, ch);
        const Cell cell{static_cast<int>(r / 10), static_cast<int>(c / 10)};
        if (diff) {
          EXPECT_TRUE(cell == from || cell == to);
          from_changed = from_changed || cell == from;
          to_changed = to_changed || cell == to;
        }
      }
    }
    EXPECT_TRUE(from_changed && to_changed);
  }
}

TEST(RenderGrid, UnknownColorIsCatalogError) {
  GridState s = Make(5, {{1, 1}});
  s.attributes = {{0, 17}};
  try {
    RenderGrid(s, DefaultCatalog());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::kCatalog);
  }
}

// Independent ray caster: each pixel is a view ray through (row, col, lift)
// space; the nearest cube hit along the ray and the slab it exits through
// give the visible object and face.
IsoLabels RayCast(const GridState& s, const IsoGeometry& g) {
  const std::size_t n = static_cast<std::size_t>(g.image_size) * g.image_size;
  IsoLabels out{std::vector<int>(n, -1), std::vector<CubeFace>(n, CubeFace::kTop)};
  for (int y = 0; y < g.image_size; ++y) {
    for (int x = 0; x < g.image_size; ++x) {
      // Ray: row = t, col = col0 + t, lift = lift0 + 2 * unit_y * t; larger t is nearer.
      const double col0 = (x + 0.5 - g.origin_x) / g.unit_x;
      const double lift0 = g.origin_y + g.unit_y * col0 - (y + 0.5);
      double best = -1e18;
      for (std::size_t k = 0; k < s.num_objects(); ++k) {
        const double r = s.positions[k].row, c = s.positions[k].col;
        const double lo[3] = {r, c - col0, (0 - lift0) / (2 * g.unit_y)};
        const double hi[3] = {r + 1, c + 1 - col0, (g.cube_height - lift0) / (2 * g.unit_y)};
        const double t_in = std::max({lo[0], lo[1], lo[2]});
        int exit_slab = 0;
        for (int i = 1; i < 3; ++i) {
          if (hi[i] < hi[exit_slab]) exit_slab = i;
        }
        const double t_out = hi[exit_slab];
        if (t_in >= t_out || t_out <= best) continue;
        best = t_out;
        out.object[y * g.image_size + x] = static_cast<int>(k);
        out.face[y * g.image_size + x] = exit_slab == 0 ? CubeFace::kLeft : exit_slab == 1 ? CubeFace::kRight : CubeFace::kTop;
      }
    }
  }
  return out;
}

TEST(RenderBlocks, MatchesRayCastOracle) {
  Rng rng(5);
  const IsoGeometry g;
  for (int trial = 0; trial < 200; ++trial) {
    const GridState s = GridReset(rng, 5, DefaultCatalog(), Diagonal(5));
    const IsoLabels want = RayCast(s, g);
    const IsoLabels got = RasterizeBlocksIso(s, g);
    ASSERT_EQ(got.object, want.object) << "trial " << trial;
    for (std::size_t p = 0; p < got.object.size(); ++p) {
      if (got.object[p] >= 0) ASSERT_EQ(got.face[p], want.face[p]) << "pixel " << p;
    }
  }
}

TEST(RenderBlocks, SingleCubeShowsThreeShades) {
  GridState s = Make(5, {{2, 2}});
  s.attributes = {{0, 0}};
  const Image img = RenderBlocksIso(s, DefaultCatalog());
  std::set<int> reds;
  for (std::size_t p = 0; p < 50 * 50; ++p) {
    if (img.pixels[p * 3] > 0) reds.insert(img.pixels[p * 3]);
    EXPECT_EQ(img.pixels[p * 3 + 1], 0);
  }
  EXPECT_EQ(reds, (std::set<int>{ToByte(1.0), ToByte(0.75), ToByte(0.5)}));
}

TEST(RenderBlocks, NearerCubeOccludes) {
  GridState s = Make(5, {{1, 1}, {2, 2}});
  const IsoLabels both = RasterizeBlocksIso(s);
  const IsoLabels back = RasterizeBlocksIso(Make(5, {{1, 1}}));
  std::size_t hidden = 0;
  for (std::size_t p = 0; p < both.object.size(); ++p) {
    if (back.object[p] == 0 && both.object[p] == 1) ++hidden;
    if (both.object[p] == 0) EXPECT_EQ(back.object[p], 0);
  }
  EXPECT_GT(hidden, 0u);
}

TEST(ThreeBody, MirrorSymmetricMomentumStaysZero) {
  BodyState s;
  s.bodies = {Body{{-0.5, 0.2}, {0.1, -0.3}, 1.0}, Body{{0.5, -0.2}, {-0.1, 0.3}, 1.0}};
  for (int i = 0; i < 1000; ++i) s = ThreeBodyStep(s, 0.01);
  const Vec2 p = TotalMomentum(s);
  EXPECT_LT(std::abs(p[0]), 1e-13);
  EXPECT_LT(std::abs(p[1]), 1e-13);
}

TEST(ThreeBody, MomentumConservedToRoundOff) {
  Rng rng(6);
  BodyState s = SampleBoundedBodies(rng, 300, 0.01, {}, {});
  for (Body& b : s.bodies) b.velocity[0] += 0.05;  // nonzero total momentum
  const Vec2 p0 = TotalMomentum(s);
  for (int i = 0; i < 1000; ++i) s = ThreeBodyStep(s, 0.01);
  const Vec2 p1 = TotalMomentum(s);
  EXPECT_NEAR(p1[0], p0[0], 1e-12);
  EXPECT_NEAR(p1[1], p0[1], 1e-12);
}

TEST(ThreeBody, CircularOrbitClosesAfterOnePeriod) {
  // Equal unit masses at separation d without softening: each circles the
  // centre at radius d/2 with speed sqrt(G m / (2 d)).
  const GravityParams params{1.0, 0.0};
  const double d = 1.0, r = d / 2, v = std::sqrt(params.gravitational_constant * 1.0 / (2 * d));
  const double period = 2 * std::numbers::pi * r / v;
  BodyState s;
  s.bodies = {Body{{-r, 0}, {0, -v}, 1.0}, Body{{r, 0}, {0, v}, 1.0}};
  const BodyState start = s;
  const double dt = period / 1000;
  double max_radius_error = 0;
  for (int i = 0; i < 1000; ++i) {
    s = ThreeBodyStep(s, dt, params);
    max_radius_error = std::max(max_radius_error, std::abs(std::hypot(s.bodies[0].position[0], s.bodies[0].position[1]) - r));
  }
  for (std::size_t k = 0; k < 2; ++k) {
    const double err = std::hypot(s.bodies[k].position[0] - start.bodies[k].position[0],
                                  s.bodies[k].position[1] - start.bodies[k].position[1]);
    EXPECT_LT(err / r, 0.02);
  }
  EXPECT_LT(max_radius_error / r, 0.02);
}

TEST(ThreeBody, EnergyDriftSmall) {
  Rng rng(7);
  const GravityParams params;
  BodyState s = SampleBoundedBodies(rng, 1000, 0.005, params, {});
  const double e0 = TotalEnergy(s, params);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    s = ThreeBodyStep(s, 0.005, params);
    worst = std::max(worst, std::abs(TotalEnergy(s, params) - e0) / std::abs(e0));
  }
  EXPECT_LT(worst, 1e-3);
}

TEST(ThreeBody, ErrorsOnBadInput) {
  BodyState s;
  s.bodies = {Body{{0, 0}, {0, 0}, 1.0}, Body{{std::nan(""), 0}, {0, 0}, 1.0}};
  try {
    ThreeBodyStep(s, 0.01);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::kSimulation);
  }
  EXPECT_THROW(ThreeBodyStep(BodyState{}, 0.0), Error);
}

TEST(RenderBodies, CentroidsMatchPositions) {
  BodyState s;
  s.bodies = {Body{{-1.3, -1.0}, {}, 1}, Body{{0.4, 1.1}, {}, 1}, Body{{1.2, -0.7}, {}, 1}};
  const std::vector<Rgb> colors = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  const BodyView view;
  const Image img = RenderBodies(s, s, colors, view);
  ASSERT_EQ(img.channels, 6u);
  for (std::size_t k = 0; k < 3; ++k) {
    double sx = 0, sy = 0, n = 0;
    for (std::size_t y = 0; y < 50; ++y) {
      for (std::size_t x = 0; x < 50; ++x) {
        EXPECT_EQ(img.at(y, x, k), img.at(y, x, 3 + k));
        if (img.at(y, x, 3 + k) > 0) sx += x + 0.5, sy += y + 0.5, n += 1;
      }
    }
    ASSERT_GT(n, 0);
    EXPECT_NEAR(sx / n, view.ToColumn(s.bodies[k].position[0]), 1.0);
    EXPECT_NEAR(sy / n, view.ToRow(s.bodies[k].position[1]), 1.0);
  }
}

TEST(RenderBodies, MovingRightShiftsCentroid) {
  BodyState prev, cur;
  prev.bodies = {Body{{0.0, 0.0}, {}, 1}};
  cur.bodies = {Body{{0.5, 0.0}, {}, 1}};
  const Image img = RenderBodies(cur, prev, {{1, 1, 1}});
  double c_prev = 0, c_cur = 0, n_prev = 0, n_cur = 0;
  for (std::size_t y = 0; y < 50; ++y) {
    for (std::size_t x = 0; x < 50; ++x) {
      if (img.at(y, x, 0)) c_prev += x, n_prev += 1;
      if (img.at(y, x, 3)) c_cur += x, n_cur += 1;
    }
  }
  EXPECT_GT(c_cur / n_cur, c_prev / n_prev);
}

TEST(Buffer, EpisodesReplayAgainstSimulator) {
  EnvSpec env;
  const ExperienceBuffer buf = GenerateBuffer(env, Diagonal(5), "{}", 2, 3, 9);
  EXPECT_EQ(buf.num_transitions(), 6u);
  for (const Episode& ep : buf.episodes) {
    ASSERT_EQ(ep.observations.size(), 4u);
    for (std::size_t t = 0; t < 3; ++t) {
      EXPECT_EQ(ep.grid_states[t + 1], GridStep(ep.grid_states[t], *ep.actions[t]));
      EXPECT_EQ(ep.observations[t + 1].pixels, RenderGrid(ep.grid_states[t + 1], env.catalog).pixels);
    }
    EXPECT_NO_THROW(CheckEpisode(env, Diagonal(5), ep));
  }
  Episode tampered = buf.episodes[0];
  tampered.observations[2].pixels[7] ^= 1;
  EXPECT_THROW(CheckEpisode(env, Diagonal(5), tampered), Error);
}

TEST(Buffer, DeterministicAcrossWorkers) {
  for (EnvKind kind : {EnvKind::kShapes, EnvKind::kBlocks, EnvKind::kThreeBody}) {
    EnvSpec env;
    env.kind = kind;
    const int k = kind == EnvKind::kThreeBody ? 3 : 5;
    const ExperienceBuffer a = GenerateBuffer(env, Diagonal(k), "{\"x\":1}", 7, 4, 21, 1);
    const ExperienceBuffer b = GenerateBuffer(env, Diagonal(k), "{\"x\":1}", 7, 4, 21, 3);
    EXPECT_EQ(SerializeDataset(a), SerializeDataset(b)) << EnvName(kind);
  }
}

TEST(Buffer, ActionMarginalUniform) {
  EnvSpec env;
  const ExperienceBuffer buf = GenerateBuffer(env, Diagonal(5), "{}", 1000, 10, 33);
  std::vector<int> count(20, 0);
  for (const Episode& ep : buf.episodes) {
    for (const auto& a : ep.actions) ++count[a->object * 4 + static_cast<int>(a->direction)];
  }
  const double n = 10000, p = 1.0 / 20, se = std::sqrt(n * p * (1 - p));
  for (int c : count) EXPECT_LE(std::abs(c - n * p), 3 * se);
}

TEST(Dataset, RoundTripAndManifest) {
  for (EnvKind kind : {EnvKind::kShapes, EnvKind::kThreeBody}) {
    EnvSpec env;
    env.kind = kind;
    const int k = kind == EnvKind::kThreeBody ? 3 : 5;
    const ExperienceBuffer buf = GenerateBuffer(env, Diagonal(k), R"({"split":"iid"})", 3, 5, 2);
    const std::string bytes = SerializeDataset(buf);
    const ExperienceBuffer back = ParseDataset(bytes);
    EXPECT_EQ(SerializeDataset(back), bytes);
    EXPECT_EQ(back.episodes[1].observations[4].pixels, buf.episodes[1].observations[4].pixels);
    EXPECT_EQ(back.assignment, buf.assignment);
    const auto manifest = DatasetManifest(back);
    EXPECT_EQ(manifest.at("episodes"), 3);
    EXPECT_EQ(manifest.at("steps"), 5);
    EXPECT_EQ(manifest.at("environment"), std::string(EnvName(kind)));
    EXPECT_THROW(ParseDataset(bytes.substr(0, bytes.size() / 2)), Error);
  }
}

}  // namespace
}  // namespace slotlab::envs
