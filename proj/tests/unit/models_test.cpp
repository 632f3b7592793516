#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "slotlab/checkpoint.hpp"
#include "slotlab/error.hpp"
#include "slotlab/gradcheck.hpp"
#include "slotlab/models/autoencoder.hpp"
#include "slotlab/models/batch.hpp"
#include "slotlab/models/cswm.hpp"
#include "slotlab/models/train.hpp"
#include "slotlab/rng.hpp"

namespace slotlab::models {
namespace {

Tensor<double> Random(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (double& v : t.mutable_data()) v = rng.Uniform(lo, hi);
  return t;
}

Tensor<double> RandomActions(std::size_t B, std::size_t K, Rng& rng) {
  Tensor<double> a({B, K, kActionsPerObject});
  for (std::size_t b = 0; b < B; ++b) {
    a.mutable_data()[b * K * kActionsPerObject + rng.UniformInt(K * kActionsPerObject)] = 1.0;
  }
  return a;
}

// Replaces every parameter with noise so zero-initialized layers take part.
template <typename Params>
void Scramble(Params& params, Rng& rng, double scale = 0.5) {
  for (auto& [name, t] : params) {
    for (double& v : t.mutable_data()) v = rng.Uniform(-scale, scale);
  }
}

CswmConfig SmallGrid() {
  CswmConfig c;
  c.image_size = 20;
  c.num_slots = 3;
  c.latent_dim = 2;
  c.hidden = 6;
  c.edge_dim = 5;
  return c;
}

std::vector<Tensor<double>> Leaves(ParameterSet<double>& params) {
  std::vector<Tensor<double>> out;
  for (auto& [name, t] : params) out.push_back(t);
  return out;
}

TEST(Cswm, ShapesAndDefaults) {
  envs::EnvSpec grid;
  const CswmConfig c = DefaultCswmConfig(grid, 5);
  EXPECT_EQ(c.latent_dim, 2u);
  EXPECT_EQ(c.map_size(), 5u);
  envs::EnvSpec bodies;
  bodies.kind = envs::EnvKind::kThreeBody;
  EXPECT_EQ(DefaultCswmConfig(bodies, 3).latent_dim, 4u);
  EXPECT_EQ(DefaultCswmConfig(bodies, 3).channels, 6u);

  CswmModel<float> m(SmallGrid(), 1);
  Tensor<float> obs({4, 3, 20, 20}, 0.5f);
  EXPECT_EQ(m.ExtractMasks(obs).shape(), (Shape{4, 3, 2, 2}));
  const Tensor<float> z = m.Encode(obs);
  EXPECT_EQ(z.shape(), (Shape{4, 3, 2}));
  EXPECT_EQ(m.Transition(z, Tensor<float>({4, 3, 4})).shape(), (Shape{4, 3, 2}));
}

TEST(Cswm, DimensionErrors) {
  CswmModel<float> m(SmallGrid(), 1);
  try {
    m.Encode(Tensor<float>({1, 3, 50, 50}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::kDimension);
  }
  EXPECT_THROW(m.Transition(Tensor<float>({2, 3, 2}), Tensor<float>({2, 3, 3})), Error);
  EXPECT_THROW(m.Transition(Tensor<float>({2, 4, 2}), Tensor<float>({2, 4, 4})), Error);
}

TEST(Cswm, ZeroInitializedTransitionIsIdentity) {
  CswmModel<float> m(SmallGrid(), 3);
  Rng rng(1);
  Tensor<float> z({5, 3, 2});
  for (float& v : z.mutable_data()) v = static_cast<float>(rng.Uniform(-3, 3));
  Tensor<float> a({5, 3, 4});
  a.mutable_data()[2] = 1;
  const Tensor<float> delta = m.Transition(z, a);
  for (float v : delta.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Cswm, SameSeedSameParameters) {
  CswmModel<float> a(SmallGrid(), 11), b(SmallGrid(), 11), c(SmallGrid(), 12);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    EXPECT_TRUE(std::ranges::equal(a.params()[i].data(), b.params()[i].data())) << a.params().name(i);
    any_diff = any_diff || !std::ranges::equal(a.params()[i].data(), c.params()[i].data());
  }
  EXPECT_TRUE(any_diff);
}

TEST(Cswm, TransitionIsSlotPermutationEquivariant) {
  CswmConfig cfg = SmallGrid();
  cfg.num_slots = 4;
  cfg.latent_dim = 3;
  cfg.hidden = 16;
  cfg.edge_dim = 12;
  CswmModel<double> m(cfg, 5);
  Rng rng(21);
  Scramble(m.params(), rng);
  const std::size_t B = 2, K = 4, D = 3, A = kActionsPerObject;
  double worst = 0;
  for (int draw = 0; draw < 100; ++draw) {
    const Tensor<double> z = Random({B, K, D}, rng, -2, 2);
    const Tensor<double> a = RandomActions(B, K, rng);
    std::vector<std::size_t> perm(K);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.Shuffle(std::span<std::size_t>(perm));
    Tensor<double> zp({B, K, D}), ap({B, K, A});
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t i = 0; i < K; ++i) {
        for (std::size_t d = 0; d < D; ++d) zp.mutable_data()[(b * K + i) * D + d] = z.at((b * K + perm[i]) * D + d);
        for (std::size_t d = 0; d < A; ++d) ap.mutable_data()[(b * K + i) * A + d] = a.at((b * K + perm[i]) * A + d);
      }
    }
    const Tensor<double> delta = m.Transition(z, a), delta_p = m.Transition(zp, ap);
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t i = 0; i < K; ++i) {
        for (std::size_t d = 0; d < D; ++d) {
          worst = std::max(worst, std::abs(delta_p.at((b * K + i) * D + d) - delta.at((b * K + perm[i]) * D + d)));
        }
      }
    }
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(Cswm, EncoderSharedAcrossSlots) {
  // Identical slot maps must give identical latents.
  CswmModel<double> m(SmallGrid(), 2);
  Rng rng(3);
  Tensor<double> maps({1, 3, 2, 2});
  for (std::size_t p = 0; p < 4; ++p) {
    const double v = rng.Uniform();
    for (std::size_t k = 0; k < 3; ++k) maps.mutable_data()[k * 4 + p] = v;
  }
  const Tensor<double> z = m.EncodeSlots(maps);
  for (std::size_t k = 1; k < 3; ++k) {
    for (std::size_t d = 0; d < 2; ++d) EXPECT_EQ(z.at(k * 2 + d), z.at(d));
  }
}

TEST(Loss, EnergyByHand) {
  // K = 1, D = 2, sigma = 0.5: energy is twice the squared distance.
  const Tensor<double> a({2, 1, 2}, std::vector<double>{0, 0, 1, 2});
  const Tensor<double> b({2, 1, 2}, std::vector<double>{3, 4, 1, 2.5});
  const Tensor<double> e = Energy(a, b, 0.5);
  ASSERT_EQ(e.shape(), (Shape{2}));
  EXPECT_NEAR(e.at(0), 50.0, 1e-12);
  EXPECT_NEAR(e.at(1), 0.5, 1e-12);
  // K = 2 averages over slots.
  const Tensor<double> c({1, 2, 1}, std::vector<double>{1, 0});
  EXPECT_NEAR(Energy(c, Tensor<double>({1, 2, 1}), 0.5).at(0), 1.0, 1e-12);
}

TEST(Loss, ContrastiveByHand) {
  const Tensor<double> z({2, 1, 2}, std::vector<double>{0, 0, 0.5, 0.5});
  const Tensor<double> delta({2, 1, 2}, std::vector<double>{1, 0, 0, 0});
  const Tensor<double> next({2, 1, 2}, std::vector<double>{1, 1, 0.5, 0});
  const Tensor<double> neg({2, 1, 2}, std::vector<double>{1, 1.5, 2, 0});
  // Positives: 2 * 1 = 2 and 2 * 0.25 = 0.5. Negative energies 0.5 and 4.5
  // give hinges 0.5 and 0.
  const double want = ((2.0 + 0.5) + (0.5 + 0.0)) / 2;
  EXPECT_NEAR(ContrastiveLoss(z, delta, next, neg, 1.0, 0.5).item(), want, 1e-6);
  EXPECT_NEAR(ContrastiveLoss(z, delta, next, neg, 5.0, 0.5).item(), (2.5 + 0.5 + 4 + 0.5) / 2, 1e-6);
  const Tensor<double> empty(Shape{0, 1, 2});
  EXPECT_THROW(ContrastiveLoss(empty, empty, empty, empty, 1.0, 0.5), Error);
}

TEST(GradCheckModels, CswmGridFullLoss) {
  CswmModel<double> m(SmallGrid(), 7);
  Rng rng(8);
  Scramble(m.params(), rng);
  const Tensor<double> obs = Random({3, 3, 20, 20}, rng, 0, 1);
  const Tensor<double> next = Random({3, 3, 20, 20}, rng, 0, 1);
  const Tensor<double> act = RandomActions(3, 3, rng);
  const std::vector<std::size_t> order = {2, 0, 1};
  const auto r = GradCheck([&] { return CswmBatchLoss(m, obs, act, next, order); }, Leaves(m.params()), 1e-4);
  EXPECT_TRUE(r.passed) << r.max_relative_error << " at " << r.worst;
}

TEST(GradCheckModels, CswmGridTwoLayerExtractor) {
  CswmConfig cfg = SmallGrid();
  cfg.grid_hidden = 3;
  CswmModel<double> m(cfg, 7);
  Rng rng(9);
  Scramble(m.params(), rng);
  const Tensor<double> obs = Random({2, 3, 20, 20}, rng, 0, 1);
  const Tensor<double> probe = Random({2, 3, 2}, rng);
  const auto r = GradCheck([&] { return Sum(Mul(m.Encode(obs), probe)); }, Leaves(m.params()), 1e-4);
  EXPECT_TRUE(r.passed) << r.max_relative_error << " at " << r.worst;
}

TEST(GradCheckModels, CswmThreeBody) {
  CswmConfig cfg;
  cfg.env = envs::EnvKind::kThreeBody;
  cfg.channels = 6;
  cfg.image_size = 10;
  cfg.num_slots = 3;
  cfg.latent_dim = 4;
  cfg.hidden = 5;
  cfg.edge_dim = 4;
  cfg.conv_channels = 2;
  CswmModel<double> m(cfg, 4);
  Rng rng(10);
  Scramble(m.params(), rng);
  const Tensor<double> obs = Random({2, 6, 10, 10}, rng, 0, 1);
  const Tensor<double> next = Random({2, 6, 10, 10}, rng, 0, 1);
  const std::vector<std::size_t> order = {1, 0};
  const auto r = GradCheck([&] { return CswmBatchLoss(m, obs, Tensor<double>({2, 3, 4}), next, order); },
                           Leaves(m.params()), 1e-4);
  EXPECT_TRUE(r.passed) << r.max_relative_error << " at " << r.worst;
}

TEST(GradCheckModels, AutoencoderLoss) {
  AeConfig cfg;
  cfg.image_size = 20;
  cfg.num_slots = 2;
  cfg.hidden = 6;
  AeModel<double> m(cfg, 5);
  Rng rng(12);
  Scramble(m.params(), rng);
  const Tensor<double> obs = Random({2, 3, 20, 20}, rng, 0, 1);
  const Tensor<double> next = Random({2, 3, 20, 20}, rng, 0, 1);
  const Tensor<double> act = RandomActions(2, 2, rng);
  // The head trains against detached latents, so it is checked on its own.
  std::vector<Tensor<double>> codec, head;
  for (auto& [name, t] : m.params()) (name.starts_with("head.") ? head : codec).push_back(t);
  ASSERT_FALSE(head.empty());
  const auto r = GradCheck([&] { return AeLoss(m.Forward(obs).reconstruction, obs); }, codec, 1e-4);
  EXPECT_TRUE(r.passed) << r.max_relative_error << " at " << r.worst;
  const auto h = GradCheck([&] { return AeBatchLoss(m, obs, act, next); }, head, 1e-4);
  EXPECT_TRUE(h.passed) << h.max_relative_error << " at " << h.worst;
}

TEST(Autoencoder, Shapes) {
  AeConfig cfg;
  cfg.image_size = 20;
  cfg.num_slots = 2;
  cfg.hidden = 8;
  AeModel<float> m(cfg, 1);
  const AeOutput<float> out = m.Forward(Tensor<float>({3, 3, 20, 20}, 0.25f));
  EXPECT_EQ(out.latent.shape(), (Shape{3, 4}));
  EXPECT_EQ(out.reconstruction.shape(), (Shape{3, 3, 20, 20}));
  for (float v : out.reconstruction.data()) EXPECT_TRUE(v > 0 && v < 1);
  EXPECT_EQ(m.Transition(out.latent, Tensor<float>({3, 2, 4})).shape(), (Shape{3, 4}));
}

TEST(Checkpoint, ModelRoundTripIsBitIdentical) {
  CswmModel<float> m(SmallGrid(), 9);
  const Checkpoint ck = m.ToCheckpoint({{"note", "x"}});
  const std::string bytes = SerializeCheckpoint(ck);
  const CswmModel<float> back = CswmModel<float>::FromCheckpoint(ParseCheckpoint(bytes));
  EXPECT_EQ(back.config().ToJson(), m.config().ToJson());
  EXPECT_EQ(SerializeCheckpoint(back.ToCheckpoint({{"note", "x"}})), bytes);
  EXPECT_EQ(CheckpointModelKind(ck), "cswm");

  AeConfig ac;
  ac.image_size = 20;
  ac.hidden = 4;
  AeModel<float> ae(ac, 2);
  const std::string ae_bytes = SerializeCheckpoint(ae.ToCheckpoint());
  EXPECT_EQ(SerializeCheckpoint(AeModel<float>::FromCheckpoint(ParseCheckpoint(ae_bytes)).ToCheckpoint()), ae_bytes);
  EXPECT_THROW(CswmModel<float>::FromCheckpoint(ParseCheckpoint(ae_bytes)), Error);
}

TEST(Train, ResumeReproducesUninterruptedRun) {
  envs::EnvSpec env;
  env.grid_size = 2;
  env.catalog = envs::DefaultCatalog();
  envs::Assignment assign = {{0, 0}, {1, 1}};
  const envs::ExperienceBuffer buf = envs::GenerateBuffer(env, assign, "{}", 6, 3, 4);
  CswmConfig cfg = SmallGrid();
  cfg.num_slots = 2;
  const std::string dir = ::testing::TempDir();

  TrainConfig tc;
  tc.epochs = 4;
  tc.batch_size = 5;
  tc.seed = 3;
  CswmModel<float> straight(cfg, 1);
  const TrainReport full = TrainCswm(straight, buf, tc);
  ASSERT_EQ(full.epochs_done(), 4u);
  EXPECT_FALSE(full.aborted);

  tc.epochs = 2;
  tc.checkpoint_path = dir + "/resume.slck";
  CswmModel<float> first(cfg, 1);
  TrainCswm(first, buf, tc);
  const Checkpoint ck = ReadCheckpoint(tc.checkpoint_path);
  CswmModel<float> resumed = CswmModel<float>::FromCheckpoint(ck);
  const ResumeState state = ReadResumeState(ck, resumed.params(), tc.learning_rate);
  tc.epochs = 4;
  tc.checkpoint_path.clear();
  const TrainReport rest = TrainCswm(resumed, buf, tc, state);
  ASSERT_EQ(rest.epochs_done(), 4u);
  for (std::size_t e = 0; e < 4; ++e) EXPECT_EQ(rest.epochs[e].mean_loss, full.epochs[e].mean_loss) << e;
  for (std::size_t i = 0; i < straight.params().size(); ++i) {
    EXPECT_TRUE(std::ranges::equal(straight.params()[i].data(), resumed.params()[i].data()));
  }
}

TEST(Batch, ObservationAndActionLayout) {
  envs::EnvSpec env;
  const envs::ExperienceBuffer buf = envs::GenerateBuffer(env, {{0, 0}, {1, 1}}, "{}", 2, 2, 5);
  const std::vector<StepRef> refs = AllSteps(buf);
  ASSERT_EQ(refs.size(), 4u);
  EXPECT_EQ(refs[3].episode, 1u);
  EXPECT_EQ(refs[3].step, 1u);
  const Tensor<float> obs = ObservationBatch<float>(buf, refs, 1);
  const envs::Image& img = buf.episodes[1].observations[2];
  EXPECT_FLOAT_EQ(obs.at(3 * 7500 + 2 * 2500 + 7 * 50 + 9), img.at(7, 9, 2) / 255.0f);
  const Tensor<float> act = ActionBatch<float>(buf, refs);
  for (std::size_t r = 0; r < refs.size(); ++r) {
    const auto& a = *buf.episodes[refs[r].episode].actions[refs[r].step];
    float total = 0;
    for (std::size_t i = 0; i < 8; ++i) total += act.at(r * 8 + i);
    EXPECT_EQ(total, 1.0f);
    EXPECT_EQ(act.at(r * 8 + a.object * 4 + static_cast<std::size_t>(a.direction)), 1.0f);
  }
}

}  // namespace
}  // namespace slotlab::models
