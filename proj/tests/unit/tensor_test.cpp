#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

#include "slotlab/checkpoint.hpp"
#include "slotlab/error.hpp"
#include "slotlab/gradcheck.hpp"
#include "slotlab/ops.hpp"
#include "slotlab/optim.hpp"
#include "slotlab/rng.hpp"

namespace slotlab {
namespace {

Tensor<double> RandomTensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (double& v : t.mutable_data()) v = rng.Uniform(lo, hi);
  t.set_requires_grad(true);
  return t;
}

TEST(Tensor, ShapeArithmetic) {
  EXPECT_EQ(NumElements({3, 4, 5}), 60u);
  EXPECT_EQ(NumElements({}), 1u);
  Tensor<float> t({2, 3}, 1.5f);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.dim(1), 3u);
  EXPECT_FLOAT_EQ(t.at(5), 1.5f);
}

TEST(Tensor, CopiesShareStorageClonesDoNot) {
  Tensor<float> a({2}, 1.0f);
  Tensor<float> b = a;
  Tensor<float> c = a.Clone();
  a.mutable_data()[0] = 7.0f;
  EXPECT_FLOAT_EQ(b.at(0), 7.0f);
  EXPECT_FLOAT_EQ(c.at(0), 1.0f);
}

TEST(Tensor, ReshapeRoundTrip) {
  Rng rng(1);
  Tensor<double> x = RandomTensor({2, 3, 4}, rng);
  Tensor<double> y = Reshape(Reshape(x, {6, 4}), {2, 3, 4});
  ASSERT_EQ(y.shape(), x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y.at(i), x.at(i));
  EXPECT_THROW(Reshape(x, {5, 5}), Error);
}

TEST(Ops, Conv2dShapeAndZeroInput) {
  Rng rng(2);
  Tensor<float> input({3, 50, 50});
  Tensor<float> kernel({5, 3, 10, 10});
  for (float& v : kernel.mutable_data()) v = static_cast<float>(rng.Uniform(-1, 1));
  Tensor<float> bias({5}, std::vector<float>{0.5f, -1.0f, 2.0f, 0.0f, 3.0f});
  Tensor<float> out = Conv2d(input, kernel, bias, 10, 0);
  ASSERT_EQ(out.shape(), (Shape{5, 5, 5}));
  for (std::size_t c = 0; c < 5; ++c) {
    for (std::size_t p = 0; p < 25; ++p) EXPECT_FLOAT_EQ(out.at(c * 25 + p), bias.at(c));
  }
}

TEST(Ops, Conv2dMatchesDirectSum) {
  Rng rng(3);
  Tensor<double> x = RandomTensor({1, 2, 5, 5}, rng);
  Tensor<double> k = RandomTensor({3, 2, 3, 3}, rng);
  Tensor<double> b = RandomTensor({3}, rng);
  Tensor<double> y = Conv2d(x, k, b, 2, 1);
  ASSERT_EQ(y.shape(), (Shape{1, 3, 3, 3}));
  for (int o = 0; o < 3; ++o) {
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        double s = b.at(o);
        for (int c = 0; c < 2; ++c) {
          for (int u = 0; u < 3; ++u) {
            for (int v = 0; v < 3; ++v) {
              const int r = i * 2 - 1 + u, q = j * 2 - 1 + v;
              if (r < 0 || r >= 5 || q < 0 || q >= 5) continue;
              s += x.at((c * 5 + r) * 5 + q) * k.at(((o * 2 + c) * 3 + u) * 3 + v);
            }
          }
        }
        EXPECT_NEAR(y.at((o * 3 + i) * 3 + j), s, 1e-12);
      }
    }
  }
}

TEST(Ops, Conv2dRejectsChannelMismatch) {
  Tensor<float> input({2, 8, 8});
  Tensor<float> kernel({4, 3, 3, 3});
  Tensor<float> bias({4});
  try {
    Conv2d(input, kernel, bias, 1, 0);
    FAIL() << "expected a dimension error";
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::kDimension);
  }
}

TEST(Ops, LinearIdentityAndBias) {
  Tensor<float> x({2, 3}, std::vector<float>{1, 2, 3, 4, 5, 6});
  Tensor<float> eye({3, 3}, std::vector<float>{1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor<float> zero_bias({3});
  Tensor<float> y = Linear(x, eye, zero_bias);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_FLOAT_EQ(y.at(i), x.at(i));
  Tensor<float> w0({2, 3});
  Tensor<float> b({2}, std::vector<float>{7, -1});
  Tensor<float> z = Linear(x, w0, b);
  EXPECT_EQ(z.shape(), (Shape{2, 2}));
  EXPECT_FLOAT_EQ(z.at(0), 7);
  EXPECT_FLOAT_EQ(z.at(3), -1);
  EXPECT_THROW(Linear(x, Tensor<float>({2, 4}), b), Error);
}

TEST(Ops, Activations) {
  Tensor<float> x({3}, std::vector<float>{-1, 0, 2});
  Tensor<float> r = Relu(x);
  EXPECT_EQ(std::vector<float>(r.data().begin(), r.data().end()), (std::vector<float>{0, 0, 2}));
  EXPECT_FLOAT_EQ(Sigmoid(Tensor<float>::Scalar(0)).item(), 0.5f);
  EXPECT_FLOAT_EQ(LeakyRelu(x, 0.1f).at(0), -0.1f);
}

TEST(Ops, LayerNormMoments) {
  Tensor<double> x({3}, std::vector<double>{1, 2, 3});
  Tensor<double> y = LayerNorm(x, Tensor<double>({3}, 1.0), Tensor<double>({3}, 0.0));
  double mean = 0, var = 0;
  for (double v : y.data()) mean += v / 3;
  for (double v : y.data()) var += (v - mean) * (v - mean) / 3;
  EXPECT_NEAR(mean, 0.0, 1e-6);
  EXPECT_NEAR(var, 1.0, 1e-6);
  // (x - 2) / sqrt(2/3)
  EXPECT_NEAR(y.at(0), -1.0 / std::sqrt(2.0 / 3.0), 1e-6);
  Tensor<double> one({4, 1}, 1.0);
  EXPECT_THROW(LayerNorm(one, Tensor<double>({1}, 1.0), Tensor<double>({1}, 0.0)), Error);
}

TEST(Ops, NonFiniteForwardRaisesNumeric) {
  Tensor<float> x({2}, std::vector<float>{1.0f, std::numeric_limits<float>::infinity()});
  try {
    Relu(x);
    FAIL() << "expected numeric error";
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::kNumeric);
  }
}

TEST(Tape, SumGradIsOnes) {
  Tensor<double> x({2, 3}, 0.25);
  x.set_requires_grad(true);
  Tape<double> tape;
  Tensor<double> loss;
  {
    TapeScope<double> scope(tape);
    loss = Sum(x);
  }
  tape.Backward(loss);
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Tape, SquareGradient) {
  Tensor<double> x({2}, std::vector<double>{1, -2});
  x.set_requires_grad(true);
  Tape<double> tape;
  Tensor<double> loss;
  {
    TapeScope<double> scope(tape);
    loss = Sum(Mul(x, x));
  }
  tape.Backward(loss);
  EXPECT_EQ(x.grad()[0], 2.0);
  EXPECT_EQ(x.grad()[1], -4.0);
}

TEST(Tape, SharedUseAccumulates) {
  Tensor<double> x({1}, 3.0);
  x.set_requires_grad(true);
  Tape<double> tape;
  Tensor<double> loss;
  {
    TapeScope<double> scope(tape);
    loss = Sum(Add(Scale(x, 2.0), Mul(x, x)));
  }
  tape.Backward(loss);
  EXPECT_DOUBLE_EQ(x.grad()[0], 2.0 + 6.0);
}

TEST(Tape, SecondBackwardRaises) {
  Tensor<double> x({1}, 1.0);
  x.set_requires_grad(true);
  Tape<double> tape;
  Tensor<double> loss;
  {
    TapeScope<double> scope(tape);
    loss = Sum(x);
  }
  tape.Backward(loss);
  EXPECT_THROW(tape.Backward(loss), Error);
  tape.Reset();
  EXPECT_FALSE(tape.consumed());
}

TEST(Tape, NonScalarBackwardRaises) {
  Tensor<double> x({2}, 1.0);
  x.set_requires_grad(true);
  Tape<double> tape;
  Tensor<double> y;
  {
    TapeScope<double> scope(tape);
    y = Scale(x, 2.0);
  }
  try {
    tape.Backward(y);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::kContract);
  }
}

TEST(Tape, NoGradScopeRecordsNothing) {
  Tensor<double> x({2}, 1.0);
  x.set_requires_grad(true);
  Tape<double> tape;
  TapeScope<double> scope(tape);
  {
    NoGradScope<double> off;
    Sum(Mul(x, x));
  }
  EXPECT_EQ(tape.size(), 0u);
  Sum(x);
  EXPECT_EQ(tape.size(), 1u);
}

// Central differences against the tape, per op.
class GradCheckOps : public ::testing::Test {
 protected:
  Rng rng{11};
};

TEST_F(GradCheckOps, Conv2dInput) {
  Tensor<double> x = RandomTensor({3, 8, 8}, rng);
  Tensor<double> k = RandomTensor({2, 3, 3, 3}, rng);
  Tensor<double> b = RandomTensor({2}, rng);
  auto r = GradCheck([&] { return Sum(Conv2d(x, k, b, 1, 0)); }, {x}, 1e-5);
  EXPECT_TRUE(r.passed) << r.max_relative_error << " at " << r.worst;
}

TEST_F(GradCheckOps, Conv2dAllInputsStridedPadded) {
  Tensor<double> x = RandomTensor({2, 3, 8, 8}, rng);
  Tensor<double> k = RandomTensor({4, 3, 4, 4}, rng);
  Tensor<double> b = RandomTensor({4}, rng);
  Tensor<double> w = RandomTensor({2, 4, 4, 4}, rng);
  auto r = GradCheck([&] { return Sum(Mul(Conv2d(x, k, b, 2, 1), w)); }, {x, k, b}, 1e-4);
  EXPECT_TRUE(r.passed) << r.max_relative_error << " at " << r.worst;
}

TEST_F(GradCheckOps, ConvTranspose2d) {
  Tensor<double> x = RandomTensor({2, 3, 3, 3}, rng);
  Tensor<double> k = RandomTensor({3, 2, 4, 4}, rng);
  Tensor<double> b = RandomTensor({2}, rng);
  Tensor<double> probe = RandomTensor({2, 2, 8, 8}, rng);
  Tensor<double> y = ConvTranspose2d(x, k, b, 2, 0);
  ASSERT_EQ(y.shape(), (Shape{2, 2, 8, 8}));
  auto r = GradCheck([&] { return Sum(Mul(ConvTranspose2d(x, k, b, 2, 0), probe)); }, {x, k, b}, 1e-4);
  EXPECT_TRUE(r.passed) << r.max_relative_error << " at " << r.worst;
}

TEST_F(GradCheckOps, Linear) {
  Tensor<double> x = RandomTensor({2, 3}, rng);
  Tensor<double> w = RandomTensor({4, 3}, rng);
  Tensor<double> b = RandomTensor({4}, rng);
  Tensor<double> probe = RandomTensor({2, 4}, rng);
  auto r = GradCheck([&] { return Sum(Mul(Linear(x, w, b), probe)); }, {x, w, b}, 1e-5);
  EXPECT_TRUE(r.passed) << r.max_relative_error << " at " << r.worst;
}

TEST_F(GradCheckOps, Elementwise) {
  // Keep inputs away from the relu kink.
  Tensor<double> x = RandomTensor({3, 4}, rng, 0.1, 1.0);
  Tensor<double> y = RandomTensor({3, 4}, rng);
  for (std::size_t i = 0; i < x.size(); i += 2) x.mutable_data()[i] *= -1;
  auto r = GradCheck(
      [&] {
        Tensor<double> a = Add(Relu(x), Sigmoid(y));
        Tensor<double> b = Sub(Mul(a, LeakyRelu(x, 0.2)), Square(y));
        return Mean(AddScalar(Scale(b, 1.5), 0.3));
      },
      {x, y}, 1e-5);
  EXPECT_TRUE(r.passed) << r.max_relative_error << " at " << r.worst;
}

TEST_F(GradCheckOps, LayerNorm) {
  Tensor<double> x = RandomTensor({4, 6}, rng);
  Tensor<double> g = RandomTensor({6}, rng);
  Tensor<double> o = RandomTensor({6}, rng);
  Tensor<double> probe = RandomTensor({4, 6}, rng);
  auto r = GradCheck([&] { return Sum(Mul(LayerNorm(x, g, o), probe)); }, {x, g, o}, 1e-4);
  EXPECT_TRUE(r.passed) << r.max_relative_error << " at " << r.worst;
}

TEST_F(GradCheckOps, ReductionsAndIndexing) {
  Tensor<double> x = RandomTensor({5, 3}, rng);
  Tensor<double> y = RandomTensor({5, 2}, rng);
  const std::vector<std::size_t> index = {4, 0, 0, 2};
  const std::vector<std::size_t> segment = {1, 0, 1, 2, 1};
  Tensor<double> probe = RandomTensor({3, 5}, rng);
  auto r = GradCheck(
      [&] {
        const std::array<Tensor<double>, 2> parts = {x, y};
        Tensor<double> cat = ConcatLastAxis<double>(parts);
        Tensor<double> gathered = GatherRows(cat, index);
        Tensor<double> seg = SegmentSum(cat, segment, 3);
        return Add(Add(Sum(Square(gathered)), Sum(Mul(seg, probe))),
                   Add(Mean(SumLastAxis(x)), Sum(MeanLastAxis(Square(y)))));
      },
      {x, y}, 1e-5);
  EXPECT_TRUE(r.passed) << r.max_relative_error << " at " << r.worst;
}

TEST_F(GradCheckOps, AddBiasAndMse) {
  Tensor<double> x = RandomTensor({3, 4}, rng);
  Tensor<double> b = RandomTensor({4}, rng);
  Tensor<double> target = RandomTensor({3, 4}, rng);
  auto r = GradCheck([&] { return MseLoss(AddBias(x, b, 2.5), target); }, {x, b}, 1e-5);
  EXPECT_TRUE(r.passed) << r.max_relative_error << " at " << r.worst;
}

// The fused edge op against the same quantity built from primitives.
Tensor<double> PairwiseByComposition(const Tensor<double>& s, const Tensor<double>& t, const Tensor<double>& g,
                                     const Tensor<double>& o, std::size_t group) {
  const std::size_t n = s.dim(0);
  std::vector<std::size_t> src, dst, seg;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t base = i / group * group;
    for (std::size_t j = base; j < base + group; ++j) {
      if (j == i) continue;
      src.push_back(i);
      dst.push_back(j);
      seg.push_back(i);
    }
  }
  Tensor<double> pre = Add(GatherRows(s, src), GatherRows(t, dst));
  return SegmentSum(Relu(LayerNorm(pre, g, o)), seg, n);
}

TEST_F(GradCheckOps, PairwiseNormReluSumMatchesComposition) {
  Tensor<double> s = RandomTensor({6, 5}, rng);
  Tensor<double> t = RandomTensor({6, 5}, rng);
  Tensor<double> g = RandomTensor({5}, rng);
  Tensor<double> o = RandomTensor({5}, rng);
  Tensor<double> fused = PairwiseNormReluSum(s, t, g, o, 3);
  Tensor<double> reference = PairwiseByComposition(s, t, g, o, 3);
  ASSERT_EQ(fused.shape(), reference.shape());
  for (std::size_t i = 0; i < fused.size(); ++i) EXPECT_NEAR(fused.at(i), reference.at(i), 1e-12);
  Tensor<double> probe = RandomTensor({6, 5}, rng);
  auto r = GradCheck([&] { return Sum(Mul(PairwiseNormReluSum(s, t, g, o, 3), probe)); }, {s, t, g, o}, 1e-4);
  EXPECT_TRUE(r.passed) << r.max_relative_error << " at " << r.worst;
}

TEST_F(GradCheckOps, CompositeCnnMlp) {
  Tensor<double> x = RandomTensor({2, 3, 10, 10}, rng);
  Tensor<double> k = RandomTensor({2, 3, 5, 5}, rng, -0.3, 0.3);
  Tensor<double> kb = RandomTensor({2}, rng);
  Tensor<double> w1 = RandomTensor({6, 8}, rng, -0.5, 0.5);
  Tensor<double> b1 = RandomTensor({6}, rng);
  Tensor<double> g = RandomTensor({6}, rng);
  Tensor<double> o = RandomTensor({6}, rng);
  Tensor<double> w2 = RandomTensor({1, 6}, rng);
  Tensor<double> b2 = RandomTensor({1}, rng);
  auto f = [&] {
    Tensor<double> maps = Sigmoid(Conv2d(x, k, kb, 5, 0));  // [2,2,2,2]
    Tensor<double> flat = Reshape(maps, {2, 8});
    Tensor<double> h = Relu(LayerNorm(Linear(flat, w1, b1), g, o));
    return Mean(Square(Linear(h, w2, b2)));
  };
  auto r = GradCheck(f, {k, kb, w1, b1, g, o, w2, b2}, 1e-4);
  EXPECT_TRUE(r.passed) << r.max_relative_error << " at " << r.worst;
}

TEST(GradCheck, DetectsWrongGradient) {
  // A deliberately inconsistent function: the tape sees x, the value sees 2x.
  Tensor<double> x({2}, std::vector<double>{0.5, -0.7});
  x.set_requires_grad(true);
  auto f = [&] {
    Tensor<double> y = Sum(Square(x));
    const double extra = x.at(0);
    return AddScalar(y, extra);  // the constant hides a d/dx0 = 1 term from the tape
  };
  auto r = GradCheck(f, {x}, 1e-5);
  EXPECT_FALSE(r.passed);
  EXPECT_EQ(r.worst, "input0[0]");
}

TEST(Adam, FirstStepMagnitudeIsLearningRate) {
  ParameterSet<float> params;
  Tensor<float>& w = params.Add("w", Tensor<float>({3}, std::vector<float>{1, 1, 1}));
  auto state = MakeAdamState(params, AdamConfig{0.01});
  const float g[3] = {0.3f, -2.0f, 1e-3f};
  for (int i = 0; i < 3; ++i) w.mutable_grad()[i] = g[i];
  AdamStep(params, state);
  EXPECT_NEAR(w.at(0), 1 - 0.01, 1e-6);
  EXPECT_NEAR(w.at(1), 1 + 0.01, 1e-6);
  EXPECT_NEAR(w.at(2), 1 - 0.01, 1e-4);
  EXPECT_FALSE(w.has_grad());
}

TEST(Adam, ZeroGradientLeavesParameters) {
  ParameterSet<float> params;
  Tensor<float>& w = params.Add("w", Tensor<float>({2}, std::vector<float>{0.5f, -3}));
  auto state = MakeAdamState(params);
  w.mutable_grad();
  AdamStep(params, state);
  EXPECT_EQ(w.at(0), 0.5f);
  EXPECT_EQ(w.at(1), -3.0f);
}

TEST(Adam, MissingGradientIsContractError) {
  ParameterSet<float> params;
  params.Add("w", Tensor<float>({2}));
  auto state = MakeAdamState(params);
  try {
    AdamStep(params, state);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::kContract);
  }
}

TEST(Adam, QuadraticBowlMatchesScalarRecurrence) {
  ParameterSet<double> params;
  Tensor<double>& w = params.Add("w", Tensor<double>({2}, std::vector<double>{1, 1}));
  auto state = MakeAdamState(params, AdamConfig{0.1});
  // Independent scalar Adam on one coordinate (both coordinates are identical).
  double ref = 1, m = 0, v = 0;
  std::vector<double> norms;
  for (int t = 1; t <= 100; ++t) {
    Tape<double> tape;
    Tensor<double> loss;
    {
      TapeScope<double> scope(tape);
      loss = Sum(Square(w));
    }
    tape.Backward(loss);
    AdamStep(params, state);
    const double g = 2 * ref;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    ref -= 0.1 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    EXPECT_NEAR(w.at(0), ref, 1e-12);
    norms.push_back(std::hypot(w.at(0), w.at(1)));
  }
  EXPECT_LT(norms.back(), 1.0);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  Rng rng(5);
  Checkpoint ck;
  ck.preamble = R"({"model":"test","note":"ünïcode"})";
  ParameterSet<float> fparams;
  Tensor<float>& a = fparams.Add("layer/a", Tensor<float>({2, 3}));
  for (float& v : a.mutable_data()) v = static_cast<float>(rng.Uniform(-5, 5));
  a.mutable_data()[0] = std::numeric_limits<float>::denorm_min();
  a.mutable_data()[1] = -0.0f;
  AppendParameters(ck, fparams, "p/");
  NamedArray d{"double", DType::kFloat64, {3}, {}, {1.0 / 3.0, -1e300, 4.9e-324}};
  ck.entries.push_back(d);
  const std::string bytes = SerializeCheckpoint(ck);
  const Checkpoint back = ParseCheckpoint(bytes);
  EXPECT_EQ(back.preamble, ck.preamble);
  ASSERT_EQ(back.entries.size(), 2u);
  EXPECT_EQ(SerializeCheckpoint(back), bytes);
  ParameterSet<float> loaded;
  Tensor<float>& b = loaded.Add("layer/a", Tensor<float>({2, 3}));
  LoadParameters(back, loaded, "p/");
  EXPECT_EQ(std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(float)), 0);
  EXPECT_EQ(back.Find("double")->f64, d.f64);
}

TEST(Checkpoint, RejectsCorruptInput) {
  Checkpoint ck;
  ck.preamble = "x";
  ck.entries.push_back({"a", DType::kFloat32, {4}, {1, 2, 3, 4}, {}});
  std::string bytes = SerializeCheckpoint(ck);
  EXPECT_THROW(ParseCheckpoint(bytes.substr(0, bytes.size() - 3)), Error);
  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(ParseCheckpoint(bad), Error);
  ParameterSet<float> wrong;
  wrong.Add("a", Tensor<float>({5}));
  EXPECT_THROW(LoadParameters(ParseCheckpoint(bytes), wrong), Error);
}

TEST(Checkpoint, AdamStateRoundTrip) {
  ParameterSet<float> params;
  Tensor<float>& w = params.Add("w", Tensor<float>({3}, 1.0f));
  auto state = MakeAdamState(params);
  for (int s = 0; s < 3; ++s) {
    for (int i = 0; i < 3; ++i) w.mutable_grad()[i] = 0.1f * (i + 1) * (s + 1);
    AdamStep(params, state);
  }
  Checkpoint ck;
  AppendAdamState(ck, state, params);
  const AdamState back = LoadAdamState(ParseCheckpoint(SerializeCheckpoint(ck)), params, state.config);
  EXPECT_EQ(back.step, state.step);
  EXPECT_EQ(back.first_moment, state.first_moment);
  EXPECT_EQ(back.second_moment, state.second_moment);
}

}  // namespace
}  // namespace slotlab
