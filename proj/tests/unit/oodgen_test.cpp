#include <gtest/gtest.h>

#include <set>

#include "slotlab/error.hpp"
#include "slotlab/oodgen.hpp"
#include "slotlab/rng.hpp"

namespace slotlab::oodgen {
namespace {

// Independent restatement of what each split kind promises.
std::vector<std::string> OracleProblems(const SplitSpec& s) {
  std::vector<std::string> out;
  const std::size_t n = s.train.size();
  if (s.test.size() != n) return {"sizes"};
  std::set<std::pair<int, int>> train_pairs, test_pairs;
  std::set<int> shapes, colors;
  for (const auto& p : s.train) {
    train_pairs.insert({p.shape, p.color});
    shapes.insert(p.shape);
    colors.insert(p.color);
  }
  for (const auto& p : s.test) test_pairs.insert({p.shape, p.color});
  if (train_pairs.size() != n) out.push_back("train duplicates");
  if (test_pairs.size() != n) out.push_back("test duplicates");
  int differing = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = s.train[i];
    const auto& b = s.test[i];
    if (a == b) continue;
    ++differing;
    switch (s.kind) {
      case SplitKind::kIid:
        out.push_back("iid changed");
        break;
      case SplitKind::kNewConjunction:
        if (train_pairs.count({b.shape, b.color})) out.push_back("pair seen");
        if (!shapes.count(b.shape) || !colors.count(b.color)) out.push_back("attribute unseen");
        break;
      case SplitKind::kExtrapolationColor:
        if (colors.count(b.color)) out.push_back("color seen");
        break;
      case SplitKind::kExtrapolationShape:
        if (shapes.count(b.shape)) out.push_back("shape seen");
        break;
      case SplitKind::kNewDimensionShapeTrain:
        if (b.shape != a.shape) out.push_back("varied attribute changed");
        break;
      case SplitKind::kNewDimensionColorTrain:
        if (b.color != a.color) out.push_back("varied attribute changed");
        break;
    }
  }
  if (differing != s.num_changed) out.push_back("k mismatch");
  if (s.kind == SplitKind::kNewDimensionShapeTrain && (colors.size() != 1 || (n > 1 && shapes.size() < 2))) {
    out.push_back("train dimensions");
  }
  if (s.kind == SplitKind::kNewDimensionColorTrain && (shapes.size() != 1 || (n > 1 && colors.size() < 2))) {
    out.push_back("train dimensions");
  }
  return out;
}

TEST(Oodgen, ThousandRandomSplitsValidate) {
  Rng rng(2024);
  const AttributeCatalog catalog = envs::DefaultCatalog();
  int validated = 0, infeasible = 0;
  std::set<SplitKind> kinds_seen;
  while (validated < 1000) {
    const SplitKind kind = kAllKinds[rng.UniformInt(std::size(kAllKinds))];
    const std::size_t objects = 1 + rng.UniformInt(5);
    const int k = kind == SplitKind::kIid ? 0 : 1 + static_cast<int>(rng.UniformInt(objects));
    const std::uint64_t seed = rng.UniformInt(1u << 30);
    SplitSpec s;
    try {
      s = MakeSplit(kind, k, catalog, objects, seed);
    } catch (const Error& e) {
      EXPECT_EQ(e.category(), ErrorCategory::kInfeasible) << e.what();
      ++infeasible;
      continue;
    }
    const ValidationReport r = ValidateSplit(s);
    ASSERT_TRUE(r.ok()) << KindName(kind) << " K=" << objects << " k=" << k << ": " << r.violations.front();
    const auto problems = OracleProblems(s);
    ASSERT_TRUE(problems.empty()) << KindName(kind) << " K=" << objects << " k=" << k << ": " << problems.front();
    kinds_seen.insert(kind);
    ++validated;
  }
  EXPECT_EQ(kinds_seen.size(), std::size(kAllKinds));
  EXPECT_GT(infeasible, 0);  // K = 1 conjunctions and new dimensions cannot exist
}

TEST(Oodgen, LargerKChangesSupersetOnSharedTrain) {
  const AttributeCatalog catalog = envs::DefaultCatalog();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const SplitSpec base = MakeSplit(SplitKind::kIid, 0, catalog, 5, seed);
    for (SplitKind kind : {SplitKind::kNewConjunction, SplitKind::kExtrapolationColor, SplitKind::kExtrapolationShape}) {
      std::set<std::size_t> previous;
      for (int k = 1; k <= 5; ++k) {
        SplitSpec s;
        try {
          s = MakeSplit(kind, k, catalog, 5, seed);
        } catch (const Error&) {
          break;  // the reserve pool ran out
        }
        EXPECT_EQ(s.train, base.train);
        std::set<std::size_t> changed;
        for (std::size_t i = 0; i < 5; ++i) {
          if (!(s.train[i] == s.test[i])) changed.insert(i);
        }
        EXPECT_TRUE(std::includes(changed.begin(), changed.end(), previous.begin(), previous.end()));
        previous = changed;
      }
    }
  }
}

TEST(Oodgen, DeterministicAndJsonRoundTrip) {
  const AttributeCatalog catalog = envs::DefaultCatalog();
  for (SplitKind kind : kAllKinds) {
    const int k = kind == SplitKind::kIid ? 0 : 1;
    const SplitSpec a = MakeSplit(kind, k, catalog, 4, 77);
    const SplitSpec b = MakeSplit(kind, k, catalog, 4, 77);
    EXPECT_EQ(SplitToJson(a), SplitToJson(b));
    const SplitSpec back = SplitFromJson(SplitToJson(a));
    EXPECT_EQ(back.train, a.train);
    EXPECT_EQ(back.test, a.test);
    EXPECT_EQ(SplitToJson(back), SplitToJson(a));
    EXPECT_EQ(ParseKind(KindName(kind)), kind);
  }
  EXPECT_THROW(ParseKind("sideways"), Error);
}

TEST(Oodgen, InfeasibleRequestsNameTheProblem) {
  const AttributeCatalog catalog = envs::DefaultCatalog();
  auto message = [&](SplitKind kind, int k, std::size_t objects) -> std::string {
    try {
      MakeSplit(kind, k, catalog, objects, 1);
    } catch (const Error& e) {
      EXPECT_EQ(e.category(), ErrorCategory::kInfeasible);
      return e.what();
    }
    return "";
  };
  EXPECT_NE(message(SplitKind::kExtrapolationColor, 6, 5).find("k=6"), std::string::npos);
  EXPECT_NE(message(SplitKind::kNewConjunction, 0, 5).find("k=0"), std::string::npos);
  EXPECT_NE(message(SplitKind::kExtrapolationColor, 1, 6).find("held-out color"), std::string::npos);
  EXPECT_NE(message(SplitKind::kNewDimensionShapeTrain, 1, 1).find("two objects"), std::string::npos);
  EXPECT_NE(message(SplitKind::kIid, 0, 7).find("pool smaller"), std::string::npos);
}

class CraftedViolation : public ::testing::Test {
 protected:
  SplitSpec Base(SplitKind kind, int k) { return MakeSplit(kind, k, envs::DefaultCatalog(), 5, 3); }
};

TEST_F(CraftedViolation, DuplicatePair) {
  SplitSpec s = Base(SplitKind::kIid, 0);
  s.train[1] = s.train[0];
  s.test = s.train;
  EXPECT_TRUE(ValidateSplit(s).Mentions("duplicate pair in train"));
  EXPECT_TRUE(ValidateSplit(s).Mentions("duplicate pair in test"));
}

TEST_F(CraftedViolation, IidWithChange) {
  SplitSpec s = Base(SplitKind::kIid, 0);
  s.test[2].color = 5;
  const ValidationReport r = ValidateSplit(s);
  EXPECT_TRUE(r.Mentions("iid test differs from train"));
  EXPECT_TRUE(r.Mentions("changed-object count mismatch"));
}

TEST_F(CraftedViolation, ConjunctionAlreadyInTraining) {
  SplitSpec s = Base(SplitKind::kNewConjunction, 1);
  for (std::size_t i = 0; i < 5; ++i) {
    if (!(s.train[i] == s.test[i])) s.test[i] = s.train[(i + 1) % 5];
  }
  EXPECT_TRUE(ValidateSplit(s).Mentions("conjunction seen in training"));
}

TEST_F(CraftedViolation, ConjunctionUsesUnseenColor) {
  SplitSpec s = Base(SplitKind::kNewConjunction, 1);
  for (std::size_t i = 0; i < 5; ++i) {
    if (!(s.train[i] == s.test[i])) s.test[i].color = 5;
  }
  EXPECT_TRUE(ValidateSplit(s).Mentions("conjunction color unseen in training"));
}

TEST_F(CraftedViolation, ExtrapolatedColorSeen) {
  SplitSpec s = Base(SplitKind::kExtrapolationColor, 1);
  for (std::size_t i = 0; i < 5; ++i) {
    if (!(s.train[i] == s.test[i])) s.test[i].color = s.train[(i + 1) % 5].color;
  }
  EXPECT_TRUE(ValidateSplit(s).Mentions("extrapolated color seen in training"));
}

TEST_F(CraftedViolation, ExtrapolatedShapeSeen) {
  SplitSpec s = Base(SplitKind::kExtrapolationShape, 1);
  for (std::size_t i = 0; i < 5; ++i) {
    if (!(s.train[i] == s.test[i])) s.test[i].shape = s.train[(i + 1) % 5].shape;
  }
  EXPECT_TRUE(ValidateSplit(s).Mentions("extrapolated shape seen in training"));
}

TEST_F(CraftedViolation, WrongK) {
  SplitSpec s = Base(SplitKind::kExtrapolationColor, 2);
  s.num_changed = 3;
  EXPECT_TRUE(ValidateSplit(s).Mentions("changed-object count mismatch"));
  s.num_changed = 9;
  EXPECT_TRUE(ValidateSplit(s).Mentions("k out of range"));
}

TEST_F(CraftedViolation, NewDimensionTrainVariesBoth) {
  SplitSpec s = Base(SplitKind::kNewDimensionShapeTrain, 1);
  s.train[0].color = (s.train[0].color + 1) % 6;
  s.test[0] = s.train[0];
  EXPECT_TRUE(ValidateSplit(s).Mentions("train varies both dimensions"));
}

TEST_F(CraftedViolation, NewDimensionChangesVariedAttribute) {
  SplitSpec s = Base(SplitKind::kNewDimensionColorTrain, 1);
  for (std::size_t i = 0; i < 5; ++i) {
    if (!(s.train[i] == s.test[i])) s.test[i].color = 5;
  }
  EXPECT_TRUE(ValidateSplit(s).Mentions("must alter only the held-constant attribute"));
}

TEST_F(CraftedViolation, OutsideCatalogAndSizeMismatch) {
  SplitSpec s = Base(SplitKind::kIid, 0);
  s.test[0].shape = 40;
  EXPECT_TRUE(ValidateSplit(s).Mentions("attribute id outside catalog"));
  s = Base(SplitKind::kIid, 0);
  s.test.pop_back();
  EXPECT_TRUE(ValidateSplit(s).Mentions("object counts differ"));
}

}  // namespace
}  // namespace slotlab::oodgen
