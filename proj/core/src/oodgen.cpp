#include "slotlab/oodgen.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "slotlab/envs/dataset_io.hpp"
#include "slotlab/error.hpp"
#include "slotlab/rng.hpp"

namespace slotlab::oodgen {
namespace {

using nlohmann::json;

[[noreturn]] void Infeasible(const std::string& message) { Fail(ErrorCategory::kInfeasible, message); }

std::vector<int> Shuffled(std::vector<int> v, Rng& rng) {
  rng.Shuffle(std::span<int>(v));
  return v;
}

void CheckPoolIds(const std::vector<int>& pool, std::size_t limit, const char* what) {
  for (int id : pool) {
    if (id < 0 || id >= static_cast<int>(limit)) Infeasible(std::string(what) + " pool references an id outside the catalog");
  }
}

enum Stream : std::uint64_t { kBaseStream = 1, kOrderStream = 2, kChangeStream = 3 };

}  // namespace

std::string_view KindName(SplitKind kind) {
  switch (kind) {
    case SplitKind::kIid: return "iid";
    case SplitKind::kNewConjunction: return "new-conjunction";
    case SplitKind::kExtrapolationColor: return "extrapolation-color";
    case SplitKind::kExtrapolationShape: return "extrapolation-shape";
    case SplitKind::kNewDimensionShapeTrain: return "new-dimension-shape-train";
    case SplitKind::kNewDimensionColorTrain: return "new-dimension-color-train";
  }
  return "unknown";
}

SplitKind ParseKind(std::string_view name) {
  for (SplitKind k : kAllKinds) {
    if (KindName(k) == name) return k;
  }
  Fail(ErrorCategory::kConfig, "unknown split kind '" + std::string(name) + "'");
}

bool UsesBaseTrainAssignment(SplitKind kind) {
  return kind != SplitKind::kNewDimensionShapeTrain && kind != SplitKind::kNewDimensionColorTrain;
}

AttributePools DefaultPools(const AttributeCatalog& catalog, std::size_t num_objects) {
  AttributePools pools;
  for (int s = 0; s < static_cast<int>(catalog.num_shapes()); ++s) {
    (s < static_cast<int>(num_objects) ? pools.train_shapes : pools.reserve_shapes).push_back(s);
  }
  for (int c = 0; c < static_cast<int>(catalog.num_colors()); ++c) {
    (c < static_cast<int>(num_objects) ? pools.train_colors : pools.reserve_colors).push_back(c);
  }
  return pools;
}

SplitSpec MakeSplit(SplitKind kind, int num_changed, const AttributeCatalog& catalog, std::size_t num_objects,
                    std::uint64_t seed) {
  return MakeSplit(kind, num_changed, catalog, DefaultPools(catalog, num_objects), num_objects, seed);
}

SplitSpec MakeSplit(SplitKind kind, int num_changed, const AttributeCatalog& catalog, const AttributePools& pools,
                    std::size_t num_objects, std::uint64_t seed) {
  const int objects = static_cast<int>(num_objects);
  if (objects < 1) Infeasible("split needs at least one object");
  CheckPoolIds(pools.train_shapes, catalog.num_shapes(), "train shape");
  CheckPoolIds(pools.reserve_shapes, catalog.num_shapes(), "reserve shape");
  CheckPoolIds(pools.train_colors, catalog.num_colors(), "train color");
  CheckPoolIds(pools.reserve_colors, catalog.num_colors(), "reserve color");
  if (kind == SplitKind::kIid) {
    num_changed = 0;
  } else if (num_changed < 1 || num_changed > objects) {
    Infeasible("k=" + std::to_string(num_changed) + " outside [1, K=" + std::to_string(objects) + "] for " +
               std::string(KindName(kind)));
  }

  SplitSpec spec;
  spec.kind = kind;
  spec.num_changed = num_changed;
  spec.seed = seed;
  spec.catalog = catalog;
  spec.pools = pools;

  Rng base_rng(DeriveSeed(seed, kBaseStream));
  Rng order_rng(DeriveSeed(seed, kOrderStream));
  Rng change_rng(DeriveSeed(seed, kChangeStream));
  std::vector<int> order(objects);
  std::iota(order.begin(), order.end(), 0);
  order = Shuffled(order, order_rng);
  spec.changed_objects.assign(order.begin(), order.begin() + num_changed);

  if (UsesBaseTrainAssignment(kind)) {
    if (pools.train_shapes.size() < num_objects) Infeasible("train shape pool smaller than the number of objects");
    if (pools.train_colors.size() < num_objects) Infeasible("train color pool smaller than the number of objects");
    const auto shapes = Shuffled(pools.train_shapes, base_rng);
    const auto colors = Shuffled(pools.train_colors, base_rng);
    for (int i = 0; i < objects; ++i) spec.train.push_back({shapes[i], colors[i]});
    spec.test = spec.train;
    switch (kind) {
      case SplitKind::kIid:
        break;
      case SplitKind::kNewConjunction: {
        if (objects < 2) Infeasible("new conjunction needs at least two train shapes and two train colors");
        if (num_changed == 1) {
          spec.test[order[0]].color = spec.train[order[1]].color;
        } else {
          for (int j = 0; j < num_changed; ++j) {
            spec.test[order[j]].color = spec.train[order[(j + 1) % num_changed]].color;
          }
        }
        break;
      }
      case SplitKind::kExtrapolationColor: {
        if (pools.reserve_colors.empty()) Infeasible("extrapolation needs a held-out color");
        const auto reserve = Shuffled(pools.reserve_colors, change_rng);
        for (int j = 0; j < num_changed; ++j) spec.test[order[j]].color = reserve[j % reserve.size()];
        break;
      }
      case SplitKind::kExtrapolationShape: {
        if (pools.reserve_shapes.empty()) Infeasible("extrapolation needs a held-out shape");
        const auto reserve = Shuffled(pools.reserve_shapes, change_rng);
        for (int j = 0; j < num_changed; ++j) spec.test[order[j]].shape = reserve[j % reserve.size()];
        break;
      }
      default:
        break;
    }
    return spec;
  }

  // New dimension: one attribute held constant in training.
  const bool shape_train = kind == SplitKind::kNewDimensionShapeTrain;
  const std::vector<int>& varied_pool = shape_train ? pools.train_shapes : pools.train_colors;
  const std::vector<int>& fixed_pool = shape_train ? pools.train_colors : pools.train_shapes;
  const std::vector<int>& fixed_reserve = shape_train ? pools.reserve_colors : pools.reserve_shapes;
  if (objects < 2) Infeasible("new dimension needs at least two objects so that both dimensions can vary");
  if (varied_pool.size() < num_objects) Infeasible("train pool of the varied attribute is smaller than the number of objects");
  if (fixed_pool.empty()) Infeasible("new dimension needs a train value for the held-constant attribute");
  const auto varied = Shuffled(varied_pool, base_rng);
  const int fixed = fixed_pool[base_rng.UniformInt(fixed_pool.size())];
  std::vector<int> alternatives;
  for (int v : fixed_pool) {
    if (v != fixed) alternatives.push_back(v);
  }
  for (int v : fixed_reserve) {
    if (v != fixed) alternatives.push_back(v);
  }
  if (alternatives.size() < static_cast<std::size_t>(num_changed)) {
    Infeasible("new dimension needs " + std::to_string(num_changed) + " alternative values for the held-constant attribute");
  }
  alternatives = Shuffled(alternatives, change_rng);
  for (int i = 0; i < objects; ++i) {
    spec.train.push_back(shape_train ? AttributePair{varied[i], fixed} : AttributePair{fixed, varied[i]});
  }
  spec.test = spec.train;
  for (int j = 0; j < num_changed; ++j) {
    (shape_train ? spec.test[order[j]].color : spec.test[order[j]].shape) = alternatives[j];
  }
  return spec;
}

bool ValidationReport::Mentions(std::string_view clause) const {
  return std::any_of(violations.begin(), violations.end(),
                     [&](const std::string& v) { return v.find(clause) != std::string::npos; });
}

ValidationReport ValidateSplit(const SplitSpec& spec) {
  ValidationReport report;
  auto violate = [&](std::string clause) { report.violations.push_back(std::move(clause)); };
  const Assignment& train = spec.train;
  const Assignment& test = spec.test;
  const int objects = static_cast<int>(train.size());

  if (train.size() != test.size()) {
    violate("train and test object counts differ");
    return report;
  }
  for (const Assignment* a : {&train, &test}) {
    for (const AttributePair& p : *a) {
      if (p.shape < 0 || p.shape >= static_cast<int>(spec.catalog.num_shapes()) || p.color < 0 ||
          p.color >= static_cast<int>(spec.catalog.num_colors())) {
        violate("attribute id outside catalog");
        return report;
      }
    }
  }
  if (std::set<AttributePair>(train.begin(), train.end()).size() != train.size()) {
    violate("duplicate pair in train assignment");
  }
  if (std::set<AttributePair>(test.begin(), test.end()).size() != test.size()) {
    violate("duplicate pair in test assignment");
  }

  std::vector<int> changed;
  for (int i = 0; i < objects; ++i) {
    if (!(train[i] == test[i])) changed.push_back(i);
  }
  const int k = spec.num_changed;
  if (k < 0 || k > objects) violate("k out of range");
  if (static_cast<int>(changed.size()) != k) {
    violate("changed-object count mismatch: " + std::to_string(changed.size()) + " objects differ, k=" + std::to_string(k));
  }

  std::set<int> train_shapes, train_colors, test_shapes, test_colors;
  std::set<AttributePair> train_pairs(train.begin(), train.end());
  for (const AttributePair& p : train) train_shapes.insert(p.shape), train_colors.insert(p.color);
  for (const AttributePair& p : test) test_shapes.insert(p.shape), test_colors.insert(p.color);

  switch (spec.kind) {
    case SplitKind::kIid:
      if (k != 0) violate("iid requires k = 0");
      if (!changed.empty()) violate("iid test differs from train");
      break;
    case SplitKind::kNewConjunction:
      if (k == 0) violate("k out of range: new conjunction needs k >= 1");
      for (int i : changed) {
        if (train_pairs.count(test[i])) violate("conjunction seen in training (object " + std::to_string(i) + ")");
        if (!train_shapes.count(test[i].shape)) violate("conjunction shape unseen in training (object " + std::to_string(i) + ")");
        if (!train_colors.count(test[i].color)) violate("conjunction color unseen in training (object " + std::to_string(i) + ")");
      }
      break;
    case SplitKind::kExtrapolationColor:
    case SplitKind::kExtrapolationShape: {
      const bool color = spec.kind == SplitKind::kExtrapolationColor;
      if (k == 0) violate("k out of range: extrapolation needs k >= 1");
      for (int i : changed) {
        if (color ? train_colors.count(test[i].color) : train_shapes.count(test[i].shape)) {
          violate(std::string("extrapolated ") + (color ? "color" : "shape") + " seen in training (object " +
                  std::to_string(i) + ")");
        }
      }
      break;
    }
    case SplitKind::kNewDimensionShapeTrain:
    case SplitKind::kNewDimensionColorTrain: {
      const bool shape_train = spec.kind == SplitKind::kNewDimensionShapeTrain;
      if (k == 0) violate("k out of range: new dimension needs k >= 1");
      const std::size_t constant = shape_train ? train_colors.size() : train_shapes.size();
      const std::size_t varied = shape_train ? train_shapes.size() : train_colors.size();
      if (constant != 1) violate("train varies both dimensions");
      if (varied < 2) violate("train does not vary its dimension");
      if (test_shapes.size() < 2 || test_colors.size() < 2) violate("test does not vary both dimensions");
      for (int i : changed) {
        const bool kept = shape_train ? test[i].shape == train[i].shape : test[i].color == train[i].color;
        if (!kept) violate("new-dimension change must alter only the held-constant attribute (object " + std::to_string(i) + ")");
      }
      break;
    }
  }
  return report;
}

json SplitToJson(const SplitSpec& spec) {
  return {{"kind", std::string(KindName(spec.kind))},
          {"k", spec.num_changed},
          {"seed", spec.seed},
          {"catalog", envs::CatalogToJson(spec.catalog)},
          {"pools",
           {{"train_shapes", spec.pools.train_shapes},
            {"train_colors", spec.pools.train_colors},
            {"reserve_shapes", spec.pools.reserve_shapes},
            {"reserve_colors", spec.pools.reserve_colors}}},
          {"train", envs::AssignmentToJson(spec.train)},
          {"test", envs::AssignmentToJson(spec.test)},
          {"changed_objects", spec.changed_objects}};
}

SplitSpec SplitFromJson(const json& j) {
  try {
    SplitSpec spec;
    spec.kind = ParseKind(j.at("kind").get<std::string>());
    spec.num_changed = j.at("k").get<int>();
    spec.seed = j.at("seed").get<std::uint64_t>();
    spec.catalog = envs::CatalogFromJson(j.at("catalog"));
    const json& p = j.at("pools");
    spec.pools.train_shapes = p.at("train_shapes").get<std::vector<int>>();
    spec.pools.train_colors = p.at("train_colors").get<std::vector<int>>();
    spec.pools.reserve_shapes = p.at("reserve_shapes").get<std::vector<int>>();
    spec.pools.reserve_colors = p.at("reserve_colors").get<std::vector<int>>();
    spec.train = envs::AssignmentFromJson(j.at("train"));
    spec.test = envs::AssignmentFromJson(j.at("test"));
    spec.changed_objects = j.at("changed_objects").get<std::vector<int>>();
    return spec;
  } catch (const json::exception& e) {
    Fail(ErrorCategory::kFormat, std::string("malformed split descriptor: ") + e.what());
  }
}

}  // namespace slotlab::oodgen
