#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "slotlab/envs/catalog.hpp"

namespace slotlab::oodgen {

using envs::AttributeCatalog;
using envs::AttributePair;
using envs::Assignment;

enum class SplitKind {
  kIid,
  kNewConjunction,
  kExtrapolationColor,
  kExtrapolationShape,
  kNewDimensionShapeTrain,  // train varies shape only, test adds color variation
  kNewDimensionColorTrain,  // train varies color only, test adds shape variation
};

inline constexpr SplitKind kAllKinds[] = {
    SplitKind::kIid,
    SplitKind::kNewConjunction,
    SplitKind::kExtrapolationColor,
    SplitKind::kExtrapolationShape,
    SplitKind::kNewDimensionShapeTrain,
    SplitKind::kNewDimensionColorTrain,
};

std::string_view KindName(SplitKind kind);
SplitKind ParseKind(std::string_view name);
// Kinds whose train assignment is the shared base assignment for a seed, so
// one trained model serves all of them.
bool UsesBaseTrainAssignment(SplitKind kind);

// Attribute pools. Train pools are what training draws from; reserves are
// held out for extrapolation.
struct AttributePools {
  std::vector<int> train_shapes;
  std::vector<int> train_colors;
  std::vector<int> reserve_shapes;
  std::vector<int> reserve_colors;
};

// First `num_objects` shapes/colors train, the rest are reserves.
AttributePools DefaultPools(const AttributeCatalog& catalog, std::size_t num_objects);

struct SplitSpec {
  SplitKind kind = SplitKind::kIid;
  int num_changed = 0;
  std::uint64_t seed = 0;
  AttributeCatalog catalog;
  AttributePools pools;
  Assignment train;
  Assignment test;
  std::vector<int> changed_objects;  // bookkeeping only; the validator ignores it

  std::size_t num_objects() const { return train.size(); }
};

// Builds a split for `num_objects` objects. Non-IID kinds require
// 1 <= k <= K; IID forces k = 0. For the base-assignment kinds the train
// assignment depends only on (catalog, pools, seed), and the changed objects
// for k are a prefix of one seed-determined object order, so larger k
// changes a superset of objects. Throws kInfeasible naming the violated
// requirement.
SplitSpec MakeSplit(SplitKind kind, int num_changed, const AttributeCatalog& catalog, const AttributePools& pools,
                    std::size_t num_objects, std::uint64_t seed);
SplitSpec MakeSplit(SplitKind kind, int num_changed, const AttributeCatalog& catalog, std::size_t num_objects,
                    std::uint64_t seed);

struct ValidationReport {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
  bool Mentions(std::string_view clause) const;
};

// Re-derives every invariant of the split's kind from the raw train/test
// assignments and catalog.
ValidationReport ValidateSplit(const SplitSpec& spec);

nlohmann::json SplitToJson(const SplitSpec& spec);
SplitSpec SplitFromJson(const nlohmann::json& j);

}  // namespace slotlab::oodgen
