#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "slotlab/envs/catalog.hpp"
#include "slotlab/rng.hpp"

namespace slotlab::envs {

// Row 0 is the top row; kUp decrements the row.
enum class Direction : std::uint8_t { kUp = 0, kDown = 1, kLeft = 2, kRight = 3 };
inline constexpr int kNumDirections = 4;

struct Cell {
  int row = 0;
  int col = 0;
  bool operator==(const Cell&) const = default;
};

struct GridAction {
  std::size_t object = 0;
  Direction direction = Direction::kUp;
  bool operator==(const GridAction&) const = default;
};

struct GridState {
  int grid_size = 5;
  std::vector<Cell> positions;         // one per object
  std::vector<AttributePair> attributes;  // one per object

  std::size_t num_objects() const { return positions.size(); }
  bool operator==(const GridState&) const = default;
};

// Places assignment.size() objects on distinct cells drawn uniformly without
// replacement. Throws kCapacity when there are more objects than cells and
// kCatalog when an attribute id is outside the catalog.
GridState GridReset(Rng& rng, int grid_size, const AttributeCatalog& catalog, const Assignment& assignment);

// Moves one object by one cell. Off-grid or occupied destinations leave the
// state unchanged.
GridState GridStep(const GridState& state, const GridAction& action);

// K blocks of four, one-hot at the acted object's direction; zeros elsewhere.
// std::nullopt (no action) encodes as all zeros.
std::vector<float> EncodeAction(const std::optional<GridAction>& action, std::size_t num_objects);

}  // namespace slotlab::envs
