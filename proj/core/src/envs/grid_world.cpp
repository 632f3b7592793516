#include "slotlab/envs/grid_world.hpp"

#include <numeric>
#include <string>

#include "slotlab/error.hpp"

namespace slotlab::envs {

GridState GridReset(Rng& rng, int grid_size, const AttributeCatalog& catalog, const Assignment& assignment) {
  if (grid_size <= 0) Fail(ErrorCategory::kContract, "grid size must be positive");
  const std::size_t cells = static_cast<std::size_t>(grid_size) * grid_size;
  if (assignment.size() > cells) {
    Fail(ErrorCategory::kCapacity, std::to_string(assignment.size()) + " objects do not fit in a " +
                                       std::to_string(grid_size) + "x" + std::to_string(grid_size) + " grid");
  }
  for (const AttributePair& a : assignment) {
    if (a.shape < 0 || a.shape >= static_cast<int>(catalog.num_shapes()) || a.color < 0 ||
        a.color >= static_cast<int>(catalog.num_colors())) {
      Fail(ErrorCategory::kCatalog, "attribute id outside catalog");
    }
  }
  std::vector<int> order(cells);
  std::iota(order.begin(), order.end(), 0);
  // Partial Fisher-Yates: the first K slots are a uniform K-subset in uniform order.
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    std::swap(order[i], order[i + rng.UniformInt(cells - i)]);
  }
  GridState state;
  state.grid_size = grid_size;
  state.attributes = assignment;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    state.positions.push_back({order[i] / grid_size, order[i] % grid_size});
  }
  return state;
}

GridState GridStep(const GridState& state, const GridAction& action) {
  if (action.object >= state.num_objects()) {
    Fail(ErrorCategory::kContract, "action targets object " + std::to_string(action.object) + " of " +
                                       std::to_string(state.num_objects()));
  }
  Cell target = state.positions[action.object];
  switch (action.direction) {
    case Direction::kUp: --target.row; break;
    case Direction::kDown: ++target.row; break;
    case Direction::kLeft: --target.col; break;
    case Direction::kRight: ++target.col; break;
    default: Fail(ErrorCategory::kContract, "invalid direction");
  }
  if (target.row < 0 || target.col < 0 || target.row >= state.grid_size || target.col >= state.grid_size) {
    return state;
  }
  for (const Cell& other : state.positions) {
    if (other == target) return state;
  }
  GridState next = state;
  next.positions[action.object] = target;
  return next;
}

std::vector<float> EncodeAction(const std::optional<GridAction>& action, std::size_t num_objects) {
  std::vector<float> encoded(num_objects * kNumDirections, 0.0f);
  if (!action) return encoded;
  if (action->object >= num_objects) {
    Fail(ErrorCategory::kContract, "action object index " + std::to_string(action->object) +
                                       " >= number of objects " + std::to_string(num_objects));
  }
  const auto dir = static_cast<std::size_t>(action->direction);
  if (dir >= kNumDirections) Fail(ErrorCategory::kContract, "direction index out of range");
  encoded[action->object * kNumDirections + dir] = 1.0f;
  return encoded;
}

}  // namespace slotlab::envs
