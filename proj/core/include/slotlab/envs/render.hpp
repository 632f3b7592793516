#pragma once

#include <vector>

#include "slotlab/envs/catalog.hpp"
#include "slotlab/envs/grid_world.hpp"
#include "slotlab/envs/image.hpp"
#include "slotlab/envs/three_body.hpp"

namespace slotlab::envs {

// Black background; each object is its shape stencil in its color inside its
// 10x10 cell. Image side is 10 * grid_size.
Image RenderGrid(const GridState& state, const AttributeCatalog& catalog);

// Isometric cube layout shared by the blocks renderer and its tests.
struct IsoGeometry {
  double origin_x = 25.0;  // screen position of grid corner (0,0) at ground level
  double origin_y = 14.0;
  double unit_x = 4.0;     // screen dx per grid step (col: +, row: -)
  double unit_y = 2.0;     // screen dy per grid step (col and row: +)
  double cube_height = 6.0;
  int image_size = 50;
  int max_grid_size = 5;
};

enum class CubeFace : std::uint8_t { kTop = 0, kLeft = 1, kRight = 2 };
inline constexpr double kFaceBrightness[3] = {1.0, 0.75, 0.5};

// Object id (or -1) and face visible at every pixel, row-major.
struct IsoLabels {
  std::vector<int> object;
  std::vector<CubeFace> face;
};

// Cubes drawn back to front (ascending row + col) so nearer cubes overwrite
// farther ones. Only grid_size <= 5 fits the 50x50 frame.
IsoLabels RasterizeBlocksIso(const GridState& state, const IsoGeometry& geometry = {});
Image RenderBlocksIso(const GridState& state, const AttributeCatalog& catalog, const IsoGeometry& geometry = {});

// Each body is a filled disc in its color; channels 0-2 hold the previous
// frame, 3-5 the current frame. Bodies are drawn in index order.
Image RenderBodies(const BodyState& current, const BodyState& previous, const std::vector<Rgb>& colors,
                   const BodyView& view = {});

// Per-object binary masks at image resolution (row-major), used as ground
// truth by diagnostics.
std::vector<std::vector<float>> GridObjectMasks(const GridState& state, const AttributeCatalog& catalog);
std::vector<std::vector<float>> BlocksObjectMasks(const GridState& state, const IsoGeometry& geometry = {});
std::vector<std::vector<float>> BodyObjectMasks(const BodyState& state, const BodyView& view = {});

}  // namespace slotlab::envs
