#include "slotlab/envs/render.hpp"

#include <algorithm>
#include <array>
#include <numeric>

#include "slotlab/error.hpp"

namespace slotlab::envs {
namespace {

const Rgb& ColorOf(const AttributeCatalog& catalog, const AttributePair& a) {
  if (a.color < 0 || a.color >= static_cast<int>(catalog.num_colors())) {
    Fail(ErrorCategory::kCatalog, "color id " + std::to_string(a.color) + " outside catalog");
  }
  return catalog.colors[a.color];
}

const ShapeMask& MaskOf(const AttributeCatalog& catalog, const AttributePair& a) {
  if (a.shape < 0 || a.shape >= static_cast<int>(catalog.num_shapes())) {
    Fail(ErrorCategory::kCatalog, "shape id " + std::to_string(a.shape) + " outside catalog");
  }
  return BuiltinShapeMask(catalog.shapes[a.shape]);
}

struct Point {
  double x, y;
};

// Pixel centers never fall exactly on a cube edge for integer geometry, so
// the sign test needs no tie rule.
bool InsideConvex(const std::array<Point, 4>& quad, double px, double py) {
  bool positive = false, negative = false;
  for (int i = 0; i < 4; ++i) {
    const Point& a = quad[i];
    const Point& b = quad[(i + 1) % 4];
    const double cross = (b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x);
    positive = positive || cross > 0;
    negative = negative || cross < 0;
  }
  return !(positive && negative);
}

}  // namespace

Image RenderGrid(const GridState& state, const AttributeCatalog& catalog) {
  const std::size_t side = static_cast<std::size_t>(state.grid_size) * kCellPixels;
  Image image(side, side, 3);
  for (std::size_t k = 0; k < state.num_objects(); ++k) {
    const Rgb& color = ColorOf(catalog, state.attributes[k]);
    const ShapeMask& mask = MaskOf(catalog, state.attributes[k]);
    const std::uint8_t rgb[3] = {ToByte(color.r), ToByte(color.g), ToByte(color.b)};
    const Cell cell = state.positions[k];
    for (int r = 0; r < kCellPixels; ++r) {
      for (int c = 0; c < kCellPixels; ++c) {
        if (!mask[r * kCellPixels + c]) continue;
        for (int ch = 0; ch < 3; ++ch) image.at(cell.row * kCellPixels + r, cell.col * kCellPixels + c, ch) = rgb[ch];
      }
    }
  }
  return image;
}

IsoLabels RasterizeBlocksIso(const GridState& state, const IsoGeometry& g) {
  if (state.grid_size > g.max_grid_size) {
    Fail(ErrorCategory::kUnsupported, "isometric renderer supports grids up to " + std::to_string(g.max_grid_size));
  }
  const std::size_t n = static_cast<std::size_t>(g.image_size) * g.image_size;
  IsoLabels labels{std::vector<int>(n, -1), std::vector<CubeFace>(n, CubeFace::kTop)};
  auto corner = [&](double row, double col, double lift) {
    return Point{g.origin_x + g.unit_x * (col - row), g.origin_y + g.unit_y * (col + row) - lift};
  };
  std::vector<std::size_t> order(state.num_objects());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return state.positions[a].row + state.positions[a].col < state.positions[b].row + state.positions[b].col;
  });
  const double h = g.cube_height;
  for (std::size_t k : order) {
    const double r = state.positions[k].row, c = state.positions[k].col;
    const std::array<std::array<Point, 4>, 3> faces = {{
        {corner(r, c, h), corner(r, c + 1, h), corner(r + 1, c + 1, h), corner(r + 1, c, h)},
        {corner(r + 1, c, h), corner(r + 1, c + 1, h), corner(r + 1, c + 1, 0), corner(r + 1, c, 0)},
        {corner(r, c + 1, h), corner(r + 1, c + 1, h), corner(r + 1, c + 1, 0), corner(r, c + 1, 0)},
    }};
    for (int f = 0; f < 3; ++f) {
      double min_x = 1e9, max_x = -1e9, min_y = 1e9, max_y = -1e9;
      for (const Point& p : faces[f]) {
        min_x = std::min(min_x, p.x), max_x = std::max(max_x, p.x);
        min_y = std::min(min_y, p.y), max_y = std::max(max_y, p.y);
      }
      const int x0 = std::max(0, static_cast<int>(min_x) - 1), x1 = std::min(g.image_size - 1, static_cast<int>(max_x) + 1);
      const int y0 = std::max(0, static_cast<int>(min_y) - 1), y1 = std::min(g.image_size - 1, static_cast<int>(max_y) + 1);
      for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
          if (!InsideConvex(faces[f], x + 0.5, y + 0.5)) continue;
          labels.object[y * g.image_size + x] = static_cast<int>(k);
          labels.face[y * g.image_size + x] = static_cast<CubeFace>(f);
        }
      }
    }
  }
  return labels;
}

Image RenderBlocksIso(const GridState& state, const AttributeCatalog& catalog, const IsoGeometry& geometry) {
  const IsoLabels labels = RasterizeBlocksIso(state, geometry);
  Image image(geometry.image_size, geometry.image_size, 3);
  for (std::size_t k = 0; k < state.num_objects(); ++k) ColorOf(catalog, state.attributes[k]);
  for (std::size_t p = 0; p < labels.object.size(); ++p) {
    const int k = labels.object[p];
    if (k < 0) continue;
    const Rgb& color = ColorOf(catalog, state.attributes[k]);
    const double shade = kFaceBrightness[static_cast<int>(labels.face[p])];
    image.pixels[p * 3 + 0] = ToByte(color.r * shade);
    image.pixels[p * 3 + 1] = ToByte(color.g * shade);
    image.pixels[p * 3 + 2] = ToByte(color.b * shade);
  }
  return image;
}

namespace {

template <typename Visit>
void ForEachDiscPixel(const Body& body, const BodyView& view, Visit visit) {
  const double cx = view.ToColumn(body.position[0]), cy = view.ToRow(body.position[1]);
  const double r2 = view.disc_radius * view.disc_radius;
  const int x0 = std::max(0, static_cast<int>(cx - view.disc_radius) - 1);
  const int x1 = std::min(view.image_size - 1, static_cast<int>(cx + view.disc_radius) + 1);
  const int y0 = std::max(0, static_cast<int>(cy - view.disc_radius) - 1);
  const int y1 = std::min(view.image_size - 1, static_cast<int>(cy + view.disc_radius) + 1);
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
      if (dx * dx + dy * dy <= r2) visit(y, x);
    }
  }
}

}  // namespace

Image RenderBodies(const BodyState& current, const BodyState& previous, const std::vector<Rgb>& colors,
                   const BodyView& view) {
  if (current.bodies.size() != previous.bodies.size() || colors.size() < current.bodies.size()) {
    Fail(ErrorCategory::kContract, "render_bodies: body count / color count mismatch");
  }
  Image image(view.image_size, view.image_size, 6);
  const BodyState* frames[2] = {&previous, &current};
  for (int f = 0; f < 2; ++f) {
    for (std::size_t k = 0; k < frames[f]->bodies.size(); ++k) {
      const std::uint8_t rgb[3] = {ToByte(colors[k].r), ToByte(colors[k].g), ToByte(colors[k].b)};
      ForEachDiscPixel(frames[f]->bodies[k], view, [&](int y, int x) {
        for (int ch = 0; ch < 3; ++ch) image.at(y, x, f * 3 + ch) = rgb[ch];
      });
    }
  }
  return image;
}

std::vector<std::vector<float>> GridObjectMasks(const GridState& state, const AttributeCatalog& catalog) {
  const std::size_t side = static_cast<std::size_t>(state.grid_size) * kCellPixels;
  std::vector<std::vector<float>> masks(state.num_objects(), std::vector<float>(side * side, 0.0f));
  for (std::size_t k = 0; k < state.num_objects(); ++k) {
    const ShapeMask& mask = MaskOf(catalog, state.attributes[k]);
    const Cell cell = state.positions[k];
    for (int r = 0; r < kCellPixels; ++r) {
      for (int c = 0; c < kCellPixels; ++c) {
        if (mask[r * kCellPixels + c]) masks[k][(cell.row * kCellPixels + r) * side + cell.col * kCellPixels + c] = 1.0f;
      }
    }
  }
  return masks;
}

std::vector<std::vector<float>> BlocksObjectMasks(const GridState& state, const IsoGeometry& geometry) {
  const IsoLabels labels = RasterizeBlocksIso(state, geometry);
  std::vector<std::vector<float>> masks(state.num_objects(), std::vector<float>(labels.object.size(), 0.0f));
  for (std::size_t p = 0; p < labels.object.size(); ++p) {
    if (labels.object[p] >= 0) masks[labels.object[p]][p] = 1.0f;
  }
  return masks;
}

std::vector<std::vector<float>> BodyObjectMasks(const BodyState& state, const BodyView& view) {
  const std::size_t n = static_cast<std::size_t>(view.image_size) * view.image_size;
  std::vector<std::vector<float>> masks(state.bodies.size(), std::vector<float>(n, 0.0f));
  for (std::size_t k = 0; k < state.bodies.size(); ++k) {
    ForEachDiscPixel(state.bodies[k], view, [&](int y, int x) { masks[k][y * view.image_size + x] = 1.0f; });
  }
  return masks;
}

}  // namespace slotlab::envs
