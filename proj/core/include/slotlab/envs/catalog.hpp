#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace slotlab::envs {

inline constexpr int kCellPixels = 10;

struct Rgb {
  double r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

// 10x10 binary mask, row-major, true where the shape covers the cell.
using ShapeMask = std::array<bool, kCellPixels * kCellPixels>;

// Names of every built-in stencil, in a fixed order.
const std::vector<std::string>& BuiltinShapeNames();
// Throws ErrorCategory::kCatalog for unknown names.
const ShapeMask& BuiltinShapeMask(std::string_view name);

// Ordered shape and color pools. Attribute ids index into these lists.
struct AttributeCatalog {
  std::vector<std::string> shapes;
  std::vector<std::string> color_names;
  std::vector<Rgb> colors;

  std::size_t num_shapes() const { return shapes.size(); }
  std::size_t num_colors() const { return colors.size(); }
};

// Six shapes (square, triangle, circle, diamond, cross, pentagon) and six
// colors (red, green, blue, yellow, magenta, cyan).
AttributeCatalog DefaultCatalog();

// Entries unique, colors in [0,1], every shape a known stencil.
void ValidateCatalog(const AttributeCatalog& catalog);

struct AttributePair {
  int shape = 0;
  int color = 0;
  bool operator==(const AttributePair&) const = default;
  auto operator<=>(const AttributePair&) const = default;
};

// One attribute pair per object, indexed by object id.
using Assignment = std::vector<AttributePair>;

std::uint8_t ToByte(double channel);

}  // namespace slotlab::envs
