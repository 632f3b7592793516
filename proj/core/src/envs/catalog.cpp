#include "slotlab/envs/catalog.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "slotlab/error.hpp"

namespace slotlab::envs {
namespace {

struct Stencil {
  const char* name;
  std::array<const char*, kCellPixels> rows;
};

// clang-format off
constexpr Stencil kStencils[] = {
    {"square", {"##########", "##########", "##########", "##########", "##########",
                "##########", "##########", "##########", "##########", "##########"}},
    {"triangle", {"....##....", "....##....", "...####...", "...####...", "..######..",
                  "..######..", ".########.", ".########.", "##########", "##########"}},
    {"circle", {"...####...", ".########.", ".########.", "##########", "##########",
                "##########", "##########", ".########.", ".########.", "...####..."}},
    {"diamond", {"....##....", "...####...", "..######..", ".########.", "##########",
                 "##########", ".########.", "..######..", "...####...", "....##...."}},
    {"cross", {"...####...", "...####...", "...####...", "##########", "##########",
               "##########", "##########", "...####...", "...####...", "...####..."}},
    {"pentagon", {"....##....", "...####...", "..######..", ".########.", "##########",
                  "##########", ".########.", ".########.", "..######..", "..######.."}},
    {"ring", {"..######..", ".##....##.", "##......##", "##......##", "##......##",
              "##......##", "##......##", "##......##", ".##....##.", "..######.."}},
    {"hourglass", {"##########", ".########.", "..######..", "...####...", "....##....",
                   "....##....", "...####...", "..######..", ".########.", "##########"}},
};
// clang-format on

const std::map<std::string, ShapeMask, std::less<>>& MaskTable() {
  static const auto* table = [] {
    auto* t = new std::map<std::string, ShapeMask, std::less<>>();
    for (const Stencil& s : kStencils) {
      ShapeMask mask{};
      for (int r = 0; r < kCellPixels; ++r) {
        for (int c = 0; c < kCellPixels; ++c) mask[r * kCellPixels + c] = s.rows[r][c] == '#';
      }
      t->emplace(s.name, mask);
    }
    return t;
  }();
  return *table;
}

}  // namespace

const std::vector<std::string>& BuiltinShapeNames() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const Stencil& s : kStencils) v.emplace_back(s.name);
    return v;
  }();
  return names;
}

const ShapeMask& BuiltinShapeMask(std::string_view name) {
  const auto& table = MaskTable();
  auto it = table.find(name);
  if (it == table.end()) Fail(ErrorCategory::kCatalog, "unknown shape '" + std::string(name) + "'");
  return it->second;
}

AttributeCatalog DefaultCatalog() {
  AttributeCatalog c;
  c.shapes = {"square", "triangle", "circle", "diamond", "cross", "pentagon"};
  c.color_names = {"red", "green", "blue", "yellow", "magenta", "cyan"};
  c.colors = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 0}, {1, 0, 1}, {0, 1, 1}};
  return c;
}

void ValidateCatalog(const AttributeCatalog& catalog) {
  if (catalog.color_names.size() != catalog.colors.size()) {
    Fail(ErrorCategory::kCatalog, "color names and color values differ in length");
  }
  std::set<std::string> shapes;
  for (const auto& s : catalog.shapes) {
    BuiltinShapeMask(s);
    if (!shapes.insert(s).second) Fail(ErrorCategory::kCatalog, "duplicate shape '" + s + "'");
  }
  std::set<std::string> names;
  for (const auto& n : catalog.color_names) {
    if (!names.insert(n).second) Fail(ErrorCategory::kCatalog, "duplicate color name '" + n + "'");
  }
  for (std::size_t i = 0; i < catalog.colors.size(); ++i) {
    const Rgb& a = catalog.colors[i];
    for (double v : {a.r, a.g, a.b}) {
      if (!(v >= 0.0 && v <= 1.0)) Fail(ErrorCategory::kCatalog, "color channel outside [0,1]");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (catalog.colors[j] == a) Fail(ErrorCategory::kCatalog, "duplicate color value");
    }
  }
}

std::uint8_t ToByte(double channel) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(channel, 0.0, 1.0) * 255.0));
}

}  // namespace slotlab::envs
