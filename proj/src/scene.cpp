#include "activedt/scene.hpp"

#include <algorithm>
#include <cmath>

namespace adt {

namespace {
constexpr std::array<std::string_view, 4> kCategoryNames = {"open", "sparse", "cluttered", "trap"};
}

std::string_view category_name(Category c) { return kCategoryNames[static_cast<int>(c)]; }

std::optional<Category> category_from_name(std::string_view name) {
  for (int i = 0; i < 4; ++i) {
    if (kCategoryNames[i] == name) return static_cast<Category>(i);
  }
  return std::nullopt;
}

std::string Scene::id() const {
  return std::string(category_name(category)) + "-" + std::to_string(seed);
}

bool object_footprint_clear(const ObjectSpec& object, const OccupancyGrid& grid) {
  const double cs = grid.cell_size();
  const double r = object.radius;
  const Point2 c = object.center;
  if (c.x - r < 0.0 || c.y - r < 0.0 || c.x + r > grid.extent_x() || c.y + r > grid.extent_y()) {
    return false;
  }
  const int x0 = static_cast<int>(std::floor((c.x - r) / cs));
  const int x1 = static_cast<int>(std::floor((c.x + r) / cs));
  const int y0 = static_cast<int>(std::floor((c.y - r) / cs));
  const int y1 = static_cast<int>(std::floor((c.y + r) / cs));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      if (!grid.is_obstacle(x, y)) continue;
      // Closest point of the cell to the disc center.
      const double qx = std::clamp(c.x, x * cs, (x + 1) * cs);
      const double qy = std::clamp(c.y, y * cs, (y + 1) * cs);
      if (std::hypot(qx - c.x, qy - c.y) <= r) return false;
    }
  }
  return true;
}

}  // namespace adt
