#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "activedt/env.hpp"

namespace adt {

// Frozen parameters of the synthetic detector.
struct DetectorParams {
  double fov_deg = 90.0;
  double d_min = 0.6;
  double d_lo = 1.0;
  double d_hi = 2.0;
  double d_max = 4.5;
  int n_samples = 5;
  double img_w = 300.0;
  double img_h = 300.0;
  double bbox_scale = 150.0;  // px * m
  // Per-pose multiplicative noise; 0 disables it.
  double noise_std = 0.0;
  std::uint64_t noise_seed = 0;
  // Fan used for the depth and RGB proxies of the observation.
  int n_rays = 11;
  double max_range = 6.0;

  // Throws std::invalid_argument when an ordering or range constraint fails.
  void validate() const;
  DepthScanParams depth_params() const { return {n_rays, fov_deg, max_range}; }

  friend bool operator==(const DetectorParams&, const DetectorParams&) = default;
};

struct ObjectSpec {
  Point2 center;
  double radius = 0.2;
  double aspect = 1.0;  // bbox height / width
  int id = 0;

  friend bool operator==(const ObjectSpec& a, const ObjectSpec& b) {
    return a.center.x == b.center.x && a.center.y == b.center.y && a.radius == b.radius &&
           a.aspect == b.aspect && a.id == b.id;
  }
};

enum class Category : int { Open = 0, Sparse = 1, Cluttered = 2, Trap = 3 };
inline constexpr std::array<Category, 4> kAllCategories = {Category::Open, Category::Sparse,
                                                          Category::Cluttered, Category::Trap};

std::string_view category_name(Category c);
std::optional<Category> category_from_name(std::string_view name);

// One environment instance: room, target object and the detector looking at it.
struct Scene {
  OccupancyGrid grid;
  ObjectSpec object;
  DetectorParams detector;
  Category category = Category::Open;
  std::uint64_t seed = 0;
  // Canonical start used by scenario construction (Trap start region); may be absent.
  std::optional<Pose> canonical_start;

  // Stable identifier "<category>-<seed>".
  std::string id() const;

  friend bool operator==(const Scene&, const Scene&) = default;
};

// True iff the object footprint lies on free space inside the room.
bool object_footprint_clear(const ObjectSpec& object, const OccupancyGrid& grid);

}  // namespace adt
