#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "activedt/env.hpp"
#include "activedt/scene.hpp"

namespace adt {

// Detector scores live on a dyadic grid of 2^-32 so that sums of up to 2^20
// rewards, and therefore every return-to-go difference, are exact in double.
inline constexpr double kScoreQuantum = 1.0 / 4294967296.0;
double quantize_score(double score);

struct BBox {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;
};

struct Detection {
  double score = 0.0;
  std::optional<BBox> bbox;  // present iff score > 0
};

// Geometry of the object as seen from a pose.
struct ViewGeometry {
  double distance = 0.0;     // meters, cell center to object center
  double bearing_deg = 0.0;  // signed, CCW positive, in (-180, 180]
};

ViewGeometry view_geometry(const Pose& pose, const Scene& scene);

// Trapezoidal distance factor: 0 outside [d_min, d_max], 1 on [d_lo, d_hi].
double distance_factor(double d, const DetectorParams& params);
// Field-of-view factor max(0, 1 - |bearing| / (fov / 2)).
double bearing_factor(double bearing_deg, const DetectorParams& params);
// Fraction of unblocked sight lines to points spread across the object disc.
double visible_fraction(const Pose& pose, const Scene& scene, const DetectorParams& params);

Detection detect(const Pose& pose, const Scene& scene, const DetectorParams& params);
inline Detection detect(const Pose& pose, const Scene& scene) {
  return detect(pose, scene, scene.detector);
}

double bbox_area(const Detection& det);

struct ChannelMask {
  bool rgb = true;
  bool depth = true;

  static ChannelMask none() { return {false, false}; }
  static ChannelMask all() { return {true, true}; }
  friend bool operator==(const ChannelMask&, const ChannelMask&) = default;
};

// Table-style ablation labels: "w/o Both", "w/o Depth", "w/o RGB", "Depth+RGB".
std::string mask_label(ChannelMask mask);
// Accepts "none", "rgb", "depth", "rgb+depth" (and "all").
std::optional<ChannelMask> mask_from_name(std::string_view name);
std::string mask_name(ChannelMask mask);

struct Observation {
  std::array<double, 5> bbox_feat{};  // cx/w, cy/h, w/img_w, h/img_h, present
  double score = 0.0;
  // Heading as ((1 + cos) / 2, (1 + sin) / 2); never masked.
  std::array<double, 2> compass{};
  std::vector<double> rgb_proxy;
  std::vector<double> depth_proxy;
  ChannelMask mask;

  // [bbox_feat(5), score, compass(2), rgb_proxy(n), depth_proxy(n)].
  std::vector<double> flatten() const;
};

inline constexpr int observation_dim(int n_rays) { return 8 + 2 * n_rays; }

Observation observe(const Pose& pose, const Scene& scene, const DetectorParams& params,
                    ChannelMask mask);
inline Observation observe(const Pose& pose, const Scene& scene, ChannelMask mask) {
  return observe(pose, scene, scene.detector, mask);
}

// Zeroes the channels excluded by `mask` in a flattened observation.
void apply_mask(std::vector<double>& flat, int n_rays, ChannelMask mask);

}  // namespace adt
