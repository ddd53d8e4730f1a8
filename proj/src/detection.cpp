#include "activedt/detection.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "activedt/rng.hpp"

namespace adt {

void DetectorParams::validate() const {
  if (!(0.0 < d_min && d_min < d_lo && d_lo <= d_hi && d_hi < d_max)) {
    throw std::invalid_argument("detector distances must satisfy 0 < d_min < d_lo <= d_hi < d_max");
  }
  if (!(fov_deg > 0.0 && fov_deg <= 180.0)) throw std::invalid_argument("detector fov must be in (0, 180]");
  if (n_samples < 1) throw std::invalid_argument("detector n_samples must be >= 1");
  if (n_rays < 1) throw std::invalid_argument("detector n_rays must be >= 1");
  if (!(img_w > 0.0 && img_h > 0.0 && bbox_scale > 0.0 && max_range > 0.0)) {
    throw std::invalid_argument("detector image size, bbox scale and range must be positive");
  }
  if (noise_std < 0.0) throw std::invalid_argument("detector noise_std must be >= 0");
}

double quantize_score(double score) {
  const double clamped = std::clamp(score, 0.0, 1.0);
  return std::round(clamped / kScoreQuantum) * kScoreQuantum;
}

ViewGeometry view_geometry(const Pose& pose, const Scene& scene) {
  const Point2 c = scene.grid.cell_center(pose.x, pose.y);
  const double dx = scene.object.center.x - c.x;
  const double dy = scene.object.center.y - c.y;
  ViewGeometry g;
  g.distance = std::hypot(dx, dy);
  const double abs_deg = std::atan2(dy, dx) * 180.0 / std::numbers::pi;
  g.bearing_deg = wrap_degrees(abs_deg - pose.heading * kHeadingStepDeg);
  return g;
}

double distance_factor(double d, const DetectorParams& p) {
  if (d < p.d_min || d > p.d_max) return 0.0;
  if (d < p.d_lo) return (d - p.d_min) / (p.d_lo - p.d_min);
  if (d <= p.d_hi) return 1.0;
  return (p.d_max - d) / (p.d_max - p.d_hi);
}

double bearing_factor(double bearing_deg, const DetectorParams& p) {
  return std::max(0.0, 1.0 - std::abs(bearing_deg) / (p.fov_deg / 2.0));
}

double visible_fraction(const Pose& pose, const Scene& scene, const DetectorParams& p) {
  const Point2 eye = scene.grid.cell_center(pose.x, pose.y);
  const Point2 c = scene.object.center;
  const double d = distance(eye, c);
  // Sample points span the object diameter perpendicular to the line of sight.
  double px = 0.0, py = 0.0;
  if (d > 0.0) {
    px = -(c.y - eye.y) / d;
    py = (c.x - eye.x) / d;
  }
  int clear = 0;
  for (int k = 0; k < p.n_samples; ++k) {
    const double s = p.n_samples == 1 ? 0.0 : 2.0 * k / (p.n_samples - 1) - 1.0;
    const Point2 target{c.x + s * scene.object.radius * px, c.y + s * scene.object.radius * py};
    if (!ray_blocked(eye, target, scene.grid)) ++clear;
  }
  return static_cast<double>(clear) / p.n_samples;
}

namespace {

double pose_noise(const Pose& pose, const DetectorParams& p) {
  std::uint64_t h = p.noise_seed;
  h = hash_combine(h, static_cast<std::uint64_t>(pose.x));
  h = hash_combine(h, static_cast<std::uint64_t>(pose.y));
  h = hash_combine(h, static_cast<std::uint64_t>(pose.heading));
  const double u1 = (static_cast<double>(splitmix64(h) >> 11) + 0.5) * 0x1.0p-53;
  const double u2 = (static_cast<double>(splitmix64(h ^ 0x9e3779b97f4a7c15ULL) >> 11) + 0.5) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

void clip_span(double& center, double& size, double limit) {
  double lo = std::max(0.0, center - size / 2.0);
  double hi = std::min(limit, center + size / 2.0);
  if (hi < lo) hi = lo;
  center = (lo + hi) / 2.0;
  size = hi - lo;
}

}  // namespace

Detection detect(const Pose& pose, const Scene& scene, const DetectorParams& p) {
  require_valid_pose(pose, scene.grid);
  const ViewGeometry view = view_geometry(pose, scene);
  const double g = distance_factor(view.distance, p);
  const double h = bearing_factor(view.bearing_deg, p);
  Detection det;
  if (g <= 0.0 || h <= 0.0) return det;
  const double v = visible_fraction(pose, scene, p);
  double score = g * h * v;
  if (p.noise_std > 0.0 && score > 0.0) score *= 1.0 + p.noise_std * pose_noise(pose, p);
  score = quantize_score(score);
  if (score <= 0.0) return det;
  det.score = score;
  BBox b;
  b.cx = p.img_w * (0.5 + view.bearing_deg / p.fov_deg);
  b.w = std::clamp(p.bbox_scale * 2.0 * scene.object.radius / view.distance, 1.0, p.img_w);
  b.h = b.w * scene.object.aspect;
  b.cy = p.img_h / 2.0;
  clip_span(b.cx, b.w, p.img_w);
  clip_span(b.cy, b.h, p.img_h);
  det.bbox = b;
  return det;
}

double bbox_area(const Detection& det) { return det.bbox ? det.bbox->w * det.bbox->h : 0.0; }

std::string mask_label(ChannelMask mask) {
  if (mask.rgb && mask.depth) return "Depth+RGB";
  if (mask.depth) return "w/o RGB";
  if (mask.rgb) return "w/o Depth";
  return "w/o Both";
}

std::string mask_name(ChannelMask mask) {
  if (mask.rgb && mask.depth) return "rgb+depth";
  if (mask.depth) return "depth";
  if (mask.rgb) return "rgb";
  return "none";
}

std::optional<ChannelMask> mask_from_name(std::string_view name) {
  if (name == "none") return ChannelMask::none();
  if (name == "rgb") return ChannelMask{true, false};
  if (name == "depth") return ChannelMask{false, true};
  if (name == "rgb+depth" || name == "depth+rgb" || name == "all") return ChannelMask::all();
  return std::nullopt;
}

std::vector<double> Observation::flatten() const {
  std::vector<double> out;
  out.reserve(8 + rgb_proxy.size() + depth_proxy.size());
  out.insert(out.end(), bbox_feat.begin(), bbox_feat.end());
  out.push_back(score);
  out.insert(out.end(), compass.begin(), compass.end());
  out.insert(out.end(), rgb_proxy.begin(), rgb_proxy.end());
  out.insert(out.end(), depth_proxy.begin(), depth_proxy.end());
  return out;
}

void apply_mask(std::vector<double>& flat, int n_rays, ChannelMask mask) {
  const auto n = static_cast<std::size_t>(n_rays);
  if (flat.size() != 8 + 2 * n) throw std::invalid_argument("observation length does not match n_rays");
  if (!mask.rgb) std::fill(flat.begin() + 8, flat.begin() + 8 + static_cast<long>(n), 0.0);
  if (!mask.depth) std::fill(flat.begin() + 8 + static_cast<long>(n), flat.end(), 0.0);
}

Observation observe(const Pose& pose, const Scene& scene, const DetectorParams& p,
                    ChannelMask mask) {
  const Detection det = detect(pose, scene, p);
  Observation o;
  o.mask = mask;
  o.score = det.score;
  const double theta = heading_radians(pose.heading);
  o.compass = {0.5 * (1.0 + std::cos(theta)), 0.5 * (1.0 + std::sin(theta))};
  if (det.bbox) {
    o.bbox_feat = {det.bbox->cx / p.img_w, det.bbox->cy / p.img_h, det.bbox->w / p.img_w,
                   det.bbox->h / p.img_h, 1.0};
  }
  const auto n = static_cast<std::size_t>(p.n_rays);
  o.rgb_proxy.assign(n, 0.0);
  o.depth_proxy.assign(n, 0.0);
  if (mask.rgb) {
    const ViewGeometry view = view_geometry(pose, scene);
    const double half = p.fov_deg / 2.0;
    if (std::abs(view.bearing_deg) < half) {
      const double width = p.fov_deg / static_cast<double>(n);
      auto k = static_cast<std::size_t>((view.bearing_deg + half) / width);
      k = std::min(k, n - 1);
      const Point2 eye = scene.grid.cell_center(pose.x, pose.y);
      if (!ray_blocked(eye, scene.object.center, scene.grid)) o.rgb_proxy[k] = 1.0;
    }
  }
  if (mask.depth) o.depth_proxy = depth_scan(pose, scene.grid, p.depth_params());
  return o;
}

}  // namespace adt
