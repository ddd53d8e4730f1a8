#include "activedt/env.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include "activedt/error.hpp"

namespace adt {

namespace {

constexpr std::array<std::string_view, kNumActions> kActionNames = {
    "MoveNorth", "MoveSouth", "MoveWest", "MoveEast",
    "RotateCCW", "RotateCW",  "Stop"};

// Slack (in cell units) when deciding whether a segment touches a cell.
// Errs toward "touched".
constexpr double kTouchEps = 1e-9;

}  // namespace

Action action_from_int(int code) {
  if (code < 0 || code >= kNumActions) {
    throw std::out_of_range("action code out of range: " + std::to_string(code));
  }
  return static_cast<Action>(code);
}

std::string_view action_name(Action a) { return kActionNames[to_int(a)]; }

std::optional<Action> action_from_name(std::string_view name) {
  for (int i = 0; i < kNumActions; ++i) {
    if (kActionNames[i] == name) return static_cast<Action>(i);
  }
  return std::nullopt;
}

double distance(Point2 a, Point2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

double heading_radians(int heading) {
  return heading * kHeadingStepDeg * std::numbers::pi / 180.0;
}

int wrap_heading(int heading) {
  int h = heading % kNumHeadings;
  return h < 0 ? h + kNumHeadings : h;
}

double wrap_degrees(double deg) {
  double w = std::fmod(deg, 360.0);
  if (w <= -180.0) w += 360.0;
  if (w > 180.0) w -= 360.0;
  return w;
}

OccupancyGrid::OccupancyGrid(int width, int height, double cell_size)
    : OccupancyGrid(width, height, cell_size,
                    std::vector<Cell>(static_cast<std::size_t>(std::max(width, 0)) *
                                          static_cast<std::size_t>(std::max(height, 0)),
                                      Cell::Free)) {}

OccupancyGrid::OccupancyGrid(int width, int height, double cell_size,
                             std::vector<Cell> cells)
    : width_(width), height_(height), cell_size_(cell_size), cells_(std::move(cells)) {
  if (width < 3 || height < 3 || width * height < 25) {
    throw std::invalid_argument("grid must be at least 3x3 with w*h >= 25");
  }
  if (!(cell_size > 0.0)) throw std::invalid_argument("cell_size must be positive");
  if (cells_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
    throw std::invalid_argument("cell buffer size does not match grid dimensions");
  }
  close_border();
}

void OccupancyGrid::close_border() {
  for (int x = 0; x < width_; ++x) {
    cells_[index(x, 0)] = Cell::Obstacle;
    cells_[index(x, height_ - 1)] = Cell::Obstacle;
  }
  for (int y = 0; y < height_; ++y) {
    cells_[index(0, y)] = Cell::Obstacle;
    cells_[index(width_ - 1, y)] = Cell::Obstacle;
  }
}

void OccupancyGrid::set(int x, int y, Cell c) {
  if (x <= 0 || y <= 0 || x >= width_ - 1 || y >= height_ - 1) return;
  cells_[index(x, y)] = c;
}

std::size_t OccupancyGrid::interior_obstacle_count() const {
  std::size_t n = 0;
  for (int y = 1; y < height_ - 1; ++y) {
    for (int x = 1; x < width_ - 1; ++x) {
      if (cells_[index(x, y)] == Cell::Obstacle) ++n;
    }
  }
  return n;
}

bool is_valid_pose(const Pose& pose, const OccupancyGrid& grid) {
  return pose.heading >= 0 && pose.heading < kNumHeadings && grid.in_bounds(pose.x, pose.y) &&
         grid.is_free(pose.x, pose.y);
}

void require_valid_pose(const Pose& pose, const OccupancyGrid& grid) {
  if (!is_valid_pose(pose, grid)) {
    throw InvalidPose("invalid pose (" + std::to_string(pose.x) + ", " + std::to_string(pose.y) +
                      ", h=" + std::to_string(pose.heading) + ")");
  }
}

Pose apply_action(const Pose& pose, Action action, const OccupancyGrid& grid, bool stopped) {
  if (stopped) return pose;
  Pose next = pose;
  switch (action) {
    case Action::MoveNorth: next.y += 1; break;
    case Action::MoveSouth: next.y -= 1; break;
    case Action::MoveWest: next.x -= 1; break;
    case Action::MoveEast: next.x += 1; break;
    case Action::RotateCCW: next.heading = wrap_heading(pose.heading + 1); return next;
    case Action::RotateCW: next.heading = wrap_heading(pose.heading - 1); return next;
    case Action::Stop: return pose;
  }
  return grid.is_obstacle(next.x, next.y) ? pose : next;
}

std::vector<std::array<int, 2>> supercover_cells(Point2 from, Point2 to,
                                                 const OccupancyGrid& grid) {
  const double cs = grid.cell_size();
  double x0 = from.x / cs, y0 = from.y / cs;
  double x1 = to.x / cs, y1 = to.y / cs;
  if (x1 < x0) {
    std::swap(x0, x1);
    std::swap(y0, y1);
  }
  std::vector<std::array<int, 2>> out;
  const double dx = x1 - x0;
  // Closed cell i spans [i, i+1]; it meets [lo, hi] iff ceil(lo)-1 <= i <= floor(hi).
  const int col_lo = static_cast<int>(std::ceil(x0 - kTouchEps)) - 1;
  const int col_hi = static_cast<int>(std::floor(x1 + kTouchEps));
  for (int i = col_lo; i <= col_hi; ++i) {
    if (i < 0 || i >= grid.width()) continue;
    double ya, yb;
    if (dx <= 0.0) {
      ya = y0;
      yb = y1;
    } else {
      const double xa = std::max(x0, static_cast<double>(i));
      const double xb = std::min(x1, static_cast<double>(i + 1));
      if (xa > xb + kTouchEps) continue;
      ya = y0 + (y1 - y0) * ((xa - x0) / dx);
      yb = y0 + (y1 - y0) * ((std::min(xb, x1) - x0) / dx);
    }
    const double lo = std::min(ya, yb);
    const double hi = std::max(ya, yb);
    const int row_lo = std::max(0, static_cast<int>(std::ceil(lo - kTouchEps)) - 1);
    const int row_hi = std::min(grid.height() - 1, static_cast<int>(std::floor(hi + kTouchEps)));
    for (int j = row_lo; j <= row_hi; ++j) out.push_back({i, j});
  }
  return out;
}

bool ray_blocked(Point2 from, Point2 to, const OccupancyGrid& grid) {
  const double cs = grid.cell_size();
  const int fx = static_cast<int>(std::floor(from.x / cs));
  const int fy = static_cast<int>(std::floor(from.y / cs));
  const int tx = static_cast<int>(std::floor(to.x / cs));
  const int ty = static_cast<int>(std::floor(to.y / cs));
  for (const auto& [i, j] : supercover_cells(from, to, grid)) {
    if ((i == fx && j == fy) || (i == tx && j == ty)) continue;
    if (grid.is_obstacle(i, j)) return true;
  }
  return false;
}

double cast_ray(Point2 origin, double bearing_rad, const OccupancyGrid& grid, double max_range) {
  const double cs = grid.cell_size();
  const double ox = origin.x / cs, oy = origin.y / cs;
  const double dx = std::cos(bearing_rad), dy = std::sin(bearing_rad);
  int ix = static_cast<int>(std::floor(ox));
  int iy = static_cast<int>(std::floor(oy));
  if (grid.is_obstacle(ix, iy)) return 0.0;
  const int sx = dx > 0 ? 1 : -1;
  const int sy = dy > 0 ? 1 : -1;
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const double adx = std::abs(dx), ady = std::abs(dy);
  double t_max_x = adx < 1e-12 ? kInf : ((sx > 0 ? ix + 1 - ox : ox - ix) / adx);
  double t_max_y = ady < 1e-12 ? kInf : ((sy > 0 ? iy + 1 - oy : oy - iy) / ady);
  const double t_delta_x = adx < 1e-12 ? kInf : 1.0 / adx;
  const double t_delta_y = ady < 1e-12 ? kInf : 1.0 / ady;
  const double limit = max_range / cs;
  for (;;) {
    double t;
    if (std::abs(t_max_x - t_max_y) <= kTouchEps) {
      // Passing through a corner: both side cells are touched.
      t = t_max_x;
      if (t >= limit) break;
      if (grid.is_obstacle(ix + sx, iy) || grid.is_obstacle(ix, iy + sy)) return t * cs;
      ix += sx;
      iy += sy;
      t_max_x += t_delta_x;
      t_max_y += t_delta_y;
    } else if (t_max_x < t_max_y) {
      t = t_max_x;
      if (t >= limit) break;
      ix += sx;
      t_max_x += t_delta_x;
    } else {
      t = t_max_y;
      if (t >= limit) break;
      iy += sy;
      t_max_y += t_delta_y;
    }
    if (grid.is_obstacle(ix, iy)) return t * cs;
  }
  return max_range;
}

std::vector<double> depth_scan(const Pose& pose, const OccupancyGrid& grid,
                               const DepthScanParams& params) {
  require_valid_pose(pose, grid);
  std::vector<double> out(static_cast<std::size_t>(std::max(params.n_rays, 0)));
  const Point2 origin = grid.cell_center(pose.x, pose.y);
  const double base = heading_radians(pose.heading);
  const double fov = params.fov_deg * std::numbers::pi / 180.0;
  for (int k = 0; k < params.n_rays; ++k) {
    const double frac = params.n_rays == 1 ? 0.0 : static_cast<double>(k) / (params.n_rays - 1) - 0.5;
    const double range = cast_ray(origin, base + fov * frac, grid, params.max_range);
    out[static_cast<std::size_t>(k)] = std::min(range, params.max_range) / params.max_range;
  }
  return out;
}

}  // namespace adt
