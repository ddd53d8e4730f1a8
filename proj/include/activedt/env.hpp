#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

namespace adt {

inline constexpr int kNumHeadings = 12;
inline constexpr double kHeadingStepDeg = 30.0;
inline constexpr int kNumActions = 7;

// Grid-frame moves (north = +y), in-place rotations and the absorbing stop.
enum class Action : int {
  MoveNorth = 0,
  MoveSouth = 1,
  MoveWest = 2,
  MoveEast = 3,
  RotateCCW = 4,
  RotateCW = 5,
  Stop = 6,
};

inline constexpr std::array<Action, kNumActions> kAllActions = {
    Action::MoveNorth, Action::MoveSouth, Action::MoveWest, Action::MoveEast,
    Action::RotateCCW, Action::RotateCW,  Action::Stop};

constexpr int to_int(Action a) { return static_cast<int>(a); }
// Throws std::out_of_range for codes outside [0, 7).
Action action_from_int(int code);
std::string_view action_name(Action a);
std::optional<Action> action_from_name(std::string_view name);

struct Pose {
  int x = 0;
  int y = 0;
  int heading = 0;  // multiples of 30 degrees CCW from +x, in [0, 12)

  friend bool operator==(const Pose&, const Pose&) = default;
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

double distance(Point2 a, Point2 b);
double heading_radians(int heading);
int wrap_heading(int heading);
// Wraps an angle in degrees to (-180, 180].
double wrap_degrees(double deg);

enum class Cell : std::uint8_t { Free = 0, Obstacle = 1 };

// Rectangular occupancy grid in a closed room: the border ring is always
// Obstacle. Cell (i, j) covers [i*cs, (i+1)*cs] x [j*cs, (j+1)*cs] meters.
class OccupancyGrid {
 public:
  OccupancyGrid() = default;
  // All interior cells Free. Throws std::invalid_argument on w*h < 25,
  // dimensions below 3 or non-positive cell size.
  OccupancyGrid(int width, int height, double cell_size = 0.3);
  // Takes ownership of a row-major cell buffer; border cells are forced to
  // Obstacle.
  OccupancyGrid(int width, int height, double cell_size, std::vector<Cell> cells);

  int width() const { return width_; }
  int height() const { return height_; }
  double cell_size() const { return cell_size_; }
  const std::vector<Cell>& cells() const { return cells_; }

  bool in_bounds(int x, int y) const {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }
  bool is_obstacle(int x, int y) const {
    return !in_bounds(x, y) || cells_[index(x, y)] == Cell::Obstacle;
  }
  bool is_free(int x, int y) const { return !is_obstacle(x, y); }
  // Interior cells only; border writes are ignored.
  void set(int x, int y, Cell c);
  std::size_t interior_obstacle_count() const;

  Point2 cell_center(int x, int y) const {
    return {(x + 0.5) * cell_size_, (y + 0.5) * cell_size_};
  }
  double extent_x() const { return width_ * cell_size_; }
  double extent_y() const { return height_ * cell_size_; }

  friend bool operator==(const OccupancyGrid&, const OccupancyGrid&) = default;

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }
  void close_border();

  int width_ = 0;
  int height_ = 0;
  double cell_size_ = 0.3;
  std::vector<Cell> cells_;
};

bool is_valid_pose(const Pose& pose, const OccupancyGrid& grid);
// Throws InvalidPose when the pose is off-grid, on an obstacle or carries a
// heading outside [0, 12).
void require_valid_pose(const Pose& pose, const OccupancyGrid& grid);

// Pose after applying an action, ignoring reward. Blocked translations and
// every action once stopped leave the pose unchanged.
Pose apply_action(const Pose& pose, Action action, const OccupancyGrid& grid,
                  bool stopped);

// Cells touched by the closed segment from-to (supercover), in cell units of
// the grid, in increasing x then y order. Cells outside the grid are omitted.
std::vector<std::array<int, 2>> supercover_cells(Point2 from, Point2 to,
                                                 const OccupancyGrid& grid);

// True iff the segment touches an Obstacle cell other than the cells that
// contain the two endpoints.
bool ray_blocked(Point2 from, Point2 to, const OccupancyGrid& grid);

struct DepthScanParams {
  int n_rays = 11;
  double fov_deg = 90.0;
  double max_range = 6.0;
};

// Distance (meters) from `origin` along `bearing_rad` to the first Obstacle
// cell boundary, clamped to max_range.
double cast_ray(Point2 origin, double bearing_rad, const OccupancyGrid& grid,
                double max_range);

// Normalized ranges in [0, 1], fanned across the field of view from right
// (k = 0) to left.
std::vector<double> depth_scan(const Pose& pose, const OccupancyGrid& grid,
                               const DepthScanParams& params = {});

}  // namespace adt
