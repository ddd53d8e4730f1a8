#include "activedt/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "activedt/detection.hpp"
#include "activedt/error.hpp"
#include "activedt/policies.hpp"
#include "activedt/rng.hpp"

namespace adt {

namespace {

constexpr double kFeasibleScore = 0.8;
constexpr double kTrapOracleMin = 5.0;
constexpr double kTrapExpertMax = 1.0;

struct Rect {
  int x0, y0, x1, y1;  // inclusive cell bounds
};

void fill_rect(OccupancyGrid& grid, const Rect& r) {
  for (int y = r.y0; y <= r.y1; ++y) {
    for (int x = r.x0; x <= r.x1; ++x) grid.set(x, y, Cell::Obstacle);
  }
}

// Object disc plus one cell of clearance must stay free.
bool rect_hits_object(const Rect& r, const ObjectSpec& obj, double cs) {
  const double margin = obj.radius + cs;
  const double qx = std::clamp(obj.center.x, r.x0 * cs, (r.x1 + 1) * cs);
  const double qy = std::clamp(obj.center.y, r.y0 * cs, (r.y1 + 1) * cs);
  return std::hypot(qx - obj.center.x, qy - obj.center.y) < margin;
}

ObjectSpec random_object(Rng& rng, const OccupancyGrid& grid) {
  ObjectSpec obj;
  obj.radius = rng.uniform(0.15, 0.3);
  obj.aspect = rng.uniform(0.6, 1.5);
  obj.id = rng.uniform_int(0, 79);
  const double cs = grid.cell_size();
  // Objects stand near a wall, like furniture: offset from the wall face and
  // lateral position along it are drawn independently.
  const int side = rng.uniform_int(0, 3);
  const double off = cs + rng.uniform(0.3, 0.9);
  const bool vertical_wall = side < 2;
  const double span = vertical_wall ? grid.extent_y() : grid.extent_x();
  const double lateral = span / 2.0 + rng.uniform(-0.25, 0.25) * span;
  const double along = vertical_wall ? grid.extent_x() : grid.extent_y();
  const double depth = side % 2 == 0 ? off : along - off;
  obj.center = vertical_wall ? Point2{depth, lateral} : Point2{lateral, depth};
  return obj;
}

void place_rects(Rng& rng, OccupancyGrid& grid, const ObjectSpec& obj, int count) {
  int placed = 0;
  for (int tries = 0; placed < count && tries < 200; ++tries) {
    int w = rng.uniform_int(1, 3);
    int h = rng.uniform_int(1, 4);
    if (rng.uniform() < 0.5) std::swap(w, h);
    const int x0 = rng.uniform_int(1, grid.width() - 1 - w);
    const int y0 = rng.uniform_int(1, grid.height() - 1 - h);
    const Rect r{x0, y0, x0 + w - 1, y0 + h - 1};
    if (rect_hits_object(r, obj, grid.cell_size())) continue;
    fill_rect(grid, r);
    ++placed;
  }
}

double expert_episode_reward(const PreparedScene& scene, Pose pose, int horizon) {
  double total = 0.0;
  bool stopped = false;
  for (int t = 0; t < horizon; ++t) {
    const StepOutcome s = scene.step(pose, expert_action(pose, scene.scene()), stopped);
    total += s.reward;
    pose = s.next_pose;
    stopped = s.stopped;
  }
  return total;
}

int nearest_heading(Point2 from, Point2 to) {
  const double deg = std::atan2(to.y - from.y, to.x - from.x) * 180.0 / 3.14159265358979323846;
  return wrap_heading(static_cast<int>(std::lround(deg / kHeadingStepDeg)));
}

// Builds a trap room in a canonical frame where the robot approaches along
// +u, then maps it into grid coordinates according to `dir`.
Scene build_trap(Rng& rng, const GenerateOptions& opt) {
  const int dir = rng.uniform_int(0, opt.width == opt.height ? 3 : 1);
  const bool swap_axes = dir >= 2;
  const int len_u = swap_axes ? opt.height : opt.width;
  const int len_v = swap_axes ? opt.width : opt.height;
  const bool flip = dir % 2 == 1;
  const double cs = opt.cell_size;

  auto to_grid_cell = [&](int u, int v) -> std::array<int, 2> {
    const int uu = flip ? len_u - 1 - u : u;
    return swap_axes ? std::array<int, 2>{v, uu} : std::array<int, 2>{uu, v};
  };
  auto to_grid_point = [&](double u, double v) -> Point2 {
    const double uu = flip ? len_u - u : u;
    return swap_axes ? Point2{v * cs, uu * cs} : Point2{uu * cs, v * cs};
  };

  OccupancyGrid grid(opt.width, opt.height, cs);
  ObjectSpec obj;
  obj.radius = rng.uniform(0.15, 0.3);
  obj.aspect = rng.uniform(0.6, 1.5);
  obj.id = rng.uniform_int(0, 79);
  const double obj_u = rng.uniform_int(len_u - 5, len_u - 4) + rng.uniform(0.3, 0.7);
  const double obj_v = rng.uniform_int(len_v / 2 - 3, len_v / 2 + 2) + rng.uniform(0.3, 0.7);
  obj.center = to_grid_point(obj_u, obj_v);

  const double start_dist = rng.uniform(3.05, 3.3) / cs;
  const int start_u = static_cast<int>(std::floor(obj_u - start_dist));
  const int start_v = static_cast<int>(std::floor(obj_v)) + rng.uniform_int(-1, 1);
  const int wall_u = start_u + rng.uniform_int(2, 3);
  // Row where the sight line from the start crosses the wall column.
  const double su = start_u + 0.5, sv = start_v + 0.5;
  const double line_v = sv + (obj_v - sv) * ((wall_u + 0.5 - su) / (obj_u - su));
  const int center_v = static_cast<int>(std::floor(line_v));
  const int below = rng.uniform_int(2, 4);
  const int above = rng.uniform_int(2, 4);
  for (int v = center_v - below; v <= center_v + above; ++v) {
    const auto c = to_grid_cell(wall_u, v);
    grid.set(c[0], c[1], Cell::Obstacle);
  }

  Scene scene;
  scene.grid = std::move(grid);
  scene.object = obj;
  const auto sc = to_grid_cell(start_u, start_v);
  Pose start{sc[0], sc[1], 0};
  start.heading = nearest_heading(scene.grid.cell_center(start.x, start.y), obj.center);
  scene.canonical_start = start;
  return scene;
}

bool has_feasible_view(const PreparedScene& scene) {
  for (const Pose& p : scene.valid_poses()) {
    if (scene.score(p) >= kFeasibleScore) return true;
  }
  return false;
}

// Returns an empty string when the candidate satisfies every invariant,
// otherwise the reason for rejection.
std::string check_candidate(const Scene& scene, const GenerateOptions& opt) {
  if (!object_footprint_clear(scene.object, scene.grid)) return "object footprint blocked";
  const PreparedScene prepared(scene);
  if (!has_feasible_view(prepared)) return "no pose reaches the feasibility score";
  std::vector<Pose> pool;
  try {
    pool = select_initial_poses(prepared);
  } catch (const EmptyPoolError&) {
    return "empty start pool";
  }
  if (scene.category == Category::Trap) {
    const Pose s = *scene.canonical_start;
    if (!is_valid_pose(s, scene.grid) || !passes_rules(s, prepared, PoseRules{})) {
      return "canonical start violates the start rules";
    }
    const OracleTable oracle(prepared, opt.horizon);
    if (oracle.value(s) < kTrapOracleMin) return "detour too long";
    if (expert_episode_reward(prepared, s, opt.horizon) >= kTrapExpertMax) return "expert not trapped";
  }
  return {};
}

}  // namespace

Scene generate_scene(Category category, std::uint64_t seed, const GenerateOptions& opt) {
  if (category != Category::Open && (opt.width < 10 || opt.height < 10)) {
    throw std::invalid_argument("non-Open scenes need at least a 10x10 room");
  }
  opt.detector.validate();
  std::string last_reason = "no attempt made";
  for (int attempt = 0; attempt < opt.max_attempts; ++attempt) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(category), attempt));
    Scene scene;
    if (category == Category::Trap) {
      scene = build_trap(rng, opt);
    } else {
      scene.grid = OccupancyGrid(opt.width, opt.height, opt.cell_size);
      scene.object = random_object(rng, scene.grid);
      int count = 0;
      if (category == Category::Sparse) count = rng.uniform_int(1, 3);
      if (category == Category::Cluttered) count = rng.uniform_int(4, 8);
      place_rects(rng, scene.grid, scene.object, count);
    }
    scene.detector = opt.detector;
    scene.category = category;
    scene.seed = seed;
    last_reason = check_candidate(scene, opt);
    if (last_reason.empty()) return scene;
  }
  throw FeasibilityError("could not generate a " + std::string(category_name(category)) +
                         " scene for seed " + std::to_string(seed) + ": " + last_reason);
}

bool passes_rules(const Pose& pose, const PreparedScene& scene, const PoseRules& rules) {
  const Detection& det = scene.detection(pose);
  if (!(det.score < rules.max_score)) return false;
  if (det.bbox && !(bbox_area(det) > rules.min_bbox_area)) return false;
  return view_geometry(pose, scene.scene()).distance > rules.min_distance;
}

std::vector<Pose> select_initial_poses(const PreparedScene& scene, const PoseRules& rules) {
  std::vector<Pose> out;
  for (const Pose& p : scene.valid_poses()) {
    if (passes_rules(p, scene, rules)) out.push_back(p);
  }
  if (out.empty()) throw EmptyPoolError("no pose satisfies the start rules in scene " + scene.scene().id());
  return out;
}

std::vector<Pose> select_initial_poses(const Scene& scene, const PoseRules& rules) {
  return select_initial_poses(PreparedScene(scene), rules);
}

const std::vector<SuiteScene>& BenchmarkSuite::of(Category c) const {
  for (std::size_t i = 0; i < categories.size(); ++i) {
    if (categories[i] == c) return scenes[i];
  }
  throw std::out_of_range("category not in suite: " + std::string(category_name(c)));
}

std::size_t BenchmarkSuite::total_eval_starts() const {
  std::size_t n = 0;
  for (const auto& cat : scenes) {
    for (const auto& s : cat) n += s.eval_starts.size();
  }
  return n;
}

std::uint64_t suite_scene_seed(std::uint64_t suite_seed, Category c, int index) {
  return derive_seed(suite_seed, 0x5ce4e, static_cast<std::uint64_t>(c), index) & 0xffffffffULL;
}

BenchmarkSuite build_suite(const SuiteOptions& options, const std::vector<Category>& categories) {
  BenchmarkSuite suite;
  suite.categories = categories;
  for (Category c : categories) {
    std::vector<SuiteScene> list;
    for (int i = 0; i < options.scenes_per_category; ++i) {
      SuiteScene entry;
      const std::uint64_t seed = suite_scene_seed(options.seed, c, i);
      entry.scene = std::make_shared<const PreparedScene>(generate_scene(c, seed, options.generate));
      entry.pool = select_initial_poses(*entry.scene, options.rules);
      std::vector<std::size_t> idx(entry.pool.size());
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      Rng rng(derive_seed(seed, 0x57a7));
      std::shuffle(idx.begin(), idx.end(), rng.engine());
      const std::size_t n = std::min(idx.size(), static_cast<std::size_t>(options.starts_per_scene));
      idx.resize(n);
      std::sort(idx.begin(), idx.end());
      for (std::size_t k : idx) entry.eval_starts.push_back(entry.pool[k]);
      list.push_back(std::move(entry));
    }
    suite.scenes.push_back(std::move(list));
  }
  return suite;
}

}  // namespace adt
