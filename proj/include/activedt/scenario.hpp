#pragma once

#include <cstdint>
#include <vector>

#include "activedt/scene.hpp"
#include "activedt/simulator.hpp"

namespace adt {

inline constexpr int kDefaultHorizon = 10;

struct GenerateOptions {
  int width = 20;
  int height = 20;
  double cell_size = 0.3;
  DetectorParams detector;
  int horizon = kDefaultHorizon;  // used by the Trap feasibility check
  int max_attempts = 50;
};

// Seeded, reproducible scene construction. Throws FeasibilityError when no
// attempt satisfies the scene invariants, std::invalid_argument for a room
// smaller than 10x10 outside the Open category.
Scene generate_scene(Category category, std::uint64_t seed, const GenerateOptions& options = {});

struct PoseRules {
  double max_score = 0.2;
  double min_bbox_area = 200.0;
  double min_distance = 3.0;
};

bool passes_rules(const Pose& pose, const PreparedScene& scene, const PoseRules& rules);

// All poses passing the start rules, row-major over cells, heading-minor.
// Throws EmptyPoolError when none qualifies.
std::vector<Pose> select_initial_poses(const PreparedScene& scene, const PoseRules& rules = {});
std::vector<Pose> select_initial_poses(const Scene& scene, const PoseRules& rules = {});

struct SuiteOptions {
  int scenes_per_category = 25;
  int starts_per_scene = 16;
  std::uint64_t seed = 0;
  GenerateOptions generate;
  PoseRules rules;
};

struct SuiteScene {
  PreparedScenePtr scene;
  std::vector<Pose> pool;
  std::vector<Pose> eval_starts;
};

// The benchmark: scenes_per_category scenes for each requested category
// with their start pools and a seeded evaluation subset of each pool.
struct BenchmarkSuite {
  std::vector<Category> categories;
  std::vector<std::vector<SuiteScene>> scenes;  // parallel to categories

  const std::vector<SuiteScene>& of(Category c) const;
  std::size_t total_eval_starts() const;
};

std::uint64_t suite_scene_seed(std::uint64_t suite_seed, Category c, int index);

BenchmarkSuite build_suite(const SuiteOptions& options,
                           const std::vector<Category>& categories = {kAllCategories.begin(),
                                                                      kAllCategories.end()});

}  // namespace adt
