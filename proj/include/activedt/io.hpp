#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "activedt/dt.hpp"
#include "activedt/replay.hpp"
#include "activedt/scenario.hpp"
#include "activedt/scene.hpp"
#include "activedt/training.hpp"

namespace adt {

inline constexpr int kFormatVersion = 1;

// Scene file: {version, category, seed, grid{w,h,cell_size,rle_cells}, object,
// detector_params[, canonical_start]}. rle_cells lists [value, run] pairs in
// row-major order.
std::string scene_to_json(const Scene& scene);
Scene scene_from_json(const std::string& text);

std::string detector_to_json(const DetectorParams& params);
DetectorParams detector_from_json(const std::string& text);

// One JSON object per line: {scene_ref, init_pose, steps:[{obs, action, reward}], rtg_0}.
std::string trajectory_to_json(const Trajectory& traj);
Trajectory trajectory_from_json(const std::string& line);
void write_trajectories(std::ostream& out, const std::vector<Trajectory>& trajs);
std::vector<Trajectory> read_trajectories(std::istream& in);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

struct EvalSettings {
  std::vector<Category> categories{kAllCategories.begin(), kAllCategories.end()};
  ChannelMask mask = ChannelMask::all();
  std::optional<double> target_return;
};

// The single run configuration: {version, seed, scenes, detector, dt, training, eval}.
struct RunConfig {
  std::uint64_t seed = 0;
  SuiteOptions scenes;
  std::vector<Category> categories{kAllCategories.begin(), kAllCategories.end()};
  DTConfig dt;
  StageConfig training;
  EvalSettings eval;

  // Propagates the seed, detector and horizon into the nested sections and
  // checks consistency. Throws ConfigError naming the offending key.
  void finalize();
};

// Missing keys keep their defaults; unknown keys are rejected. When the file
// has no seed, ACTIVE_DT_SEED is used if set.
RunConfig config_from_json(const std::string& text);
std::string config_to_json(const RunConfig& config);

}  // namespace adt
