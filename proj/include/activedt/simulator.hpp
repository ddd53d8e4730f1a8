#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "activedt/detection.hpp"
#include "activedt/env.hpp"
#include "activedt/scene.hpp"

namespace adt {

struct StepOutcome {
  Pose next_pose;
  double reward = 0.0;
  bool stopped = false;
};

// One environment transition. The reward is the detection score of the
// resulting view, also while stopped. Throws InvalidPose on an invalid pose.
StepOutcome step(const Pose& pose, Action action, const Scene& scene, bool stopped);

// A scene with the detector output and the unmasked observation of every
// pose precomputed. Immutable after construction and safe to share between
// threads.
class PreparedScene {
 public:
  explicit PreparedScene(Scene scene);

  const Scene& scene() const { return scene_; }
  const OccupancyGrid& grid() const { return scene_.grid; }
  int obs_dim() const { return obs_dim_; }

  std::size_t pose_index(const Pose& p) const {
    return (static_cast<std::size_t>(p.y) * static_cast<std::size_t>(scene_.grid.width()) +
            static_cast<std::size_t>(p.x)) *
               kNumHeadings +
           static_cast<std::size_t>(p.heading);
  }
  std::size_t num_pose_slots() const { return scores_.size(); }

  double score(const Pose& p) const { return scores_[pose_index(p)]; }
  const Detection& detection(const Pose& p) const { return detections_[pose_index(p)]; }
  std::span<const double> full_observation(const Pose& p) const {
    return {observations_.data() + pose_index(p) * static_cast<std::size_t>(obs_dim_),
            static_cast<std::size_t>(obs_dim_)};
  }
  // Flattened observation with the masked channels zeroed.
  std::vector<double> observation(const Pose& p, ChannelMask mask) const;

  // Same contract as adt::step, served from the cache.
  StepOutcome step(const Pose& pose, Action action, bool stopped) const;

  // Every valid pose, row-major over cells and heading-minor.
  std::vector<Pose> valid_poses() const;

 private:
  Scene scene_;
  int obs_dim_ = 0;
  std::vector<double> scores_;
  std::vector<Detection> detections_;
  std::vector<double> observations_;
};

using PreparedScenePtr = std::shared_ptr<const PreparedScene>;

// Total number of environment transitions taken through either step function
// since program start.
std::uint64_t simulator_step_count();

}  // namespace adt
