#include "activedt/simulator.hpp"

#include <algorithm>
#include <atomic>

namespace adt {

namespace {
std::atomic<std::uint64_t> g_steps{0};
}

std::uint64_t simulator_step_count() { return g_steps.load(std::memory_order_relaxed); }

StepOutcome step(const Pose& pose, Action action, const Scene& scene, bool stopped) {
  require_valid_pose(pose, scene.grid);
  g_steps.fetch_add(1, std::memory_order_relaxed);
  StepOutcome out;
  out.next_pose = apply_action(pose, action, scene.grid, stopped);
  out.stopped = stopped || action == Action::Stop;
  out.reward = detect(out.next_pose, scene).score;
  return out;
}

PreparedScene::PreparedScene(Scene scene) : scene_(std::move(scene)) {
  scene_.detector.validate();
  obs_dim_ = observation_dim(scene_.detector.n_rays);
  const std::size_t slots = static_cast<std::size_t>(scene_.grid.width()) *
                            static_cast<std::size_t>(scene_.grid.height()) * kNumHeadings;
  scores_.assign(slots, 0.0);
  detections_.assign(slots, Detection{});
  observations_.assign(slots * static_cast<std::size_t>(obs_dim_), 0.0);
  for (const Pose& p : valid_poses()) {
    const std::size_t i = pose_index(p);
    const Observation o = observe(p, scene_, scene_.detector, ChannelMask::all());
    detections_[i] = detect(p, scene_, scene_.detector);
    scores_[i] = detections_[i].score;
    const std::vector<double> flat = o.flatten();
    std::copy(flat.begin(), flat.end(),
              observations_.begin() + static_cast<long>(i * static_cast<std::size_t>(obs_dim_)));
  }
}

std::vector<double> PreparedScene::observation(const Pose& p, ChannelMask mask) const {
  const auto full = full_observation(p);
  std::vector<double> out(full.begin(), full.end());
  apply_mask(out, scene_.detector.n_rays, mask);
  return out;
}

StepOutcome PreparedScene::step(const Pose& pose, Action action, bool stopped) const {
  require_valid_pose(pose, scene_.grid);
  g_steps.fetch_add(1, std::memory_order_relaxed);
  StepOutcome out;
  out.next_pose = apply_action(pose, action, scene_.grid, stopped);
  out.stopped = stopped || action == Action::Stop;
  out.reward = score(out.next_pose);
  return out;
}

std::vector<Pose> PreparedScene::valid_poses() const {
  std::vector<Pose> out;
  const OccupancyGrid& g = scene_.grid;
  for (int y = 0; y < g.height(); ++y) {
    for (int x = 0; x < g.width(); ++x) {
      if (!g.is_free(x, y)) continue;
      for (int h = 0; h < kNumHeadings; ++h) out.push_back({x, y, h});
    }
  }
  return out;
}

}  // namespace adt
