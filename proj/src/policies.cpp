#include "activedt/policies.hpp"

#include <cmath>
#include <stdexcept>

#include "activedt/detection.hpp"

namespace adt {

Action expert_action(const Pose& pose, const Scene& scene) {
  require_valid_pose(pose, scene.grid);
  const ViewGeometry view = view_geometry(pose, scene);
  if (std::abs(view.bearing_deg) > kExpertBearingTolDeg) {
    return view.bearing_deg > 0.0 ? Action::RotateCCW : Action::RotateCW;
  }
  if (view.distance > scene.detector.d_lo) {
    static constexpr std::array<std::array<int, 2>, 4> kMoves = {{{0, 1}, {0, -1}, {-1, 0}, {1, 0}}};
    int best = -1;
    double best_d = view.distance;
    for (int i = 0; i < 4; ++i) {
      const Point2 c = scene.grid.cell_center(pose.x + kMoves[i][0], pose.y + kMoves[i][1]);
      const double d = distance(c, scene.object.center);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    if (best >= 0) return action_from_int(best);
  }
  return Action::Stop;
}

Action random_action(Rng& rng) { return action_from_int(rng.uniform_int(0, kNumActions - 1)); }

PolicyDecision random_decision(Rng& rng) {
  PolicyDecision d;
  d.action = random_action(rng);
  std::array<double, kNumActions> p{};
  p.fill(1.0 / kNumActions);
  d.action_distribution = p;
  return d;
}

OracleTable::OracleTable(const PreparedScene& scene, int horizon)
    : scene_(&scene), horizon_(horizon) {
  if (horizon < 1) throw std::invalid_argument("oracle horizon must be >= 1");
  const std::size_t slots = scene.num_pose_slots();
  values_.assign(static_cast<std::size_t>(horizon + 1) * slots, 0.0);
  best_.assign(static_cast<std::size_t>(horizon) * slots, static_cast<std::int8_t>(Action::Stop));
  const std::vector<Pose> poses = scene.valid_poses();
  for (int t = horizon - 1; t >= 0; --t) {
    const std::size_t row = static_cast<std::size_t>(t) * slots;
    const std::size_t next_row = row + slots;
    for (const Pose& p : poses) {
      const std::size_t i = scene.pose_index(p);
      double best_v = (horizon - t) * scene.score(p);
      int best_a = to_int(Action::Stop);
      for (int a = 0; a < kNumActions - 1; ++a) {
        const Pose q = apply_action(p, static_cast<Action>(a), scene.grid(), false);
        const std::size_t j = scene.pose_index(q);
        const double v = scene.score(q) + values_[next_row + j];
        if (v > best_v) {
          best_v = v;
          best_a = a;
        }
      }
      values_[row + i] = best_v;
      best_[row + i] = static_cast<std::int8_t>(best_a);
    }
  }
}

double OracleTable::value(const Pose& start) const {
  require_valid_pose(start, scene_->grid());
  return values_[scene_->pose_index(start)];
}

Action OracleTable::best_action(const Pose& pose, int t) const {
  require_valid_pose(pose, scene_->grid());
  if (t < 0 || t >= horizon_) throw std::out_of_range("oracle step outside the horizon");
  return static_cast<Action>(best_[static_cast<std::size_t>(t) * scene_->num_pose_slots() + scene_->pose_index(pose)]);
}

OraclePlan OracleTable::plan(const Pose& start) const {
  require_valid_pose(start, scene_->grid());
  OraclePlan out;
  out.value = value(start);
  const std::size_t slots = scene_->num_pose_slots();
  Pose p = start;
  bool stopped = false;
  for (int t = 0; t < horizon_; ++t) {
    Action a = Action::Stop;
    if (!stopped) a = static_cast<Action>(best_[static_cast<std::size_t>(t) * slots + scene_->pose_index(p)]);
    out.actions.push_back(a);
    const StepOutcome s = scene_->step(p, a, stopped);
    p = s.next_pose;
    stopped = s.stopped;
  }
  return out;
}

OraclePlan oracle_plan(const Pose& start, const PreparedScene& scene, int horizon) {
  return OracleTable(scene, horizon).plan(start);
}

OraclePlan oracle_plan(const Pose& start, const Scene& scene, int horizon) {
  const PreparedScene prepared(scene);
  return oracle_plan(start, prepared, horizon);
}

}  // namespace adt
