#pragma once

#include <array>
#include <optional>
#include <vector>

#include "activedt/env.hpp"
#include "activedt/rng.hpp"
#include "activedt/scene.hpp"
#include "activedt/simulator.hpp"

namespace adt {

struct PolicyDecision {
  Action action = Action::Stop;
  std::optional<std::array<double, kNumActions>> action_distribution;
};

// Rotation threshold of the scripted expert: half a heading increment.
inline constexpr double kExpertBearingTolDeg = kHeadingStepDeg / 2.0;

// Scripted expert: rotate until the object is centered, then take the grid
// move that brings the robot closest to the object, and stop once inside the
// detector's plateau distance. Obstacle-blind: blocked moves are retried.
Action expert_action(const Pose& pose, const Scene& scene);

Action random_action(Rng& rng);
PolicyDecision random_decision(Rng& rng);

struct OraclePlan {
  double value = 0.0;
  std::vector<Action> actions;
};

// Exact finite-horizon planner over (pose, t, stopped) under stop-freeze
// semantics. Among equal-valued actions Stop is preferred, then the lowest
// action code.
class OracleTable {
 public:
  OracleTable(const PreparedScene& scene, int horizon);

  int horizon() const { return horizon_; }
  // Best achievable episode reward from `start` with the full horizon.
  double value(const Pose& start) const;
  OraclePlan plan(const Pose& start) const;
  // Optimal action at step t for a robot that has not stopped yet.
  Action best_action(const Pose& pose, int t) const;

 private:
  const PreparedScene* scene_;
  int horizon_;
  // values_[t * slots + pose_index] for the not-yet-stopped state.
  std::vector<double> values_;
  std::vector<std::int8_t> best_;
};

// Throws std::invalid_argument when horizon < 1.
OraclePlan oracle_plan(const Pose& start, const PreparedScene& scene, int horizon);
OraclePlan oracle_plan(const Pose& start, const Scene& scene, int horizon);

}  // namespace adt
