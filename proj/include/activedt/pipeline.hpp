#pragma once

#include <span>
#include <string>
#include <vector>

#include "activedt/io.hpp"
#include "activedt/metrics.hpp"
#include "activedt/training.hpp"

namespace adt {

BenchmarkSuite make_suite(const RunConfig& config);

// Zeroes the masked channels of every stored observation.
std::vector<Trajectory> mask_trajectories(std::vector<Trajectory> trajs, ChannelMask mask, int n_rays);

struct DTRun {
  DecisionTransformer offline;  // after Stage 1
  DecisionTransformer final;    // after Stage 2 (equal to offline when skipped)
  TrainingLog offline_log;
  TrainingLog online_log;
  ReplayBuffer buffer{1};
};

// Two-stage training with `teacher` as the data-collecting policy: fill the buffer
// with teacher rollouts on `scenes`, train offline, then optionally fine-tune
// online on the same scenes with periodic greedy evaluation on `eval`. All
// randomness derives from the config seed and `stream`.
DTRun run_dt_training(const RunConfig& config, const Policy& teacher, std::span<const TrainingScene> scenes,
                      std::span<const EpisodeSpec> eval, bool online, std::uint64_t stream,
                      const EvalCallback& on_eval = {});

RolloutOptions rollout_options(const RunConfig& config);

}  // namespace adt
