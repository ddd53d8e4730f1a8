#include "activedt/pipeline.hpp"

namespace adt {

BenchmarkSuite make_suite(const RunConfig& config) { return build_suite(config.scenes, config.categories); }

std::vector<Trajectory> mask_trajectories(std::vector<Trajectory> trajs, ChannelMask mask, int n_rays) {
  for (auto& t : trajs) {
    for (auto& o : t.obs) apply_mask(o, n_rays, mask);
  }
  return trajs;
}

RolloutOptions rollout_options(const RunConfig& config) {
  RolloutOptions ro;
  ro.horizon = config.training.horizon;
  ro.mask = config.training.mask;
  ro.target_return = config.eval.target_return;
  return ro;
}

DTRun run_dt_training(const RunConfig& config, const Policy& teacher, std::span<const TrainingScene> scenes,
                      std::span<const EpisodeSpec> eval, bool online, std::uint64_t stream,
                      const EvalCallback& on_eval) {
  const StageConfig& sc = config.training;
  const std::uint64_t seed = derive_seed(config.seed, 0xd7, stream);
  Rng collect_rng(derive_seed(seed, 1));
  DTRun run{DecisionTransformer(config.dt, derive_seed(seed, 2)), {}, {}, {},
            ReplayBuffer(static_cast<std::size_t>(sc.buffer_capacity))};
  for (auto& t : collect_trajectories(teacher, scenes, sc.offline.n_trajectories, rollout_options(config), collect_rng)) {
    run.buffer.push(std::move(t));
  }
  Rng offline_rng(derive_seed(seed, 3));
  run.offline_log = offline_stage(run.offline, run.buffer, sc, offline_rng);
  run.final = run.offline;
  if (online) {
    Rng online_rng(derive_seed(seed, 4));
    run.online_log = online_stage(run.final, run.buffer, scenes, eval, sc, online_rng, on_eval);
  }
  return run;
}

}  // namespace adt
