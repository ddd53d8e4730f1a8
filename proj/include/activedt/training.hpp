#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "activedt/autodiff.hpp"
#include "activedt/dt.hpp"
#include "activedt/mlp.hpp"
#include "activedt/replay.hpp"
#include "activedt/rollout.hpp"
#include "activedt/scenario.hpp"

namespace adt {

struct OfflineConfig {
  int n_trajectories = 1000;
  int epochs = 50;
  int batch_size = 64;
  double lr = 1e-4;
  double lambda = 0.1;
};

struct OnlineConfig {
  int episodes_per_round = 10;
  int rounds = 100;
  int train_steps_per_round = 200;
  int batch_size = 64;
  double lr = 1e-4;
  double lambda = 0.0;
  double temperature = 1.0;
  int eval_every = 5;
  bool early_stop = false;
  double plateau_delta = 0.01;
  int plateau_rounds = 10;
};

struct ReinforceConfig {
  int hidden = 64;
  int iterations = 300;
  int episodes_per_iteration = 16;
  double lr = 1e-3;
  double temperature = 1.0;
};

struct StageConfig {
  OfflineConfig offline;
  OnlineConfig online;
  ReinforceConfig reinforce;
  int buffer_capacity = 1000;
  int horizon = 10;
  double clip_norm = 1.0;
  ChannelMask mask = ChannelMask::all();
  std::uint64_t seed = 0;

  // Throws ConfigError naming the offending field.
  void validate() const;
};

struct StepRecord {
  int step = 0;
  LossReport loss;
};

struct EvalRecord {
  int step = 0;   // last gradient step before the evaluation
  int round = 0;  // 1-based round index
  double mean_reward = 0.0;
  std::string checkpoint;
};

struct TrainingLog {
  std::vector<StepRecord> steps;
  std::vector<EvalRecord> evals;
  std::vector<std::size_t> buffer_sizes;  // after every online round

  int last_step() const { return steps.empty() ? 0 : steps.back().step; }
  // Columns: step, ce, entropy, total, eval_reward (blank when not evaluated).
  std::string to_csv() const;
};

// A training scene with the poses episodes may start from.
struct TrainingScene {
  PreparedScenePtr scene;
  std::vector<Pose> starts;
};

// Scenes of the requested categories, interleaved so that any prefix mixes
// the categories in equal parts.
std::vector<TrainingScene> training_scenes(const BenchmarkSuite& suite, std::span<const Category> categories);
// Evaluation episodes: every evaluation start of the requested categories.
std::vector<EpisodeSpec> evaluation_specs(const BenchmarkSuite& suite, std::span<const Category> categories);

// `count` episodes cycling through the scenes, each from a uniformly drawn start.
std::vector<EpisodeSpec> draw_episode_specs(std::span<const TrainingScene> scenes, int count, Rng& rng);

std::vector<Trajectory> collect_trajectories(const Policy& policy, std::span<const TrainingScene> scenes, int count,
                                             const RolloutOptions& options, Rng& rng);

// One optimizer step on a batch: Adam after global-norm clipping. Throws
// DivergenceError when the loss is not finite.
LossReport train_step(DecisionTransformer& model, std::span<const TokenizedTrajectory> batch, double lambda,
                      double clip_norm, ad::AdamState& adam);

// Stage 1: epochs * ceil(|B| / batch) steps on variance-weighted batches. Does
// not touch the simulator.
TrainingLog offline_stage(DecisionTransformer& model, const ReplayBuffer& buffer, const StageConfig& config, Rng& rng);

using EvalCallback = std::function<void(const DecisionTransformer&, const EvalRecord&)>;

// Stage 2: rounds of sampled rollouts pushed into the buffer followed by
// gradient steps; greedy evaluation on `eval` every eval_every rounds.
TrainingLog online_stage(DecisionTransformer& model, ReplayBuffer& buffer, std::span<const TrainingScene> scenes,
                         std::span<const EpisodeSpec> eval, const StageConfig& config, Rng& rng,
                         const EvalCallback& on_eval = {});

double mean_episode_reward(const Policy& policy, std::span<const EpisodeSpec> specs, const RolloutOptions& options,
                           Rng& rng);

// Fraction of steps of `trajs` at which the greedy action, given the recorded
// history and its hindsight returns, equals the recorded action.
double action_agreement(const DecisionTransformer& model, std::span<const Trajectory> trajs);

struct ReinforceResult {
  MlpPolicyNet net;
  TrainingLog log;
};

// REINFORCE with a running-mean return baseline on a Markovian MLP policy.
ReinforceResult reinforce_baseline(std::span<const TrainingScene> scenes, const StageConfig& config, int obs_dim,
                                   Rng& rng);

}  // namespace adt
