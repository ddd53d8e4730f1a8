#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "activedt/rollout.hpp"
#include "activedt/scene.hpp"

namespace adt {

// Score that counts as a confident detection for steps-to-first-detection.
inline constexpr double kDetectionThreshold = 0.8;
// Episodes below this reward count as failures.
inline constexpr double kFailureThreshold = 0.2;

struct EpisodeResult {
  std::string scene_id;
  Category category = Category::Open;
  Pose start;
  std::string policy;
  double reward = 0.0;
  std::optional<int> first_detection;  // first step whose score reaches the threshold
  std::vector<int> actions;
  double oracle_value = 0.0;
};

EpisodeResult make_result(const Episode& episode, const EpisodeSpec& spec, const std::string& policy,
                          double oracle_value);

struct MetricsSummary {
  std::string policy;
  std::string category;  // category name, or "all"
  std::size_t episodes = 0;
  double mean_reward = 0.0;
  double std_reward = 0.0;  // population
  double failure_rate = 0.0;
  std::vector<std::size_t> histogram;  // horizon + 1 unit-width bins, last one closed
  double mean_oracle = 0.0;
  double oracle_ratio = 0.0;
};

// Throws EmptyInput on an empty result list.
MetricsSummary summarize(std::span<const EpisodeResult> results, int horizon = 10);

// Evaluates `policy` on every spec, attaching exact oracle values.
std::vector<EpisodeResult> evaluate_policy(const Policy& policy, std::span<const EpisodeSpec> specs,
                                           const RolloutOptions& options, Rng& rng);

// One summary per category present (in category order) followed by "all".
std::vector<MetricsSummary> summarize_by_category(std::span<const EpisodeResult> results, int horizon = 10);

std::string results_csv(std::span<const EpisodeResult> results);
std::string summaries_csv(std::span<const MetricsSummary> summaries);
std::string summaries_json(std::span<const MetricsSummary> summaries);

// Re-simulates the recorded actions and returns the episode reward.
double replay_reward(const PreparedScene& scene, const Pose& start, std::span<const int> actions);

}  // namespace adt
