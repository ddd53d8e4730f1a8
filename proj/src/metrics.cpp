#include "activedt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <json.hpp>

#include "activedt/error.hpp"
#include "activedt/policies.hpp"

namespace adt {

namespace {

std::string num(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

EpisodeResult make_result(const Episode& episode, const EpisodeSpec& spec, const std::string& policy,
                          double oracle_value) {
  EpisodeResult r;
  r.scene_id = spec.scene->scene().id();
  r.category = spec.scene->scene().category;
  r.start = spec.start;
  r.policy = policy;
  r.reward = episode.trajectory.total_reward();
  for (std::size_t t = 0; t < episode.scores.size(); ++t) {
    if (episode.scores[t] >= kDetectionThreshold) {
      r.first_detection = static_cast<int>(t);
      break;
    }
  }
  r.actions = episode.trajectory.actions;
  r.oracle_value = oracle_value;
  return r;
}

MetricsSummary summarize(std::span<const EpisodeResult> results, int horizon) {
  if (results.empty()) throw EmptyInput("cannot summarize zero episodes");
  MetricsSummary s;
  s.policy = results.front().policy;
  s.category = std::string(category_name(results.front().category));
  for (const auto& r : results) {
    if (std::string(category_name(r.category)) != s.category) s.category = "all";
  }
  s.episodes = results.size();
  s.histogram.assign(static_cast<std::size_t>(horizon) + 1, 0);
  double sum = 0.0, oracle = 0.0;
  std::size_t failures = 0;
  for (const auto& r : results) {
    sum += r.reward;
    oracle += r.oracle_value;
    if (r.reward < kFailureThreshold) ++failures;
    const int bin = std::clamp(static_cast<int>(std::floor(r.reward)), 0, horizon);
    ++s.histogram[static_cast<std::size_t>(bin)];
  }
  const double n = static_cast<double>(results.size());
  s.mean_reward = sum / n;
  double ss = 0.0;
  for (const auto& r : results) ss += (r.reward - s.mean_reward) * (r.reward - s.mean_reward);
  s.std_reward = std::sqrt(ss / n);
  s.failure_rate = static_cast<double>(failures) / n;
  s.mean_oracle = oracle / n;
  s.oracle_ratio = s.mean_oracle > 0.0 ? s.mean_reward / s.mean_oracle : 0.0;
  return s;
}

std::vector<EpisodeResult> evaluate_policy(const Policy& policy, std::span<const EpisodeSpec> specs,
                                           const RolloutOptions& options, Rng& rng) {
  const std::vector<Episode> eps = run_episodes(policy, specs, options, rng);
  std::map<const PreparedScene*, std::unique_ptr<OracleTable>> tables;
  std::vector<EpisodeResult> out;
  out.reserve(eps.size());
  for (std::size_t i = 0; i < eps.size(); ++i) {
    auto& table = tables[specs[i].scene.get()];
    if (!table) table = std::make_unique<OracleTable>(*specs[i].scene, options.horizon);
    out.push_back(make_result(eps[i], specs[i], policy.name(), table->value(specs[i].start)));
  }
  return out;
}

std::vector<MetricsSummary> summarize_by_category(std::span<const EpisodeResult> results, int horizon) {
  std::vector<MetricsSummary> out;
  for (Category c : kAllCategories) {
    std::vector<EpisodeResult> part;
    for (const auto& r : results) {
      if (r.category == c) part.push_back(r);
    }
    if (!part.empty()) out.push_back(summarize(part, horizon));
  }
  MetricsSummary all = summarize(results, horizon);
  all.category = "all";
  out.push_back(std::move(all));
  return out;
}

std::string results_csv(std::span<const EpisodeResult> results) {
  std::ostringstream os;
  os << "policy,scene,category,x,y,heading,reward,oracle_value,first_detection_diagnostic,actions\n";
  for (const auto& r : results) {
    os << r.policy << ',' << r.scene_id << ',' << category_name(r.category) << ',' << r.start.x << ','
       << r.start.y << ',' << r.start.heading << ',' << num(r.reward) << ',' << num(r.oracle_value) << ',';
    if (r.first_detection) os << *r.first_detection;
    os << ',';
    for (std::size_t i = 0; i < r.actions.size(); ++i) os << (i ? " " : "") << r.actions[i];
    os << '\n';
  }
  return os.str();
}

std::string summaries_csv(std::span<const MetricsSummary> summaries) {
  std::ostringstream os;
  os << "policy,category,episodes,mean_reward,std_reward,failure_rate,mean_oracle,oracle_ratio,histogram\n";
  for (const auto& s : summaries) {
    os << s.policy << ',' << s.category << ',' << s.episodes << ',' << num(s.mean_reward) << ','
       << num(s.std_reward) << ',' << num(s.failure_rate) << ',' << num(s.mean_oracle) << ','
       << num(s.oracle_ratio) << ',';
    for (std::size_t i = 0; i < s.histogram.size(); ++i) os << (i ? " " : "") << s.histogram[i];
    os << '\n';
  }
  return os.str();
}

std::string summaries_json(std::span<const MetricsSummary> summaries) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& s : summaries) {
    arr.push_back({{"policy", s.policy},
                   {"category", s.category},
                   {"episodes", s.episodes},
                   {"mean_reward", s.mean_reward},
                   {"std_reward", s.std_reward},
                   {"failure_rate", s.failure_rate},
                   {"histogram", s.histogram},
                   {"mean_oracle", s.mean_oracle},
                   {"oracle_ratio", s.oracle_ratio}});
  }
  return nlohmann::json{{"version", 1}, {"summaries", arr}}.dump(2);
}

double replay_reward(const PreparedScene& scene, const Pose& start, std::span<const int> actions) {
  Pose p = start;
  bool stopped = false;
  double total = 0.0;
  for (int a : actions) {
    const StepOutcome s = scene.step(p, action_from_int(a), stopped);
    total += s.reward;
    p = s.next_pose;
    stopped = s.stopped;
  }
  return total;
}

}  // namespace adt
