#include "activedt/rollout.hpp"

#include <stdexcept>

namespace adt {

std::vector<Action> ExpertPolicy::decide(std::span<const AgentView> views, Rng&) const {
  std::vector<Action> out;
  out.reserve(views.size());
  for (const auto& v : views) out.push_back(v.stopped ? Action::Stop : expert_action(v.pose, v.scene->scene()));
  return out;
}

std::vector<Action> RandomPolicy::decide(std::span<const AgentView> views, Rng& rng) const {
  std::vector<Action> out;
  out.reserve(views.size());
  for (std::size_t i = 0; i < views.size(); ++i) out.push_back(random_action(rng));
  return out;
}

std::vector<Action> OraclePolicy::decide(std::span<const AgentView> views, Rng&) const {
  std::vector<Action> out;
  out.reserve(views.size());
  for (const auto& v : views) {
    auto& table = tables_[v.scene];
    if (!table) table = std::make_unique<OracleTable>(*v.scene, horizon_);
    out.push_back(v.stopped ? Action::Stop : table->best_action(v.pose, v.t));
  }
  return out;
}

std::vector<Action> DTPolicy::decide(std::span<const AgentView> views, Rng& rng) const {
  std::vector<TokenizedTrajectory> histories;
  histories.reserve(views.size());
  for (const auto& v : views) histories.push_back(*v.history);
  return model_->act_batch(histories, options_, &rng);
}

std::vector<Action> MlpPolicy::decide(std::span<const AgentView> views, Rng& rng) const {
  std::vector<std::vector<double>> obs;
  obs.reserve(views.size());
  for (const auto& v : views) obs.push_back(v.history->obs.back());
  const auto logits = net_->logits(obs);
  std::vector<Action> out;
  out.reserve(views.size());
  for (const auto& z : logits) {
    const int a = options_.mode == DecodeMode::Greedy ? argmax_action(z) : sample_action(z, options_.temperature, rng);
    out.push_back(action_from_int(a));
  }
  return out;
}

std::vector<Episode> run_episodes(const Policy& policy, std::span<const EpisodeSpec> specs,
                                  const RolloutOptions& options, Rng& rng) {
  if (options.horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  const std::size_t n = specs.size();
  const double target = options.target_return.value_or(static_cast<double>(options.horizon));
  std::vector<Episode> episodes(n);
  std::vector<TokenizedTrajectory> histories(n);
  std::vector<RTGSchedule> schedules(n, RTGSchedule(target));
  std::vector<Pose> poses(n);
  std::vector<char> stopped(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!specs[i].scene) throw std::invalid_argument("episode without a scene");
    require_valid_pose(specs[i].start, specs[i].scene->grid());
    poses[i] = specs[i].start;
    episodes[i].poses.push_back(poses[i]);
    episodes[i].trajectory.scene_ref = specs[i].scene->scene().id();
    episodes[i].trajectory.init_pose = specs[i].start;
  }
  std::vector<AgentView> views(n);
  for (int t = 0; t < options.horizon; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      TokenizedTrajectory& h = histories[i];
      h.obs.push_back(specs[i].scene->observation(poses[i], options.mask));
      h.rtg.push_back(schedules[i].remaining());
      h.timesteps.push_back(t);
      views[i] = AgentView{specs[i].scene.get(), poses[i], t, stopped[i] != 0, &h};
    }
    const std::vector<Action> actions = policy.decide(views, rng);
    if (actions.size() != n) throw std::logic_error("policy returned the wrong number of actions");
    for (std::size_t i = 0; i < n; ++i) {
      const StepOutcome s = specs[i].scene->step(poses[i], actions[i], stopped[i] != 0);
      Trajectory& tr = episodes[i].trajectory;
      tr.obs.push_back(histories[i].obs.back());
      tr.actions.push_back(to_int(actions[i]));
      tr.rewards.push_back(s.reward);
      histories[i].actions.push_back(to_int(actions[i]));
      schedules[i].consume(s.reward);
      poses[i] = s.next_pose;
      stopped[i] = s.stopped ? 1 : 0;
      episodes[i].poses.push_back(poses[i]);
      episodes[i].scores.push_back(s.reward);
    }
  }
  for (auto& e : episodes) e.trajectory = hindsight_relabel(std::move(e.trajectory));
  return episodes;
}

}  // namespace adt
