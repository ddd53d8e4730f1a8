#include "activedt/training.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "activedt/error.hpp"

namespace adt {

namespace {

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw ConfigError(field + ": " + what);
}

std::vector<TokenizedTrajectory> tokenize_all(const std::vector<Trajectory>& trajs) {
  std::vector<TokenizedTrajectory> out;
  out.reserve(trajs.size());
  for (const auto& t : trajs) out.push_back(t.tokenize());
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

void StageConfig::validate() const {
  require(offline.n_trajectories >= 1, "training.offline.n_trajectories", "must be >= 1");
  require(offline.epochs >= 1, "training.offline.epochs", "must be >= 1");
  require(offline.batch_size >= 1, "training.offline.batch_size", "must be >= 1");
  require(offline.lr > 0.0, "training.offline.lr", "must be positive");
  require(offline.lambda >= 0.0, "training.offline.lambda", "must be >= 0");
  require(online.episodes_per_round >= 1, "training.online.episodes_per_round", "must be >= 1");
  require(online.rounds >= 0, "training.online.rounds", "must be >= 0");
  require(online.train_steps_per_round >= 1, "training.online.train_steps_per_round", "must be >= 1");
  require(online.batch_size >= 1, "training.online.batch_size", "must be >= 1");
  require(online.lr > 0.0, "training.online.lr", "must be positive");
  require(online.lambda >= 0.0, "training.online.lambda", "must be >= 0");
  require(online.temperature > 0.0, "training.online.temperature", "must be positive");
  require(online.eval_every >= 1, "training.online.eval_every", "must be >= 1");
  require(online.plateau_rounds >= 1, "training.online.plateau_rounds", "must be >= 1");
  require(reinforce.hidden >= 1, "training.reinforce.hidden", "must be >= 1");
  require(reinforce.iterations >= 1, "training.reinforce.iterations", "must be >= 1");
  require(reinforce.episodes_per_iteration >= 1, "training.reinforce.episodes_per_iteration", "must be >= 1");
  require(reinforce.lr > 0.0, "training.reinforce.lr", "must be positive");
  require(buffer_capacity >= 1, "training.buffer_capacity", "must be >= 1");
  require(horizon >= 1, "training.horizon", "must be >= 1");
  require(clip_norm > 0.0, "training.clip_norm", "must be positive");
}

std::string TrainingLog::to_csv() const {
  std::ostringstream os;
  os << "step,ce,entropy,total,eval_reward\n";
  std::size_t e = 0;
  for (const auto& s : steps) {
    os << s.step << ',' << fmt(s.loss.ce) << ',' << fmt(s.loss.entropy) << ',' << fmt(s.loss.total) << ',';
    if (e < evals.size() && evals[e].step == s.step) os << fmt(evals[e++].mean_reward);
    os << '\n';
  }
  for (; e < evals.size(); ++e) os << evals[e].step << ",,,," << fmt(evals[e].mean_reward) << '\n';
  return os.str();
}

std::vector<TrainingScene> training_scenes(const BenchmarkSuite& suite, std::span<const Category> categories) {
  std::vector<const std::vector<SuiteScene>*> lists;
  std::size_t longest = 0;
  for (Category c : categories) {
    lists.push_back(&suite.of(c));
    longest = std::max(longest, lists.back()->size());
  }
  std::vector<TrainingScene> out;
  for (std::size_t i = 0; i < longest; ++i) {
    for (const auto* l : lists) {
      if (i < l->size()) out.push_back({(*l)[i].scene, (*l)[i].pool});
    }
  }
  return out;
}

std::vector<EpisodeSpec> evaluation_specs(const BenchmarkSuite& suite, std::span<const Category> categories) {
  std::vector<EpisodeSpec> out;
  for (Category c : categories) {
    for (const auto& s : suite.of(c)) {
      for (const Pose& p : s.eval_starts) out.push_back({s.scene, p});
    }
  }
  return out;
}

std::vector<EpisodeSpec> draw_episode_specs(std::span<const TrainingScene> scenes, int count, Rng& rng) {
  if (scenes.empty()) throw std::invalid_argument("no training scenes");
  std::vector<EpisodeSpec> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int i = 0; i < count; ++i) {
    const TrainingScene& s = scenes[static_cast<std::size_t>(i) % scenes.size()];
    if (s.starts.empty()) throw EmptyPoolError("training scene without start poses");
    const int k = rng.uniform_int(0, static_cast<int>(s.starts.size()) - 1);
    out.push_back({s.scene, s.starts[static_cast<std::size_t>(k)]});
  }
  return out;
}

std::vector<Trajectory> collect_trajectories(const Policy& policy, std::span<const TrainingScene> scenes, int count,
                                             const RolloutOptions& options, Rng& rng) {
  const std::vector<EpisodeSpec> specs = draw_episode_specs(scenes, count, rng);
  std::vector<Episode> eps = run_episodes(policy, specs, options, rng);
  std::vector<Trajectory> out;
  out.reserve(eps.size());
  for (auto& e : eps) out.push_back(std::move(e.trajectory));
  return out;
}

LossReport train_step(DecisionTransformer& model, std::span<const TokenizedTrajectory> batch, double lambda,
                      double clip_norm, ad::AdamState& adam) {
  ad::Tape tape;
  const auto loss = model.loss(tape, batch, lambda);
  const LossReport report{loss.ce.item(), loss.entropy.item(), loss.total.item()};
  if (!std::isfinite(report.total)) throw DivergenceError("training loss became non-finite");
  tape.backward(loss.total);
  ad::Gradients grads = tape.gradients();
  const double norm = ad::clip_grad_norm(grads, clip_norm);
  if (!std::isfinite(norm)) throw DivergenceError("gradient norm became non-finite");
  ad::adam_step(model.params(), grads, adam);
  return report;
}

TrainingLog offline_stage(DecisionTransformer& model, const ReplayBuffer& buffer, const StageConfig& config, Rng& rng) {
  config.validate();
  if (buffer.empty()) throw EmptyBuffer("offline stage needs a populated buffer");
  const OfflineConfig& oc = config.offline;
  ad::AdamState adam;
  adam.lr = oc.lr;
  const std::size_t batch = static_cast<std::size_t>(oc.batch_size);
  const std::size_t per_epoch = (buffer.size() + batch - 1) / batch;
  TrainingLog log;
  int step = 0;
  for (int epoch = 0; epoch < oc.epochs; ++epoch) {
    for (std::size_t k = 0; k < per_epoch; ++k) {
      const auto tokens = tokenize_all(buffer.sample_batch(batch, rng));
      log.steps.push_back({++step, train_step(model, tokens, oc.lambda, config.clip_norm, adam)});
    }
  }
  return log;
}

double mean_episode_reward(const Policy& policy, std::span<const EpisodeSpec> specs, const RolloutOptions& options,
                           Rng& rng) {
  if (specs.empty()) throw EmptyInput("no evaluation episodes");
  const std::vector<Episode> eps = run_episodes(policy, specs, options, rng);
  double total = 0.0;
  for (const auto& e : eps) total += e.trajectory.total_reward();
  return total / static_cast<double>(eps.size());
}

double action_agreement(const DecisionTransformer& model, std::span<const Trajectory> trajs) {
  std::vector<TokenizedTrajectory> prefixes;
  std::vector<int> targets;
  for (const auto& t : trajs) {
    const TokenizedTrajectory full = t.tokenize();
    for (std::size_t i = 0; i < full.steps(); ++i) {
      TokenizedTrajectory p;
      p.rtg.assign(full.rtg.begin(), full.rtg.begin() + static_cast<std::ptrdiff_t>(i + 1));
      p.obs.assign(full.obs.begin(), full.obs.begin() + static_cast<std::ptrdiff_t>(i + 1));
      p.timesteps.assign(full.timesteps.begin(), full.timesteps.begin() + static_cast<std::ptrdiff_t>(i + 1));
      p.actions.assign(full.actions.begin(), full.actions.begin() + static_cast<std::ptrdiff_t>(i));
      prefixes.push_back(std::move(p));
      targets.push_back(full.actions[i]);
    }
  }
  if (prefixes.empty()) throw EmptyInput("no steps to compare");
  constexpr std::size_t kChunk = 256;
  std::size_t hits = 0;
  for (std::size_t from = 0; from < prefixes.size(); from += kChunk) {
    const std::size_t n = std::min(kChunk, prefixes.size() - from);
    const auto logits = model.next_action_logits(std::span(prefixes).subspan(from, n));
    for (std::size_t i = 0; i < n; ++i) {
      if (argmax_action(logits[i]) == targets[from + i]) ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(prefixes.size());
}

TrainingLog online_stage(DecisionTransformer& model, ReplayBuffer& buffer, std::span<const TrainingScene> scenes,
                         std::span<const EpisodeSpec> eval, const StageConfig& config, Rng& rng,
                         const EvalCallback& on_eval) {
  config.validate();
  const OnlineConfig& oc = config.online;
  ad::AdamState adam;
  adam.lr = oc.lr;
  RolloutOptions ro;
  ro.horizon = config.horizon;
  ro.mask = config.mask;
  TrainingLog log;
  int step = 0;
  for (int round = 1; round <= oc.rounds; ++round) {
    {
      const DTPolicy explore(model, ActOptions{DecodeMode::Sample, oc.temperature});
      for (auto& t : collect_trajectories(explore, scenes, oc.episodes_per_round, ro, rng)) buffer.push(std::move(t));
    }
    log.buffer_sizes.push_back(buffer.size());
    for (int k = 0; k < oc.train_steps_per_round; ++k) {
      const auto tokens = tokenize_all(buffer.sample_batch(static_cast<std::size_t>(oc.batch_size), rng));
      log.steps.push_back({++step, train_step(model, tokens, oc.lambda, config.clip_norm, adam)});
    }
    if (!eval.empty() && (round % oc.eval_every == 0 || round == oc.rounds)) {
      const DTPolicy greedy(model, ActOptions{});
      Rng eval_rng(derive_seed(config.seed, 0xe7a1, round));
      EvalRecord rec{step, round, mean_episode_reward(greedy, eval, ro, eval_rng), "round-" + std::to_string(round)};
      log.evals.push_back(rec);
      if (on_eval) on_eval(model, rec);
      if (oc.early_stop) {
        const EvalRecord* past = nullptr;
        for (const auto& e : log.evals) {
          if (e.round <= round - oc.plateau_rounds) past = &e;
        }
        if (past != nullptr && rec.mean_reward - past->mean_reward < oc.plateau_delta) break;
      }
    }
  }
  return log;
}

ReinforceResult reinforce_baseline(std::span<const TrainingScene> scenes, const StageConfig& config, int obs_dim,
                                   Rng& rng) {
  config.validate();
  const ReinforceConfig& rc = config.reinforce;
  ReinforceResult res{MlpPolicyNet(obs_dim, rc.hidden, kNumActions, derive_seed(config.seed, 0x3e1f)), {}};
  ad::AdamState adam;
  adam.lr = rc.lr;
  RolloutOptions ro;
  ro.horizon = config.horizon;
  ro.mask = config.mask;
  double baseline = 0.0;
  std::size_t seen = 0;
  for (int it = 1; it <= rc.iterations; ++it) {
    const MlpPolicy explore(res.net, ActOptions{DecodeMode::Sample, rc.temperature});
    const auto trajs = collect_trajectories(explore, scenes, rc.episodes_per_iteration, ro, rng);
    std::vector<std::vector<double>> obs;
    std::vector<int> actions;
    std::vector<double> returns;
    for (const auto& t : trajs) {
      for (std::size_t i = 0; i < t.steps(); ++i) {
        obs.push_back(t.obs[i]);
        actions.push_back(t.actions[i]);
        returns.push_back(t.rtg[i]);
      }
    }
    std::vector<double> adv(returns.size());
    for (std::size_t i = 0; i < returns.size(); ++i) adv[i] = returns[i] - baseline;
    ad::Tape tape;
    const ad::Tensor loss = res.net.policy_gradient_loss(tape, obs, actions, adv);
    if (!std::isfinite(loss.item())) throw DivergenceError("policy-gradient loss became non-finite");
    tape.backward(loss);
    ad::Gradients grads = tape.gradients();
    ad::clip_grad_norm(grads, config.clip_norm);
    ad::adam_step(res.net.params(), grads, adam);
    for (double g : returns) baseline += (g - baseline) / static_cast<double>(++seen);
    double mean_return = 0.0;
    for (const auto& t : trajs) mean_return += t.total_reward();
    mean_return /= static_cast<double>(trajs.size());
    res.log.steps.push_back({it, LossReport{loss.item(), 0.0, loss.item()}});
    res.log.evals.push_back({it, it, mean_return, ""});
  }
  return res;
}

}  // namespace adt
