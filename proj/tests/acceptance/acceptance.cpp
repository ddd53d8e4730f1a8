#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "activedt/error.hpp"
#include "activedt/io.hpp"
#include "activedt/metrics.hpp"
#include "activedt/pipeline.hpp"

using namespace adt;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

// Pinned thresholds.
constexpr double kGradTol = 1e-4;
constexpr double kFreqTol = 0.01;
constexpr double kChi2Df2P01 = 9.2103;  // chi-square quantile, 2 dof, p = 0.01
constexpr double kOracleTol = 1e-9;
constexpr double kAgreementMin = 0.95;
constexpr double kBcRewardTol = 0.05;
constexpr double kImprovement = 0.05;
constexpr double kTrapFailureMin = 0.20;
constexpr double kAblationGap = 0.05;
constexpr double kTvMin = 0.05;
constexpr double kBcBudgetS = 30 * 60;
constexpr double kOnlineBudgetS = 2 * 60 * 60;
constexpr double kGradBudgetS = 60;
constexpr double kSamplerBudgetS = 10;
constexpr double kOracleBudgetS = 10 * 60;

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Learning settings shared by criteria 5 to 10.
struct DeskSettings {
  std::uint64_t seed = 1;
  int scenes_per_category = 25;
  int starts_per_scene = 16;
  int embed_dim = 32;
  int n_layers = 2;
  int n_heads = 2;
  int n_expert = 1000;
  int offline_epochs = 10;
  double offline_lr = 1e-3;
  int online_rounds = 30;
  int episodes_per_round = 20;
  int steps_per_round = 50;
  double online_lr = 3e-4;
  int buffer_capacity = 1000;
  int conditioning_epochs = 50;
};

RunConfig desk_config(const DeskSettings& d, std::vector<Category> cats) {
  RunConfig c;
  c.seed = d.seed;
  c.scenes.scenes_per_category = d.scenes_per_category;
  c.scenes.starts_per_scene = d.starts_per_scene;
  c.categories = cats;
  c.eval.categories = cats;
  c.dt.embed_dim = d.embed_dim;
  c.dt.n_layers = d.n_layers;
  c.dt.n_heads = d.n_heads;
  c.training.offline.n_trajectories = d.n_expert;
  c.training.offline.epochs = d.offline_epochs;
  c.training.offline.lr = d.offline_lr;
  c.training.online.rounds = d.online_rounds;
  c.training.online.episodes_per_round = d.episodes_per_round;
  c.training.online.train_steps_per_round = d.steps_per_round;
  c.training.online.lr = d.online_lr;
  c.training.online.eval_every = d.online_rounds;
  c.training.buffer_capacity = d.buffer_capacity;
  c.finalize();
  return c;
}

std::vector<EpisodeResult> run_eval(const Policy& policy, std::span<const EpisodeSpec> specs, const RunConfig& cfg) {
  Rng rng(derive_seed(cfg.seed, 0xe7a1));
  return evaluate_policy(policy, specs, rollout_options(cfg), rng);
}

MetricsSummary overall(std::span<const EpisodeResult> results) { return summarize_by_category(results).back(); }

MetricsSummary of_category(std::span<const EpisodeResult> results, Category c) {
  for (const auto& s : summarize_by_category(results)) {
    if (s.category == category_name(c)) return s;
  }
  throw EmptyInput("no results for category " + std::string(category_name(c)));
}

// ---------------------------------------------------------------------------
// 1. Gradient correctness

TokenizedTrajectory random_history(const DTConfig& c, int steps, bool final_action, Rng& rng) {
  TokenizedTrajectory t;
  for (int i = 0; i < steps; ++i) {
    t.rtg.push_back(rng.uniform(0.0, 10.0));
    std::vector<double> o(static_cast<std::size_t>(c.obs_dim));
    for (double& v : o) v = rng.uniform();
    t.obs.push_back(o);
    t.timesteps.push_back(i);
    if (i + 1 < steps || final_action) t.actions.push_back(rng.uniform_int(0, c.n_actions - 1));
  }
  return t;
}

double worst_grad_error(ad::ParamStore& params, const ad::Gradients& analytic,
                        const std::function<double(const ad::ParamStore&)>& loss_of) {
  constexpr double h = 1e-4;
  double worst = 0.0;
  for (auto& [name, p] : params) {
    const auto& g = analytic.at(name);
    for (std::size_t i = 0; i < p.values.size(); ++i) {
      const double orig = p.values[i];
      p.values[i] = orig + h;
      const double up = loss_of(params);
      p.values[i] = orig - h;
      const double down = loss_of(params);
      p.values[i] = orig;
      const double fd = (up - down) / (2.0 * h);
      worst = std::max(worst, std::abs(g[i] - fd) / std::max({std::abs(g[i]), std::abs(fd), 1e-7}));
    }
  }
  return worst;
}

Verdict gradients() {
  double worst = 0.0;
  int instances = 0;
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    Rng rng(derive_seed(0x9a1d, seed));
    DTConfig c;
    c.embed_dim = 8;
    c.n_layers = 1 + static_cast<int>(seed % 2);
    c.n_heads = seed % 3 == 0 ? 2 : 1;
    c.obs_dim = 4;
    c.context_len = 3;
    c.max_timestep = 3;
    DecisionTransformer m(c, seed);
    for (auto& [name, p] : m.params()) {
      for (double& v : p.values) v += rng.normal(0.0, 0.3);
    }
    const std::vector<TokenizedTrajectory> batch{random_history(c, 3, true, rng), random_history(c, 2, false, rng)};
    ad::Tape tape;
    const auto l = m.loss(tape, batch, 0.1);
    tape.backward(l.total);
    ad::ParamStore ps = m.params();
    worst = std::max(worst, worst_grad_error(ps, tape.gradients(), [&](const ad::ParamStore& q) {
                       return DecisionTransformer(c, q).evaluate_loss(batch, 0.1).total;
                     }));
    ++instances;
  }
  Rng rng(5);
  MlpPolicyNet net(6, 5, kNumActions, 3);
  std::vector<std::vector<double>> obs;
  std::vector<int> actions;
  std::vector<double> adv;
  for (int i = 0; i < 16; ++i) {
    std::vector<double> o(6);
    for (double& v : o) v = rng.uniform();
    obs.push_back(o);
    actions.push_back(rng.uniform_int(0, kNumActions - 1));
    adv.push_back(rng.normal());
  }
  ad::Tape tape;
  tape.backward(net.policy_gradient_loss(tape, obs, actions, adv));
  ad::ParamStore ps = net.params();
  const double mlp = worst_grad_error(ps, tape.gradients(), [&](const ad::ParamStore& q) {
    ad::Tape t;
    return MlpPolicyNet(6, 5, kNumActions, q).policy_gradient_loss(t, obs, actions, adv, false).item();
  });
  worst = std::max(worst, mlp);
  return {worst < kGradTol,
          fmt("%d transformers + policy MLP, max relative error %.2e (< %.0e)", instances, worst, kGradTol)};
}

// ---------------------------------------------------------------------------
// 2. Variance-weighted sampler

Trajectory two_step(double a, double b) {
  Trajectory t;
  t.scene_ref = "probe";
  t.obs = {{0.0}, {0.0}};
  t.actions = {0, 0};
  t.rewards = {a, b};
  t.rtg = compute_rtg(t.rewards);
  return t;
}

Verdict sampler() {
  ReplayBuffer buf(8);
  // Population variance of {0, 2s} is s^2.
  buf.push(two_step(0.0, 2.0 * std::sqrt(0.1)));
  buf.push(two_step(0.5, 0.5));
  buf.push(two_step(0.0, 2.0 * std::sqrt(0.1)));
  buf.push(two_step(0.0, 2.0 * std::sqrt(0.2)));
  const std::size_t n = 100000;
  Rng rng(2024);
  std::vector<std::size_t> counts(buf.size(), 0);
  for (std::size_t i : buf.sample_indices(n, rng)) ++counts[i];
  const double expected[] = {0.25, 0.0, 0.25, 0.5};
  const std::size_t order[] = {0, 2, 3};
  double worst = 0.0, chi2 = 0.0;
  for (std::size_t k : order) {
    const double f = static_cast<double>(counts[k]) / static_cast<double>(n);
    worst = std::max(worst, std::abs(f - expected[k]));
    const double e = expected[k] * static_cast<double>(n);
    chi2 += (static_cast<double>(counts[k]) - e) * (static_cast<double>(counts[k]) - e) / e;
  }
  ReplayBuffer flat(4);
  flat.push(two_step(1.0, 1.0));
  flat.push(two_step(0.0, 0.0));
  Rng rng2(7);
  std::set<std::size_t> seen;
  for (std::size_t i : flat.sample_indices(200, rng2)) seen.insert(i);
  const bool ok = worst <= kFreqTol && chi2 < kChi2Df2P01 && counts[1] == 0 && seen.size() == 2;
  return {ok, fmt("freq %.4f/%.4f/%.4f, max dev %.4f (<= %.2f), chi2 %.3f (< %.4f), zero-variance draws %zu",
                  counts[0] / double(n), counts[2] / double(n), counts[3] / double(n), worst, kFreqTol, chi2,
                  kChi2Df2P01, counts[1])};
}

// ---------------------------------------------------------------------------
// 3. Return-to-go discipline

class ScheduleSpy : public Policy {
 public:
  explicit ScheduleSpy(const Policy& inner) : inner_(&inner) {}
  std::string name() const override { return "spy"; }
  std::vector<Action> decide(std::span<const AgentView> views, Rng& rng) const override {
    if (seen.size() < views.size()) seen.resize(views.size());
    for (std::size_t i = 0; i < views.size(); ++i) seen[i].push_back(views[i].history->rtg.back());
    return inner_->decide(views, rng);
  }
  mutable std::vector<std::vector<double>> seen;

 private:
  const Policy* inner_;
};

Verdict rtg_discipline() {
  Rng rng(33);
  int bad = 0;
  for (int s = 0; s < 1000; ++s) {
    std::vector<double> r(static_cast<std::size_t>(rng.uniform_int(1, 30)));
    for (double& v : r) v = quantize_score(rng.uniform());
    const auto g = compute_rtg(r);
    for (std::size_t t = 0; t < r.size(); ++t) {
      const double next = t + 1 < r.size() ? g[t + 1] : 0.0;
      if (g[t] - next != r[t]) ++bad;
    }
  }
  SuiteOptions so;
  so.scenes_per_category = 2;
  so.starts_per_scene = 8;
  so.seed = 3;
  const BenchmarkSuite suite = build_suite(so);
  const auto specs = evaluation_specs(suite, kAllCategories);
  DTConfig dc;
  dc.embed_dim = 16;
  const DecisionTransformer model(dc, 4);
  const DTPolicy sampled(model, ActOptions{DecodeMode::Sample, 1.0});
  const ExpertPolicy expert;
  int schedule_bad = 0, checked = 0;
  for (const Policy* inner : {static_cast<const Policy*>(&sampled), static_cast<const Policy*>(&expert)}) {
    const ScheduleSpy spy(*inner);
    RolloutOptions ro;
    Rng erng(9);
    const auto eps = run_episodes(spy, specs, ro, erng);
    for (std::size_t i = 0; i < eps.size(); ++i) {
      double consumed = 0.0;
      for (std::size_t t = 0; t < eps[i].trajectory.steps(); ++t) {
        if (spy.seen[i][t] != static_cast<double>(ro.horizon) - consumed) ++schedule_bad;
        consumed += eps[i].trajectory.rewards[t];
        ++checked;
      }
    }
  }
  return {bad == 0 && schedule_bad == 0,
          fmt("1000 sequences, %d identity violations; %d schedule checks, %d violations", bad, checked,
              schedule_bad)};
}

// ---------------------------------------------------------------------------
// 4. Oracle dominance

double brute_force(const Scene& s, const Pose& p, bool stopped, int steps_left) {
  if (steps_left == 0) return 0.0;
  double best = 0.0;
  for (Action a : kAllActions) {
    const StepOutcome o = step(p, a, s, stopped);
    best = std::max(best, o.reward + brute_force(s, o.next_pose, o.stopped, steps_left - 1));
  }
  return best;
}

Verdict oracle_dominance(const DecisionTransformer& learned) {
  const RunConfig cfg = [] {
    RunConfig c;
    c.finalize();
    return c;
  }();
  const BenchmarkSuite suite = make_suite(cfg);
  const auto specs = evaluation_specs(suite, kAllCategories);
  const ExpertPolicy expert;
  const RandomPolicy random;
  const DTPolicy dt(learned, ActOptions{}, "dt");
  const DTPolicy dt_sampled(learned, ActOptions{DecodeMode::Sample, 1.0}, "dt-sampled");
  int violations = 0;
  std::size_t episodes = 0;
  double max_excess = -1e300;
  for (const Policy* p : {static_cast<const Policy*>(&expert), static_cast<const Policy*>(&random),
                          static_cast<const Policy*>(&dt), static_cast<const Policy*>(&dt_sampled)}) {
    for (const auto& r : run_eval(*p, specs, cfg)) {
      max_excess = std::max(max_excess, r.reward - r.oracle_value);
      if (r.reward > r.oracle_value + kOracleTol) ++violations;
      ++episodes;
    }
  }
  Rng rng(21);
  int checked = 0, mismatches = 0;
  while (checked < 20) {
    Scene s;
    s.grid = OccupancyGrid(8, 8, 0.3);
    for (int k = 0; k < 4; ++k) s.grid.set(rng.uniform_int(1, 6), rng.uniform_int(1, 6), Cell::Obstacle);
    s.object.center = {rng.uniform(0.45, 1.95), rng.uniform(0.45, 1.95)};
    s.object.radius = 0.12;
    if (!object_footprint_clear(s.object, s.grid)) continue;
    const Pose start{rng.uniform_int(1, 6), rng.uniform_int(1, 6), rng.uniform_int(0, 11)};
    if (!is_valid_pose(start, s.grid)) continue;
    const double planned = oracle_plan(start, PreparedScene(s), 4).value;
    if (std::abs(planned - brute_force(s, start, false, 4)) > kOracleTol) ++mismatches;
    ++checked;
  }
  return {violations == 0 && mismatches == 0 && suite.total_eval_starts() == 1600,
          fmt("%zu episodes on %zu starts, %d above the oracle (max excess %.3g); %d/20 enumeration mismatches",
              episodes, suite.total_eval_starts(), violations, max_excess, mismatches)};
}

// ---------------------------------------------------------------------------
// Shared learning runs

struct Lab {
  DeskSettings desk;
  fs::path out;

  struct Mixed {
    RunConfig cfg;
    BenchmarkSuite suite;
    std::vector<TrainingScene> scenes;
    std::vector<EpisodeSpec> eval;
  };

  Mixed world(std::vector<Category> cats, ChannelMask mask = ChannelMask::all()) const {
    Mixed m;
    m.cfg = desk_config(desk, cats);
    m.cfg.training.mask = mask;
    m.cfg.eval.mask = mask;
    m.suite = make_suite(m.cfg);
    m.scenes = training_scenes(m.suite, cats);
    m.eval = evaluation_specs(m.suite, cats);
    return m;
  }

  struct Headline {
    std::vector<EpisodeResult> expert, offline, online_expert, online_random;
    double seconds = 0.0;
  };
  std::optional<Headline> headline_;

  const Headline& headline() {
    if (headline_) return *headline_;
    const auto t0 = Clock::now();
    const Mixed w = world({Category::Cluttered, Category::Trap});
    Headline h;
    const ExpertPolicy expert;
    const RandomPolicy random;
    h.expert = run_eval(expert, w.eval, w.cfg);
    const DTRun from_expert = run_dt_training(w.cfg, expert, w.scenes, {}, true, 1);
    const DTRun from_random = run_dt_training(w.cfg, random, w.scenes, {}, true, 2);
    h.offline = run_eval(DTPolicy(from_expert.offline, {}, "dt-offline"), w.eval, w.cfg);
    h.online_expert = run_eval(DTPolicy(from_expert.final, {}, "dt-online-expert"), w.eval, w.cfg);
    h.online_random = run_eval(DTPolicy(from_random.final, {}, "dt-online-random"), w.eval, w.cfg);
    h.seconds = seconds_since(t0);
    if (!out.empty()) {
      std::vector<EpisodeResult> all;
      for (const auto* v : {&h.expert, &h.offline, &h.online_expert, &h.online_random}) {
        all.insert(all.end(), v->begin(), v->end());
      }
      write_file((out / "headline_results.csv").string(), results_csv(all));
      write_file((out / "dt_online_expert.json").string(), from_expert.final.to_json());
    }
    headline_ = std::move(h);
    return *headline_;
  }
};

// ---------------------------------------------------------------------------
// 5. Behavior cloning

Verdict behavior_cloning(const Lab& lab) {
  const auto t0 = Clock::now();
  const auto w = lab.world({kAllCategories.begin(), kAllCategories.end()});
  const ExpertPolicy expert;
  const DTRun run = run_dt_training(w.cfg, expert, w.scenes, {}, false, 5);
  Rng held_rng(derive_seed(w.cfg.seed, 0x4e1d));
  const auto held = collect_trajectories(expert, w.scenes, 500, rollout_options(w.cfg), held_rng);
  const double agreement = action_agreement(run.offline, held);
  const double dt_reward = overall(run_eval(DTPolicy(run.offline, {}), w.eval, w.cfg)).mean_reward;
  const double ex_reward = overall(run_eval(expert, w.eval, w.cfg)).mean_reward;
  const double gap = std::abs(dt_reward - ex_reward) / ex_reward;
  const double secs = seconds_since(t0);
  return {agreement >= kAgreementMin && gap <= kBcRewardTol && secs <= kBcBudgetS,
          fmt("%d expert trajectories; held-out agreement %.4f (>= %.2f); reward %.3f vs expert %.3f, gap %.1f%% "
              "(<= %.0f%%); %.0f s (<= %.0f s)",
              w.cfg.training.offline.n_trajectories, agreement, kAgreementMin, dt_reward, ex_reward, 100 * gap,
              100 * kBcRewardTol, secs, kBcBudgetS)};
}

// ---------------------------------------------------------------------------
// 6 and 7. Online improvement and failure-rate collapse

Verdict online_improvement(Lab& lab) {
  const auto& h = lab.headline();
  const double online = overall(h.online_expert).mean_reward;
  const double ex = overall(h.expert).mean_reward;
  const double off = overall(h.offline).mean_reward;
  const double rnd = overall(h.online_random).mean_reward;
  const double need = 1.0 + kImprovement;
  const bool ok = online >= need * ex && online >= need * off && online >= need * rnd && h.seconds <= kOnlineBudgetS;
  return {ok, fmt("trap+cluttered: online-expert %.3f vs expert %.3f, offline %.3f, online-random %.3f "
                  "(needs x%.2f of each); %.0f s (<= %.0f s)",
                  online, ex, off, rnd, need, h.seconds, kOnlineBudgetS)};
}

Verdict failure_collapse(Lab& lab) {
  const auto& h = lab.headline();
  const double ex = of_category(h.expert, Category::Trap).failure_rate;
  const double dt = of_category(h.online_expert, Category::Trap).failure_rate;
  return {ex >= kTrapFailureMin && dt <= 0.5 * ex,
          fmt("trap failure rate: expert %.3f (>= %.2f), online-expert %.3f (<= %.3f)", ex, kTrapFailureMin, dt,
              0.5 * ex)};
}

// ---------------------------------------------------------------------------
// 8. Observation ablation

Verdict ablation(const Lab& lab) {
  const ChannelMask masks[] = {ChannelMask::all(), ChannelMask{false, true}, ChannelMask{true, false},
                               ChannelMask::none()};
  std::vector<MetricsSummary> s;
  std::vector<EpisodeResult> all;
  for (const ChannelMask m : masks) {
    const auto w = lab.world({Category::Cluttered, Category::Trap}, m);
    const ExpertPolicy expert;
    const DTRun run = run_dt_training(w.cfg, expert, w.scenes, {}, true, 8);
    const auto results = run_eval(DTPolicy(run.final, {}, mask_label(m)), w.eval, w.cfg);
    all.insert(all.end(), results.begin(), results.end());
    s.push_back(overall(results));
  }
  if (!lab.out.empty()) write_file((lab.out / "ablation_results.csv").string(), results_csv(all));
  const double both = s[0].mean_reward, no_rgb = s[1].mean_reward, no_depth = s[2].mean_reward,
               none = s[3].mean_reward;
  const bool ge = both >= no_rgb;
  const bool gt = no_rgb >= (1.0 + kAblationGap) * no_depth;
  const bool approx = std::abs(no_depth - none) <= std::max(s[2].std_reward, s[3].std_reward);
  return {ge && gt && approx,
          fmt("depth+rgb %.3f >= w/o rgb %.3f: %s; w/o rgb > w/o depth %.3f by 5%%: %s; w/o depth ~ w/o both "
              "%.3f within 1 std: %s",
              both, no_rgb, ge ? "yes" : "no", no_depth, gt ? "yes" : "no", none, approx ? "yes" : "no")};
}

// ---------------------------------------------------------------------------
// 9. Conditioning sensitivity

Verdict conditioning(const Lab& lab) {
  const auto w = lab.world({Category::Open});
  const ExpertPolicy expert;
  const RandomPolicy random;
  const RolloutOptions ro = rollout_options(w.cfg);
  // Probe: the start with the strongest faint detection, so that low-return
  // rollouts from it still carry reward variance and enter the sampler.
  EpisodeSpec probe;
  double best = -1.0;
  for (const auto& ts : w.scenes) {
    for (const Pose& p : ts.starts) {
      const double score = ts.scene->detection(p).score;
      if (score > best) {
        best = score;
        probe = {ts.scene, p};
      }
    }
  }
  Rng rng(derive_seed(w.cfg.seed, 0xc0d));
  std::vector<EpisodeSpec> specs = draw_episode_specs(w.scenes, 200, rng);
  specs.insert(specs.end(), 200, probe);
  ReplayBuffer buffer(static_cast<std::size_t>(2 * specs.size()));
  std::vector<double> returns[2];
  int which = 0;
  for (const Policy* p : {static_cast<const Policy*>(&expert), static_cast<const Policy*>(&random)}) {
    for (auto& e : run_episodes(*p, specs, ro, rng)) {
      if (e.trajectory.init_pose == probe.start && e.trajectory.scene_ref == probe.scene->scene().id()) {
        returns[which].push_back(e.trajectory.total_reward());
      }
      buffer.push(std::move(e.trajectory));
    }
    ++which;
  }
  auto mean = [](const std::vector<double>& v) {
    double t = 0.0;
    for (double x : v) t += x;
    return v.empty() ? 0.0 : t / static_cast<double>(v.size());
  };
  DecisionTransformer model(w.cfg.dt, derive_seed(w.cfg.seed, 0xc0e));
  Rng train_rng(derive_seed(w.cfg.seed, 0xc0f));
  StageConfig sc = w.cfg.training;
  sc.offline.epochs = lab.desk.conditioning_epochs;
  offline_stage(model, buffer, sc, train_rng);
  const std::vector<double> o0 = probe.scene->observation(probe.start, ro.mask);
  auto dist = [&](double rtg) {
    TokenizedTrajectory h{{rtg}, {o0}, {}, {0}};
    auto logits = model.next_action_logits(std::span(&h, 1)).front();
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double& v : logits) z += (v = std::exp(v - mx));
    for (double& v : logits) v /= z;
    return logits;
  };
  const auto hi = dist(static_cast<double>(ro.horizon));
  const auto lo = dist(0.0);
  double tv = 0.0;
  for (std::size_t k = 0; k < hi.size(); ++k) tv += 0.5 * std::abs(hi[k] - lo[k]);
  return {tv > kTvMin, fmt("probe score %.3f, returns from it: expert %.2f, random %.2f; TV(R0=%d, R0=0) %.4f (> %.2f)",
                          best, mean(returns[0]), mean(returns[1]), ro.horizon, tv, kTvMin)};
}

// ---------------------------------------------------------------------------
// 10. Determinism

std::string end_to_end(std::uint64_t seed) {
  DeskSettings d;
  d.seed = seed;
  d.scenes_per_category = 2;
  d.starts_per_scene = 4;
  d.embed_dim = 16;
  d.n_layers = 1;
  d.n_expert = 40;
  d.offline_epochs = 2;
  d.online_rounds = 2;
  d.episodes_per_round = 8;
  d.steps_per_round = 3;
  const RunConfig cfg = desk_config(d, {kAllCategories.begin(), kAllCategories.end()});
  const BenchmarkSuite suite = make_suite(cfg);
  const auto scenes = training_scenes(suite, cfg.categories);
  const auto specs = evaluation_specs(suite, cfg.categories);
  const DTRun run = run_dt_training(cfg, ExpertPolicy{}, scenes, specs, true, 1);
  std::vector<EpisodeResult> results;
  const DTPolicy off(run.offline, {}, "dt-offline");
  const DTPolicy on(run.final, {}, "dt-online");
  const DTPolicy sampled(run.final, {DecodeMode::Sample, 1.0}, "dt-sampled");
  for (const Policy* p : {static_cast<const Policy*>(&off), static_cast<const Policy*>(&on),
                          static_cast<const Policy*>(&sampled)}) {
    const auto r = run_eval(*p, specs, cfg);
    results.insert(results.end(), r.begin(), r.end());
  }
  const auto sums = summarize_by_category(results);
  return results_csv(results) + summaries_csv(sums) + run.offline_log.to_csv() + run.online_log.to_csv();
}

Verdict determinism(const Lab& lab) {
  const std::string a = end_to_end(77);
  const std::string b = end_to_end(77);
  if (!lab.out.empty()) {
    write_file((lab.out / "determinism_a.csv").string(), a);
    write_file((lab.out / "determinism_b.csv").string(), b);
  }
  return {a == b && !a.empty(), fmt("two seeded end-to-end runs, %zu bytes each, identical: %s", a.size(),
                                    a == b ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::vector<int> only;
  std::string out_dir;
  app.add_option("--only", only, "Run only these criteria");
  app.add_option("--out", out_dir, "Directory for result files");
  CLI11_PARSE(app, argc, argv);

  Lab lab;
  if (!out_dir.empty()) {
    lab.out = out_dir;
    fs::create_directories(lab.out);
  }

  struct Criterion {
    int id;
    const char* name;
    std::function<Verdict()> run;
    double budget_s;
  };
  const std::vector<Criterion> criteria = {
      {1, "gradient correctness", gradients, kGradBudgetS},
      {2, "variance-weighted sampler", sampler, kSamplerBudgetS},
      {3, "return-to-go discipline", rtg_discipline, 0},
      {4, "oracle dominance",
       [&] {
         const auto w = lab.world({Category::Open, Category::Trap});
         return oracle_dominance(run_dt_training(w.cfg, ExpertPolicy{}, w.scenes, {}, false, 4).offline);
       },
       kOracleBudgetS},
      {5, "behavior cloning", [&] { return behavior_cloning(lab); }, 0},
      {6, "offline to online improvement", [&] { return online_improvement(lab); }, 0},
      {7, "failure-rate collapse", [&] { return failure_collapse(lab); }, 0},
      {8, "observation ablation ordering", [&] { return ablation(lab); }, 0},
      {9, "return conditioning sensitivity", [&] { return conditioning(lab); }, 0},
      {10, "determinism", [&] { return determinism(lab); }, 0},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto t0 = Clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    const double secs = seconds_since(t0);
    if (c.budget_s > 0 && secs > c.budget_s) {
      v.pass = false;
      v.detail += fmt("; over the %.0f s budget", c.budget_s);
    }
    if (!v.pass) ++failed;
    std::printf("%s [%d] %s: %s (%.1f s)\n", v.pass ? "PASS" : "FAIL", c.id, c.name, v.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
