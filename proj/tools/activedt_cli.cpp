#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>

#include "activedt/error.hpp"
#include "activedt/pipeline.hpp"

using namespace adt;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
};

RunConfig load(const Common& c) {
  RunConfig cfg = c.config_path.empty() ? config_from_json(R"({"version":1})") : config_from_json(read_file(c.config_path));
  if (c.seed) {
    cfg.seed = *c.seed;
    cfg.finalize();
  }
  return cfg;
}

void add_common(CLI::App* app, Common& c) {
  app->add_option("-c,--config", c.config_path, "Run configuration (JSON)")->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "Overrides the configuration seed");
}

std::vector<Category> parse_suite(const std::string& name, const RunConfig& cfg) {
  if (name.empty()) return cfg.eval.categories;
  std::vector<Category> out;
  std::stringstream ss(name);
  std::string item;
  while (std::getline(ss, item, '+')) {
    const auto c = category_from_name(item);
    if (!c) throw ConfigError("--suite: unknown category '" + item + "'");
    out.push_back(*c);
  }
  return out;
}

std::vector<Trajectory> load_trajectories(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_trajectories(in);
}

void save_trajectories(const std::string& path, const std::vector<Trajectory>& trajs) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_trajectories(out, trajs);
}

struct LoadedPolicy {
  std::unique_ptr<Policy> policy;
  DecisionTransformer dt;
  MlpPolicyNet mlp;
};

std::unique_ptr<LoadedPolicy> make_policy(const std::string& kind, const std::string& checkpoint, const RunConfig& cfg) {
  auto lp = std::make_unique<LoadedPolicy>();
  if (kind == "expert") {
    lp->policy = std::make_unique<ExpertPolicy>();
  } else if (kind == "random") {
    lp->policy = std::make_unique<RandomPolicy>();
  } else if (kind == "oracle") {
    lp->policy = std::make_unique<OraclePolicy>(cfg.training.horizon);
  } else if (kind == "dt" || kind == "reinforce") {
    if (checkpoint.empty()) throw ConfigError("--checkpoint is required for policy '" + kind + "'");
    if (kind == "dt") {
      lp->dt = DecisionTransformer::from_json(read_file(checkpoint));
      lp->policy = std::make_unique<DTPolicy>(lp->dt, ActOptions{});
    } else {
      lp->mlp = MlpPolicyNet::from_json(read_file(checkpoint));
      lp->policy = std::make_unique<MlpPolicy>(lp->mlp, ActOptions{});
    }
  } else {
    throw ConfigError("--policy: unknown policy '" + kind + "'");
  }
  return lp;
}

ReplayBuffer buffer_from(const std::vector<Trajectory>& trajs, const RunConfig& cfg) {
  ReplayBuffer buffer(static_cast<std::size_t>(cfg.training.buffer_capacity));
  const int n_rays = cfg.scenes.generate.detector.n_rays;
  for (auto& t : mask_trajectories(trajs, cfg.training.mask, n_rays)) buffer.push(hindsight_relabel(std::move(t)));
  return buffer;
}

std::string pose_str(const Pose& p) {
  return "(" + std::to_string(p.x) + "," + std::to_string(p.y) + "," + std::to_string(p.heading) + ")";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Active object detection with a return-conditioned transformer policy"};
  app.require_subcommand(1);

  Common common;
  std::string out, data, checkpoint, log_path, policy_kind = "expert", suite_name, results_path, summary_path;
  std::string scene_id, start_str;
  int count = 0;
  bool online = false;

  auto* gen = app.add_subcommand("gen-scenes", "Generate the benchmark scenes and their start pools");
  add_common(gen, common);
  gen->add_option("-o,--out", out, "Output directory")->required();

  auto* collect = app.add_subcommand("collect-expert", "Roll out the scripted expert into a trajectory file");
  add_common(collect, common);
  collect->add_option("-o,--out", out, "Output JSON-lines file")->required();
  collect->add_option("-n,--count", count, "Number of trajectories (default: training.offline.n_trajectories)");
  collect->add_option("--policy", policy_kind, "Collecting policy: expert or random");
  collect->add_option("--suite", suite_name, "Categories joined by '+', e.g. trap+cluttered");

  auto* toff = app.add_subcommand("train-offline", "Stage 1: train a transformer policy on a trajectory file");
  add_common(toff, common);
  toff->add_option("-d,--data", data, "Trajectory file")->required()->check(CLI::ExistingFile);
  toff->add_option("-o,--out", out, "Checkpoint to write")->required();
  toff->add_option("--log", log_path, "Training log CSV");

  auto* ton = app.add_subcommand("train-online", "Stage 2: fine-tune a checkpoint with its own rollouts");
  add_common(ton, common);
  ton->add_option("--checkpoint", checkpoint, "Stage 1 checkpoint")->required()->check(CLI::ExistingFile);
  ton->add_option("-d,--data", data, "Initial buffer contents")->required()->check(CLI::ExistingFile);
  ton->add_option("-o,--out", out, "Checkpoint to write")->required();
  ton->add_option("--log", log_path, "Training log CSV");
  ton->add_option("--suite", suite_name, "Categories joined by '+'");

  auto* trf = app.add_subcommand("train-reinforce", "Train the Markovian REINFORCE baseline");
  add_common(trf, common);
  trf->add_option("-o,--out", out, "Checkpoint to write")->required();
  trf->add_option("--log", log_path, "Training log CSV");
  trf->add_option("--suite", suite_name, "Categories joined by '+'");

  auto* eval = app.add_subcommand("eval", "Evaluate a policy on the benchmark starts");
  add_common(eval, common);
  eval->add_option("--policy", policy_kind, "expert, random, oracle, dt or reinforce");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint for learned policies");
  eval->add_option("--suite", suite_name, "Categories joined by '+'");
  eval->add_option("--results", results_path, "Per-episode CSV");
  eval->add_option("--summary", summary_path, "Metrics summary JSON");

  auto* ablate = app.add_subcommand("ablate", "Train and evaluate one policy per observation channel set");
  add_common(ablate, common);
  ablate->add_option("--suite", suite_name, "Categories joined by '+'");
  ablate->add_flag("--online", online, "Run Stage 2 for every channel set");
  ablate->add_option("--summary", summary_path, "Metrics summary JSON");

  auto* oracle = app.add_subcommand("oracle", "Exact optimal episode reward of every evaluation start");
  add_common(oracle, common);
  oracle->add_option("-o,--out", out, "Output CSV (default: standard output)");
  oracle->add_option("--suite", suite_name, "Categories joined by '+'");

  auto* replay = app.add_subcommand("replay", "Print the pose, action and reward trace of one episode");
  add_common(replay, common);
  replay->add_option("--scene", scene_id, "Scene id such as trap-1234")->required();
  replay->add_option("--start", start_str, "Start pose x,y,heading (default: first evaluation start)");
  replay->add_option("--policy", policy_kind, "expert, random, oracle, dt or reinforce");
  replay->add_option("--checkpoint", checkpoint, "Checkpoint for learned policies");

  CLI11_PARSE(app, argc, argv);

  try {
    const RunConfig cfg = load(common);
    const RolloutOptions ro = rollout_options(cfg);
    Rng rng(derive_seed(cfg.seed, 0xc11));

    if (*gen) {
      const BenchmarkSuite suite = make_suite(cfg);
      fs::create_directories(out);
      std::ofstream pools(fs::path(out) / "pools.csv");
      pools << "scene,x,y,heading,eval_start\n";
      for (const auto& list : suite.scenes) {
        for (const auto& s : list) {
          const std::string id = s.scene->scene().id();
          write_file((fs::path(out) / (id + ".json")).string(), scene_to_json(s.scene->scene()));
          for (const Pose& p : s.pool) {
            const bool ev = std::find(s.eval_starts.begin(), s.eval_starts.end(), p) != s.eval_starts.end();
            pools << id << ',' << p.x << ',' << p.y << ',' << p.heading << ',' << (ev ? 1 : 0) << '\n';
          }
        }
      }
      std::cout << "wrote " << suite.total_eval_starts() << " evaluation starts to " << out << "\n";
    } else if (*collect) {
      const BenchmarkSuite suite = make_suite(cfg);
      const auto cats = suite_name.empty() ? cfg.categories : parse_suite(suite_name, cfg);
      const auto scenes = training_scenes(suite, cats);
      const auto lp = make_policy(policy_kind, "", cfg);
      const int n = count > 0 ? count : cfg.training.offline.n_trajectories;
      save_trajectories(out, collect_trajectories(*lp->policy, scenes, n, ro, rng));
    } else if (*toff) {
      ReplayBuffer buffer = buffer_from(load_trajectories(data), cfg);
      DecisionTransformer model(cfg.dt, derive_seed(cfg.seed, 0x1d));
      const TrainingLog log = offline_stage(model, buffer, cfg.training, rng);
      write_file(out, model.to_json());
      if (!log_path.empty()) write_file(log_path, log.to_csv());
    } else if (*ton) {
      const BenchmarkSuite suite = make_suite(cfg);
      const auto cats = parse_suite(suite_name, cfg);
      const auto scenes = training_scenes(suite, cats);
      const auto specs = evaluation_specs(suite, cats);
      ReplayBuffer buffer = buffer_from(load_trajectories(data), cfg);
      DecisionTransformer model = DecisionTransformer::from_json(read_file(checkpoint));
      const TrainingLog log = online_stage(model, buffer, scenes, specs, cfg.training, rng);
      write_file(out, model.to_json());
      if (!log_path.empty()) write_file(log_path, log.to_csv());
    } else if (*trf) {
      const BenchmarkSuite suite = make_suite(cfg);
      const auto scenes = training_scenes(suite, parse_suite(suite_name, cfg));
      const ReinforceResult res = reinforce_baseline(scenes, cfg.training, cfg.dt.obs_dim, rng);
      write_file(out, res.net.to_json());
      if (!log_path.empty()) write_file(log_path, res.log.to_csv());
    } else if (*eval) {
      const BenchmarkSuite suite = make_suite(cfg);
      const auto specs = evaluation_specs(suite, parse_suite(suite_name, cfg));
      const auto lp = make_policy(policy_kind, checkpoint, cfg);
      const auto results = evaluate_policy(*lp->policy, specs, ro, rng);
      const auto summaries = summarize_by_category(results, cfg.training.horizon);
      if (!results_path.empty()) write_file(results_path, results_csv(results));
      if (!summary_path.empty()) write_file(summary_path, summaries_json(summaries));
      std::cout << summaries_csv(summaries);
    } else if (*ablate) {
      const BenchmarkSuite suite = make_suite(cfg);
      const auto cats = parse_suite(suite_name, cfg);
      const auto scenes = training_scenes(suite, cats);
      const auto specs = evaluation_specs(suite, cats);
      std::vector<MetricsSummary> all;
      const ChannelMask masks[] = {ChannelMask::none(), ChannelMask{false, true}, ChannelMask{true, false},
                                   ChannelMask::all()};
      for (const ChannelMask m : masks) {
        RunConfig mc = cfg;
        mc.training.mask = m;
        mc.eval.mask = m;
        const ExpertPolicy expert;
        const DTRun run = run_dt_training(mc, expert, scenes, {}, online, 0xab1a);
        const DTPolicy policy(run.final, ActOptions{}, mask_label(m));
        Rng erng(derive_seed(cfg.seed, 0xe7a1));
        const auto results = evaluate_policy(policy, specs, rollout_options(mc), erng);
        MetricsSummary s = summarize(results, cfg.training.horizon);
        s.category = "all";
        all.push_back(s);
      }
      if (!summary_path.empty()) write_file(summary_path, summaries_json(all));
      std::cout << summaries_csv(all);
    } else if (*oracle) {
      const BenchmarkSuite suite = make_suite(cfg);
      std::ostringstream os;
      os << "scene,category,x,y,heading,oracle_value\n";
      for (Category c : parse_suite(suite_name, cfg)) {
        for (const auto& s : suite.of(c)) {
          const OracleTable table(*s.scene, cfg.training.horizon);
          for (const Pose& p : s.eval_starts) {
            std::ostringstream v;
            v.precision(17);
            v << table.value(p);
            os << s.scene->scene().id() << ',' << category_name(c) << ',' << p.x << ',' << p.y << ',' << p.heading
               << ',' << v.str() << '\n';
          }
        }
      }
      if (out.empty()) std::cout << os.str();
      else write_file(out, os.str());
    } else if (*replay) {
      const BenchmarkSuite suite = make_suite(cfg);
      const SuiteScene* found = nullptr;
      for (const auto& list : suite.scenes) {
        for (const auto& s : list) {
          if (s.scene->scene().id() == scene_id) found = &s;
        }
      }
      if (found == nullptr) throw ConfigError("--scene: no scene with id '" + scene_id + "'");
      Pose start = found->eval_starts.front();
      if (!start_str.empty()) {
        char c1 = 0, c2 = 0;
        std::istringstream ss(start_str);
        if (!(ss >> start.x >> c1 >> start.y >> c2 >> start.heading) || c1 != ',' || c2 != ',') {
          throw ConfigError("--start: expected x,y,heading");
        }
      }
      const auto lp = make_policy(policy_kind, checkpoint, cfg);
      const EpisodeSpec spec{found->scene, start};
      const Episode ep = run_episodes(*lp->policy, std::span(&spec, 1), ro, rng).front();
      std::cout << "scene " << scene_id << " policy " << lp->policy->name() << "\n";
      std::cout << "t  pose        action      reward\n";
      for (std::size_t t = 0; t < ep.trajectory.steps(); ++t) {
        std::cout << t << "  " << pose_str(ep.poses[t]) << "  " << action_name(action_from_int(ep.trajectory.actions[t]))
                  << "  " << ep.trajectory.rewards[t] << "\n";
      }
      std::cout << "final " << pose_str(ep.poses.back()) << " episode reward " << ep.trajectory.total_reward() << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
