#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "activedt/error.hpp"
#include "activedt/pipeline.hpp"

namespace py = pybind11;
using namespace adt;

namespace {

std::vector<EpisodeResult> evaluate(const std::string& policy, const BenchmarkSuite& suite,
                                    const std::vector<Category>& categories, int horizon, std::uint64_t seed,
                                    const DecisionTransformer* model) {
  std::unique_ptr<Policy> p;
  if (policy == "expert") p = std::make_unique<ExpertPolicy>();
  else if (policy == "random") p = std::make_unique<RandomPolicy>();
  else if (policy == "oracle") p = std::make_unique<OraclePolicy>(horizon);
  else if (policy == "dt" && model != nullptr) p = std::make_unique<DTPolicy>(*model, ActOptions{});
  else throw std::invalid_argument("unknown policy '" + policy + "'");
  RolloutOptions ro;
  ro.horizon = horizon;
  Rng rng(seed);
  return evaluate_policy(*p, evaluation_specs(suite, categories), ro, rng);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Grid-world active object detection with a return-conditioned transformer policy";
  m.attr("__version__") = "0.1.0";

  py::register_exception<FormatError>(m, "FormatError");
  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<InvalidPose>(m, "InvalidPose");
  py::register_exception<EmptyBuffer>(m, "EmptyBuffer");
  py::register_exception<FeasibilityError>(m, "FeasibilityError");

  py::enum_<Action>(m, "Action")
      .value("MoveNorth", Action::MoveNorth)
      .value("MoveSouth", Action::MoveSouth)
      .value("MoveWest", Action::MoveWest)
      .value("MoveEast", Action::MoveEast)
      .value("RotateCCW", Action::RotateCCW)
      .value("RotateCW", Action::RotateCW)
      .value("Stop", Action::Stop);

  py::enum_<Category>(m, "Category")
      .value("Open", Category::Open)
      .value("Sparse", Category::Sparse)
      .value("Cluttered", Category::Cluttered)
      .value("Trap", Category::Trap);

  py::class_<Pose>(m, "Pose")
      .def(py::init<int, int, int>(), py::arg("x"), py::arg("y"), py::arg("heading"))
      .def_readwrite("x", &Pose::x)
      .def_readwrite("y", &Pose::y)
      .def_readwrite("heading", &Pose::heading)
      .def("__eq__", [](const Pose& a, const Pose& b) { return a == b; })
      .def("__repr__", [](const Pose& p) {
        return "Pose(" + std::to_string(p.x) + ", " + std::to_string(p.y) + ", " + std::to_string(p.heading) + ")";
      });

  py::class_<ChannelMask>(m, "ChannelMask")
      .def(py::init<bool, bool>(), py::arg("rgb") = true, py::arg("depth") = true)
      .def_readwrite("rgb", &ChannelMask::rgb)
      .def_readwrite("depth", &ChannelMask::depth)
      .def_property_readonly("label", [](const ChannelMask& c) { return mask_label(c); });

  py::class_<Detection>(m, "Detection")
      .def_readonly("score", &Detection::score)
      .def_property_readonly("bbox", [](const Detection& d) -> py::object {
        if (!d.bbox) return py::none();
        return py::make_tuple(d.bbox->cx, d.bbox->cy, d.bbox->w, d.bbox->h);
      });

  py::class_<Scene>(m, "Scene")
      .def_property_readonly("id", &Scene::id)
      .def_readonly("category", &Scene::category)
      .def_readonly("seed", &Scene::seed)
      .def_property_readonly("width", [](const Scene& s) { return s.grid.width(); })
      .def_property_readonly("height", [](const Scene& s) { return s.grid.height(); })
      .def("is_obstacle", [](const Scene& s, int x, int y) { return s.grid.is_obstacle(x, y); })
      .def("to_json", &scene_to_json)
      .def_static("from_json", &scene_from_json);

  m.def("generate_scene", [](Category c, std::uint64_t seed) { return generate_scene(c, seed); },
        py::arg("category"), py::arg("seed"));
  m.def("detect", [](const Scene& s, const Pose& p) { return detect(p, s); });
  m.def("observe", [](const Scene& s, const Pose& p, const ChannelMask& mask) { return observe(p, s, mask).flatten(); },
        py::arg("scene"), py::arg("pose"), py::arg("mask") = ChannelMask::all());
  m.def("observation_dim", &observation_dim, py::arg("n_rays") = 11);

  py::class_<StepOutcome>(m, "StepOutcome")
      .def_readonly("next_pose", &StepOutcome::next_pose)
      .def_readonly("reward", &StepOutcome::reward)
      .def_readonly("stopped", &StepOutcome::stopped);
  m.def("step", [](const Scene& s, const Pose& p, Action a, bool stopped) { return step(p, a, s, stopped); },
        py::arg("scene"), py::arg("pose"), py::arg("action"), py::arg("stopped") = false);
  m.def("expert_action", [](const Scene& s, const Pose& p) { return expert_action(p, s); });
  m.def("select_initial_poses", [](const Scene& s) { return select_initial_poses(s); });
  m.def(
      "oracle_plan",
      [](const Scene& s, const Pose& p, int horizon) {
        const OraclePlan plan = oracle_plan(p, s, horizon);
        return py::make_tuple(plan.value, plan.actions);
      },
      py::arg("scene"), py::arg("start"), py::arg("horizon") = 10);

  m.def("compute_rtg", [](const std::vector<double>& r) { return compute_rtg(r); });

  py::class_<Trajectory>(m, "Trajectory")
      .def(py::init<>())
      .def_readwrite("scene_ref", &Trajectory::scene_ref)
      .def_readwrite("init_pose", &Trajectory::init_pose)
      .def_readwrite("obs", &Trajectory::obs)
      .def_readwrite("actions", &Trajectory::actions)
      .def_readwrite("rewards", &Trajectory::rewards)
      .def_readwrite("rtg", &Trajectory::rtg)
      .def("to_json", &trajectory_to_json)
      .def_static("from_json", &trajectory_from_json);
  m.def("hindsight_relabel", &hindsight_relabel);

  py::class_<ReplayBuffer>(m, "ReplayBuffer")
      .def(py::init<std::size_t>(), py::arg("capacity") = 1000)
      .def("push", &ReplayBuffer::push)
      .def("__len__", &ReplayBuffer::size)
      .def("variance", &ReplayBuffer::variance)
      .def("probabilities", &ReplayBuffer::probabilities)
      .def("sample_indices", [](const ReplayBuffer& b, std::size_t n, std::uint64_t seed) {
        Rng rng(seed);
        return b.sample_indices(n, rng);
      });

  py::class_<DTConfig>(m, "DTConfig")
      .def(py::init<>())
      .def_readwrite("embed_dim", &DTConfig::embed_dim)
      .def_readwrite("n_layers", &DTConfig::n_layers)
      .def_readwrite("n_heads", &DTConfig::n_heads)
      .def_readwrite("context_len", &DTConfig::context_len)
      .def_readwrite("obs_dim", &DTConfig::obs_dim)
      .def_readwrite("max_timestep", &DTConfig::max_timestep);

  py::class_<DecisionTransformer>(m, "DecisionTransformer")
      .def(py::init<DTConfig, std::uint64_t>(), py::arg("config"), py::arg("seed") = 0)
      .def_property_readonly("config", &DecisionTransformer::config)
      .def("parameter_count", [](const DecisionTransformer& d) { return ad::parameter_count(d.params()); })
      .def(
          "action_logits",
          [](const DecisionTransformer& d, const std::vector<double>& rtg, const std::vector<std::vector<double>>& obs,
             const std::vector<int>& actions) {
            TokenizedTrajectory t{rtg, obs, actions, {}};
            for (std::size_t i = 0; i < obs.size(); ++i) t.timesteps.push_back(static_cast<int>(i));
            return d.next_action_logits(std::span(&t, 1)).front();
          },
          py::arg("rtg"), py::arg("obs"), py::arg("actions"))
      .def("loss",
           [](const DecisionTransformer& d, const std::vector<Trajectory>& batch, double lambda) {
             std::vector<TokenizedTrajectory> toks;
             for (const auto& t : batch) toks.push_back(t.tokenize());
             const LossReport r = d.evaluate_loss(toks, lambda);
             return py::dict(py::arg("ce") = r.ce, py::arg("entropy") = r.entropy, py::arg("total") = r.total);
           })
      .def("to_json", &DecisionTransformer::to_json)
      .def_static("from_json", &DecisionTransformer::from_json);

  py::class_<BenchmarkSuite>(m, "BenchmarkSuite")
      .def_property_readonly("total_eval_starts", &BenchmarkSuite::total_eval_starts)
      .def("scenes", [](const BenchmarkSuite& s, Category c) {
        std::vector<Scene> out;
        for (const auto& e : s.of(c)) out.push_back(e.scene->scene());
        return out;
      });
  m.def(
      "build_suite",
      [](std::uint64_t seed, int scenes_per_category, int starts_per_scene, std::vector<Category> categories) {
        SuiteOptions so;
        so.seed = seed;
        so.scenes_per_category = scenes_per_category;
        so.starts_per_scene = starts_per_scene;
        return build_suite(so, categories);
      },
      py::arg("seed") = 0, py::arg("scenes_per_category") = 25, py::arg("starts_per_scene") = 16,
      py::arg("categories") = std::vector<Category>(kAllCategories.begin(), kAllCategories.end()));

  py::class_<MetricsSummary>(m, "MetricsSummary")
      .def_readonly("policy", &MetricsSummary::policy)
      .def_readonly("category", &MetricsSummary::category)
      .def_readonly("episodes", &MetricsSummary::episodes)
      .def_readonly("mean_reward", &MetricsSummary::mean_reward)
      .def_readonly("std_reward", &MetricsSummary::std_reward)
      .def_readonly("failure_rate", &MetricsSummary::failure_rate)
      .def_readonly("histogram", &MetricsSummary::histogram)
      .def_readonly("oracle_ratio", &MetricsSummary::oracle_ratio);

  m.def(
      "evaluate",
      [](const std::string& policy, const BenchmarkSuite& suite, std::vector<Category> categories, int horizon,
         std::uint64_t seed, const DecisionTransformer* model) {
        const auto results = evaluate(policy, suite, categories, horizon, seed, model);
        return summarize_by_category(results, horizon);
      },
      py::arg("policy"), py::arg("suite"), py::arg("categories"), py::arg("horizon") = 10, py::arg("seed") = 0,
      py::arg("model") = nullptr);

  m.def("summarize_rewards", [](const std::vector<double>& rewards, int horizon) {
    std::vector<EpisodeResult> rs(rewards.size());
    for (std::size_t i = 0; i < rewards.size(); ++i) {
      rs[i].reward = rewards[i];
      rs[i].policy = "input";
    }
    return summarize(rs, horizon);
  }, py::arg("rewards"), py::arg("horizon") = 10);

  m.def("config_json", [](const std::string& text) { return config_to_json(config_from_json(text)); },
        "Parses a run configuration and returns it with every default filled in.");
}
