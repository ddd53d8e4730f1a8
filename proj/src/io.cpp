#include "activedt/io.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "activedt/error.hpp"

namespace adt {

using nlohmann::json;

namespace {

json parse(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string(what) + " is not valid JSON: " + e.what());
  }
}

void check_version(const json& j, const char* what) {
  if (!j.is_object() || !j.contains("version") || j["version"] != kFormatVersion) {
    throw FormatError(std::string("unsupported ") + what + " version");
  }
}

json detector_json(const DetectorParams& p) {
  return {{"fov_deg", p.fov_deg},       {"d_min", p.d_min},           {"d_lo", p.d_lo},
          {"d_hi", p.d_hi},             {"d_max", p.d_max},           {"n_samples", p.n_samples},
          {"img_w", p.img_w},           {"img_h", p.img_h},           {"bbox_scale", p.bbox_scale},
          {"noise_std", p.noise_std},   {"noise_seed", p.noise_seed}, {"n_rays", p.n_rays},
          {"max_range", p.max_range}};
}

// Reads the keys present in `j` into `p`; unknown keys are an error.
void read_detector(const json& j, DetectorParams& p, const std::string& where) {
  for (const auto& [k, v] : j.items()) {
    if (k == "fov_deg") p.fov_deg = v.get<double>();
    else if (k == "d_min") p.d_min = v.get<double>();
    else if (k == "d_lo") p.d_lo = v.get<double>();
    else if (k == "d_hi") p.d_hi = v.get<double>();
    else if (k == "d_max") p.d_max = v.get<double>();
    else if (k == "n_samples") p.n_samples = v.get<int>();
    else if (k == "img_w") p.img_w = v.get<double>();
    else if (k == "img_h") p.img_h = v.get<double>();
    else if (k == "bbox_scale") p.bbox_scale = v.get<double>();
    else if (k == "noise_std") p.noise_std = v.get<double>();
    else if (k == "noise_seed") p.noise_seed = v.get<std::uint64_t>();
    else if (k == "n_rays") p.n_rays = v.get<int>();
    else if (k == "max_range") p.max_range = v.get<double>();
    else throw ConfigError("unknown key " + where + "." + k);
  }
}

json pose_json(const Pose& p) { return json::array({p.x, p.y, p.heading}); }

Pose pose_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw FormatError("pose must be [x, y, heading]");
  return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>()};
}

Category category_from(const json& j, const std::string& where) {
  const auto c = category_from_name(j.get<std::string>());
  if (!c) throw ConfigError(where + ": unknown category '" + j.get<std::string>() + "'");
  return *c;
}

std::vector<Category> categories_from(const json& j, const std::string& where) {
  std::vector<Category> out;
  for (const auto& c : j) out.push_back(category_from(c, where));
  if (out.empty()) throw ConfigError(where + ": at least one category is required");
  return out;
}

json categories_json(const std::vector<Category>& cats) {
  json a = json::array();
  for (Category c : cats) a.push_back(std::string(category_name(c)));
  return a;
}

template <typename F>
void for_keys(const json& j, const std::string& where, F&& handle) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    if (!handle(k, v)) throw ConfigError("unknown key " + where + "." + k);
  }
}

}  // namespace

std::string scene_to_json(const Scene& scene) {
  json rle = json::array();
  const auto& cells = scene.grid.cells();
  for (std::size_t i = 0; i < cells.size();) {
    std::size_t j = i;
    while (j < cells.size() && cells[j] == cells[i]) ++j;
    rle.push_back({static_cast<int>(cells[i]), j - i});
    i = j;
  }
  json j;
  j["version"] = kFormatVersion;
  j["category"] = std::string(category_name(scene.category));
  j["seed"] = scene.seed;
  j["grid"] = {{"w", scene.grid.width()},
               {"h", scene.grid.height()},
               {"cell_size", scene.grid.cell_size()},
               {"rle_cells", rle}};
  j["object"] = {{"cx", scene.object.center.x},
                 {"cy", scene.object.center.y},
                 {"radius", scene.object.radius},
                 {"aspect", scene.object.aspect},
                 {"id", scene.object.id}};
  j["detector_params"] = detector_json(scene.detector);
  if (scene.canonical_start) j["canonical_start"] = pose_json(*scene.canonical_start);
  return j.dump();
}

Scene scene_from_json(const std::string& text) {
  const json j = parse(text, "scene file");
  check_version(j, "scene file");
  try {
    Scene s;
    const auto cat = category_from_name(j.at("category").get<std::string>());
    if (!cat) throw FormatError("unknown scene category");
    s.category = *cat;
    s.seed = j.at("seed").get<std::uint64_t>();
    const json& g = j.at("grid");
    const int w = g.at("w").get<int>(), h = g.at("h").get<int>();
    std::vector<Cell> cells;
    for (const auto& run : g.at("rle_cells")) {
      const int v = run.at(0).get<int>();
      if (v != 0 && v != 1) throw FormatError("cell value must be 0 or 1");
      cells.insert(cells.end(), run.at(1).get<std::size_t>(), static_cast<Cell>(v));
    }
    if (cells.size() != static_cast<std::size_t>(w) * static_cast<std::size_t>(h)) {
      throw FormatError("cell runs do not cover the grid");
    }
    s.grid = OccupancyGrid(w, h, g.at("cell_size").get<double>(), std::move(cells));
    const json& o = j.at("object");
    s.object.center = {o.at("cx").get<double>(), o.at("cy").get<double>()};
    s.object.radius = o.at("radius").get<double>();
    s.object.aspect = o.at("aspect").get<double>();
    s.object.id = o.at("id").get<int>();
    read_detector(j.at("detector_params"), s.detector, "detector_params");
    s.detector.validate();
    if (j.contains("canonical_start")) s.canonical_start = pose_from(j["canonical_start"]);
    return s;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed scene file: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("malformed scene file: ") + e.what());
  }
}

std::string detector_to_json(const DetectorParams& params) { return detector_json(params).dump(); }

DetectorParams detector_from_json(const std::string& text) {
  DetectorParams p;
  read_detector(parse(text, "detector"), p, "detector");
  p.validate();
  return p;
}

std::string trajectory_to_json(const Trajectory& traj) {
  traj.validate();
  json steps = json::array();
  for (std::size_t t = 0; t < traj.steps(); ++t) {
    steps.push_back({{"obs", traj.obs[t]}, {"action", traj.actions[t]}, {"reward", traj.rewards[t]}});
  }
  json j;
  j["scene_ref"] = traj.scene_ref;
  j["init_pose"] = pose_json(traj.init_pose);
  j["steps"] = std::move(steps);
  j["rtg_0"] = traj.rtg.empty() ? 0.0 : traj.rtg.front();
  return j.dump();
}

Trajectory trajectory_from_json(const std::string& line) {
  const json j = parse(line, "trajectory record");
  try {
    Trajectory t;
    t.scene_ref = j.at("scene_ref").get<std::string>();
    t.init_pose = pose_from(j.at("init_pose"));
    for (const auto& s : j.at("steps")) {
      t.obs.push_back(s.at("obs").get<std::vector<double>>());
      const int a = s.at("action").get<int>();
      if (a < 0 || a >= kNumActions) throw FormatError("action code out of range");
      t.actions.push_back(a);
      t.rewards.push_back(s.at("reward").get<double>());
    }
    double r = j.at("rtg_0").get<double>();
    for (double reward : t.rewards) {
      t.rtg.push_back(r);
      r -= reward;
    }
    return t;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed trajectory record: ") + e.what());
  }
}

void write_trajectories(std::ostream& out, const std::vector<Trajectory>& trajs) {
  for (const auto& t : trajs) out << trajectory_to_json(t) << '\n';
}

std::vector<Trajectory> read_trajectories(std::istream& in) {
  std::vector<Trajectory> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(trajectory_from_json(line));
  }
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
  if (!out) throw std::runtime_error("failed writing " + path);
}

void RunConfig::finalize() {
  scenes.seed = seed;
  training.seed = seed;
  scenes.generate.horizon = training.horizon;
  dt.obs_dim = observation_dim(scenes.generate.detector.n_rays);
  dt.max_timestep = training.horizon;
  if (dt.context_len > training.horizon) throw ConfigError("dt.context_len: exceeds training.horizon");
  try {
    scenes.generate.detector.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("detector: ") + e.what());
  }
  try {
    dt.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("dt: ") + e.what());
  }
  training.validate();
  if (scenes.scenes_per_category < 1) throw ConfigError("scenes.scenes_per_category: must be >= 1");
  if (scenes.starts_per_scene < 1) throw ConfigError("scenes.starts_per_scene: must be >= 1");
  for (Category c : eval.categories) {
    if (std::find(categories.begin(), categories.end(), c) == categories.end()) {
      throw ConfigError("eval.categories: '" + std::string(category_name(c)) + "' is not in scenes.categories");
    }
  }
}

RunConfig config_from_json(const std::string& text) {
  const json j = parse(text, "config");
  check_version(j, "config");
  RunConfig c;
  bool has_seed = false;
  try {
    for_keys(j, "config", [&](const std::string& k, const json& v) {
      if (k == "version") return true;
      if (k == "seed") {
        c.seed = v.get<std::uint64_t>();
        has_seed = true;
        return true;
      }
      if (k == "scenes") {
        for_keys(v, "scenes", [&](const std::string& sk, const json& sv) {
          auto& so = c.scenes;
          if (sk == "scenes_per_category") so.scenes_per_category = sv.get<int>();
          else if (sk == "starts_per_scene") so.starts_per_scene = sv.get<int>();
          else if (sk == "width") so.generate.width = sv.get<int>();
          else if (sk == "height") so.generate.height = sv.get<int>();
          else if (sk == "cell_size") so.generate.cell_size = sv.get<double>();
          else if (sk == "max_attempts") so.generate.max_attempts = sv.get<int>();
          else if (sk == "categories") c.categories = categories_from(sv, "scenes.categories");
          else if (sk == "rules") {
            for_keys(sv, "scenes.rules", [&](const std::string& rk, const json& rv) {
              if (rk == "max_score") so.rules.max_score = rv.get<double>();
              else if (rk == "min_bbox_area") so.rules.min_bbox_area = rv.get<double>();
              else if (rk == "min_distance") so.rules.min_distance = rv.get<double>();
              else return false;
              return true;
            });
          } else return false;
          return true;
        });
        return true;
      }
      if (k == "detector") {
        read_detector(v, c.scenes.generate.detector, "detector");
        return true;
      }
      if (k == "dt") {
        for_keys(v, "dt", [&](const std::string& dk, const json& dv) {
          if (dk == "embed_dim") c.dt.embed_dim = dv.get<int>();
          else if (dk == "n_layers") c.dt.n_layers = dv.get<int>();
          else if (dk == "n_heads") c.dt.n_heads = dv.get<int>();
          else if (dk == "context_len") c.dt.context_len = dv.get<int>();
          else if (dk == "rtg_scale") c.dt.rtg_scale = dv.get<double>();
          else if (dk == "init_std") c.dt.init_std = dv.get<double>();
          else return false;
          return true;
        });
        return true;
      }
      if (k == "training") {
        auto& t = c.training;
        for_keys(v, "training", [&](const std::string& tk, const json& tv) {
          if (tk == "horizon") t.horizon = tv.get<int>();
          else if (tk == "buffer_capacity") t.buffer_capacity = tv.get<int>();
          else if (tk == "clip_norm") t.clip_norm = tv.get<double>();
          else if (tk == "offline") {
            for_keys(tv, "training.offline", [&](const std::string& ok, const json& ov) {
              auto& o = t.offline;
              if (ok == "n_trajectories") o.n_trajectories = ov.get<int>();
              else if (ok == "epochs") o.epochs = ov.get<int>();
              else if (ok == "batch_size") o.batch_size = ov.get<int>();
              else if (ok == "lr") o.lr = ov.get<double>();
              else if (ok == "lambda") o.lambda = ov.get<double>();
              else return false;
              return true;
            });
          } else if (tk == "online") {
            for_keys(tv, "training.online", [&](const std::string& ok, const json& ov) {
              auto& o = t.online;
              if (ok == "episodes_per_round") o.episodes_per_round = ov.get<int>();
              else if (ok == "rounds") o.rounds = ov.get<int>();
              else if (ok == "train_steps_per_round") o.train_steps_per_round = ov.get<int>();
              else if (ok == "batch_size") o.batch_size = ov.get<int>();
              else if (ok == "lr") o.lr = ov.get<double>();
              else if (ok == "lambda") o.lambda = ov.get<double>();
              else if (ok == "temperature") o.temperature = ov.get<double>();
              else if (ok == "eval_every") o.eval_every = ov.get<int>();
              else if (ok == "early_stop") o.early_stop = ov.get<bool>();
              else if (ok == "plateau_delta") o.plateau_delta = ov.get<double>();
              else if (ok == "plateau_rounds") o.plateau_rounds = ov.get<int>();
              else return false;
              return true;
            });
          } else if (tk == "reinforce") {
            for_keys(tv, "training.reinforce", [&](const std::string& rk, const json& rv) {
              auto& r = t.reinforce;
              if (rk == "hidden") r.hidden = rv.get<int>();
              else if (rk == "iterations") r.iterations = rv.get<int>();
              else if (rk == "episodes_per_iteration") r.episodes_per_iteration = rv.get<int>();
              else if (rk == "lr") r.lr = rv.get<double>();
              else if (rk == "temperature") r.temperature = rv.get<double>();
              else return false;
              return true;
            });
          } else return false;
          return true;
        });
        return true;
      }
      if (k == "eval") {
        for_keys(v, "eval", [&](const std::string& ek, const json& ev) {
          if (ek == "categories") c.eval.categories = categories_from(ev, "eval.categories");
          else if (ek == "mask") {
            const auto m = mask_from_name(ev.get<std::string>());
            if (!m) throw ConfigError("eval.mask: unknown channel set '" + ev.get<std::string>() + "'");
            c.eval.mask = *m;
          } else if (ek == "target_return") c.eval.target_return = ev.get<double>();
          else return false;
          return true;
        });
        return true;
      }
      return false;
    });
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config value has the wrong type: ") + e.what());
  }
  if (!has_seed) {
    if (const char* env = std::getenv("ACTIVE_DT_SEED")) {
      try {
        c.seed = std::stoull(env);
      } catch (const std::exception&) {
        throw ConfigError(std::string("ACTIVE_DT_SEED is not an unsigned integer: ") + env);
      }
    }
  }
  c.training.mask = c.eval.mask;
  c.finalize();
  return c;
}

std::string config_to_json(const RunConfig& c) {
  const auto& so = c.scenes;
  const auto& t = c.training;
  json j;
  j["version"] = kFormatVersion;
  j["seed"] = c.seed;
  j["scenes"] = {{"scenes_per_category", so.scenes_per_category},
                 {"starts_per_scene", so.starts_per_scene},
                 {"width", so.generate.width},
                 {"height", so.generate.height},
                 {"cell_size", so.generate.cell_size},
                 {"max_attempts", so.generate.max_attempts},
                 {"categories", categories_json(c.categories)},
                 {"rules",
                  {{"max_score", so.rules.max_score},
                   {"min_bbox_area", so.rules.min_bbox_area},
                   {"min_distance", so.rules.min_distance}}}};
  j["detector"] = detector_json(so.generate.detector);
  j["dt"] = {{"embed_dim", c.dt.embed_dim}, {"n_layers", c.dt.n_layers}, {"n_heads", c.dt.n_heads},
             {"context_len", c.dt.context_len}, {"rtg_scale", c.dt.rtg_scale}, {"init_std", c.dt.init_std}};
  j["training"] = {
      {"horizon", t.horizon},
      {"buffer_capacity", t.buffer_capacity},
      {"clip_norm", t.clip_norm},
      {"offline",
       {{"n_trajectories", t.offline.n_trajectories},
        {"epochs", t.offline.epochs},
        {"batch_size", t.offline.batch_size},
        {"lr", t.offline.lr},
        {"lambda", t.offline.lambda}}},
      {"online",
       {{"episodes_per_round", t.online.episodes_per_round},
        {"rounds", t.online.rounds},
        {"train_steps_per_round", t.online.train_steps_per_round},
        {"batch_size", t.online.batch_size},
        {"lr", t.online.lr},
        {"lambda", t.online.lambda},
        {"temperature", t.online.temperature},
        {"eval_every", t.online.eval_every},
        {"early_stop", t.online.early_stop},
        {"plateau_delta", t.online.plateau_delta},
        {"plateau_rounds", t.online.plateau_rounds}}},
      {"reinforce",
       {{"hidden", t.reinforce.hidden},
        {"iterations", t.reinforce.iterations},
        {"episodes_per_iteration", t.reinforce.episodes_per_iteration},
        {"lr", t.reinforce.lr},
        {"temperature", t.reinforce.temperature}}}};
  j["eval"] = {{"categories", categories_json(c.eval.categories)}, {"mask", mask_name(c.eval.mask)}};
  if (c.eval.target_return) j["eval"]["target_return"] = *c.eval.target_return;
  return j.dump(2);
}

}  // namespace adt
