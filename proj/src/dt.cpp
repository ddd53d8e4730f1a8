#include "activedt/dt.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "activedt/error.hpp"

namespace adt {

namespace {

constexpr double kMaskValue = -1e9;

std::string block_name(int layer, const char* leaf) { return "block" + std::to_string(layer) + "." + leaf; }

ad::Param normal_param(ad::Shape shape, double stddev, Rng& rng) {
  ad::Param p{std::move(shape), {}};
  p.values.resize(ad::numel(p.shape));
  for (double& v : p.values) v = rng.normal(0.0, stddev);
  return p;
}

ad::Param filled_param(ad::Shape shape, double value) {
  ad::Param p{std::move(shape), {}};
  p.values.assign(ad::numel(p.shape), value);
  return p;
}

struct Layout {
  int batch = 0;
  int length = 0;                // padded token count per sequence
  std::vector<double> rtg;       // one per rtg token, already scaled
  std::vector<double> obs;       // flattened observation tokens
  std::vector<int> actions;      // one per action token
  std::vector<int> gather;       // per (b, l): row of the token table
  std::vector<int> timestep;     // per (b, l)
  std::vector<std::uint8_t> mask;  // per (b, query, key)
  std::vector<int> obs_slots;    // flat (b * length + l) of each observation token
  std::vector<std::pair<int, int>> rows;
};

Layout build_layout(std::span<const TokenizedTrajectory> batch, const DTConfig& cfg) {
  Layout lay;
  lay.batch = static_cast<int>(batch.size());
  for (const auto& tr : batch) lay.length = std::max(lay.length, static_cast<int>(tr.token_count()));
  std::size_t n_rtg = 0, n_obs = 0, n_act = 0;
  for (const auto& tr : batch) {
    n_rtg += tr.steps();
    n_obs += tr.steps();
    n_act += tr.actions.size();
  }
  const int rtg_base = 0;
  const int obs_base = static_cast<int>(n_rtg);
  const int act_base = obs_base + static_cast<int>(n_obs);
  const int pad_row = act_base + static_cast<int>(n_act);

  const std::size_t cells = static_cast<std::size_t>(lay.batch) * lay.length;
  lay.gather.assign(cells, pad_row);
  lay.timestep.assign(cells, 0);
  std::vector<std::uint8_t> valid(cells, 0);
  int r_next = rtg_base, o_next = obs_base, a_next = act_base;
  for (int b = 0; b < lay.batch; ++b) {
    const auto& tr = batch[static_cast<std::size_t>(b)];
    const int pad = lay.length - static_cast<int>(tr.token_count());
    int l = pad;
    for (std::size_t t = 0; t < tr.steps(); ++t) {
      const int ts = tr.timesteps[t];
      if (ts < 0 || ts >= cfg.max_timestep) {
        throw std::invalid_argument("timestep " + std::to_string(ts) + " outside [0, " +
                                    std::to_string(cfg.max_timestep) + ")");
      }
      const std::size_t base = static_cast<std::size_t>(b) * lay.length;
      lay.rtg.push_back(tr.rtg[t] / cfg.rtg_scale);
      lay.gather[base + l] = r_next++;
      lay.timestep[base + l] = ts;
      valid[base + l] = 1;
      ++l;
      lay.obs.insert(lay.obs.end(), tr.obs[t].begin(), tr.obs[t].end());
      lay.gather[base + l] = o_next++;
      lay.timestep[base + l] = ts;
      valid[base + l] = 1;
      lay.obs_slots.push_back(static_cast<int>(base) + l);
      lay.rows.emplace_back(b, static_cast<int>(t));
      ++l;
      if (t < tr.actions.size()) {
        lay.actions.push_back(tr.actions[t]);
        lay.gather[base + l] = a_next++;
        lay.timestep[base + l] = ts;
        valid[base + l] = 1;
        ++l;
      }
    }
  }
  const std::size_t L = static_cast<std::size_t>(lay.length);
  lay.mask.assign(cells * L, 0);
  for (std::size_t b = 0; b < static_cast<std::size_t>(lay.batch); ++b) {
    for (std::size_t i = 0; i < L; ++i) {
      for (std::size_t j = 0; j < L; ++j) {
        const bool blocked = j > i || (!valid[b * L + j] && j != i);
        lay.mask[(b * L + i) * L + j] = blocked ? 1 : 0;
      }
    }
  }
  return lay;
}

void check_batch(std::span<const TokenizedTrajectory> batch, const DTConfig& cfg) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  for (const auto& tr : batch) {
    tr.validate();
    if (tr.steps() == 0) throw std::invalid_argument("trajectory without steps");
    if (tr.steps() > static_cast<std::size_t>(cfg.context_len)) {
      throw std::invalid_argument("trajectory longer than the context window");
    }
    for (const auto& o : tr.obs) {
      if (static_cast<int>(o.size()) != cfg.obs_dim) {
        throw ShapeMismatch("observation of size " + std::to_string(o.size()) + ", expected " +
                            std::to_string(cfg.obs_dim));
      }
    }
    for (int a : tr.actions) {
      if (a < 0 || a >= cfg.n_actions) throw std::invalid_argument("action code out of range");
    }
  }
}

}  // namespace

void DTConfig::validate() const {
  if (embed_dim <= 0 || n_layers <= 0 || n_heads <= 0 || context_len <= 0 || obs_dim <= 0 ||
      n_actions <= 0 || max_timestep <= 0) {
    throw std::invalid_argument("transformer dimensions must be positive");
  }
  if (embed_dim % n_heads != 0) throw std::invalid_argument("embed_dim must be divisible by n_heads");
  if (!(rtg_scale > 0.0)) throw std::invalid_argument("rtg_scale must be positive");
  if (!(init_std > 0.0)) throw std::invalid_argument("init_std must be positive");
}

void TokenizedTrajectory::validate() const {
  const std::size_t n = obs.size();
  if (rtg.size() != n || timesteps.size() != n) {
    throw std::invalid_argument("rtg/timestep count differs from observation count");
  }
  if (actions.size() != n && actions.size() + 1 != n) {
    throw std::invalid_argument("action count must equal the observation count or be one less");
  }
}

TokenizedTrajectory TokenizedTrajectory::last_steps(std::size_t k) const {
  const std::size_t n = steps();
  const std::size_t from = n > k ? n - k : 0;
  TokenizedTrajectory out;
  out.rtg.assign(rtg.begin() + static_cast<std::ptrdiff_t>(from), rtg.end());
  out.obs.assign(obs.begin() + static_cast<std::ptrdiff_t>(from), obs.end());
  out.timesteps.assign(timesteps.begin() + static_cast<std::ptrdiff_t>(from), timesteps.end());
  if (from < actions.size()) out.actions.assign(actions.begin() + static_cast<std::ptrdiff_t>(from), actions.end());
  return out;
}

std::vector<double> compute_rtg(std::span<const double> rewards) {
  std::vector<double> out(rewards.size());
  double acc = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    acc += rewards[i];
    out[i] = acc;
  }
  return out;
}

int argmax_action(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("argmax of empty logits");
  int best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

int sample_action(std::span<const double> logits, double temperature, Rng& rng) {
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> w(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) w[i] = std::exp((logits[i] - mx) / temperature);
  return static_cast<int>(rng.categorical(w));
}

ad::ParamStore init_dt_params(const DTConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  const int d = cfg.embed_dim;
  const double s = cfg.init_std;
  ad::ParamStore p;
  p["embed.rtg.w"] = normal_param({1, d}, s, rng);
  p["embed.rtg.b"] = filled_param({d}, 0.0);
  p["embed.obs.w"] = normal_param({cfg.obs_dim, d}, s, rng);
  p["embed.obs.b"] = filled_param({d}, 0.0);
  p["embed.action"] = normal_param({cfg.n_actions, d}, s, rng);
  p["embed.time"] = normal_param({cfg.max_timestep, d}, s, rng);
  for (int i = 0; i < cfg.n_layers; ++i) {
    p[block_name(i, "ln1.g")] = filled_param({d}, 1.0);
    p[block_name(i, "ln1.b")] = filled_param({d}, 0.0);
    p[block_name(i, "qkv.w")] = normal_param({d, 3 * d}, s, rng);
    p[block_name(i, "qkv.b")] = filled_param({3 * d}, 0.0);
    p[block_name(i, "proj.w")] = normal_param({d, d}, s, rng);
    p[block_name(i, "proj.b")] = filled_param({d}, 0.0);
    p[block_name(i, "ln2.g")] = filled_param({d}, 1.0);
    p[block_name(i, "ln2.b")] = filled_param({d}, 0.0);
    p[block_name(i, "mlp1.w")] = normal_param({d, 4 * d}, s, rng);
    p[block_name(i, "mlp1.b")] = filled_param({4 * d}, 0.0);
    p[block_name(i, "mlp2.w")] = normal_param({4 * d, d}, s, rng);
    p[block_name(i, "mlp2.b")] = filled_param({d}, 0.0);
  }
  p["ln_f.g"] = filled_param({d}, 1.0);
  p["ln_f.b"] = filled_param({d}, 0.0);
  // A zero head makes the initial policy uniform.
  p["head.w"] = filled_param({d, cfg.n_actions}, 0.0);
  p["head.b"] = filled_param({cfg.n_actions}, 0.0);
  return p;
}

DecisionTransformer::DecisionTransformer(DTConfig config, std::uint64_t seed)
    : config_(config), params_(init_dt_params(config, seed)) {}

DecisionTransformer::DecisionTransformer(DTConfig config, ad::ParamStore params)
    : config_(config), params_(std::move(params)) {
  config_.validate();
  const ad::ParamStore ref = init_dt_params(config_, 0);
  for (const auto& [name, p] : ref) {
    auto it = params_.find(name);
    if (it == params_.end()) throw FormatError("missing parameter " + name);
    if (it->second.shape != p.shape) {
      throw ShapeMismatch("parameter " + name + " has shape " + ad::shape_str(it->second.shape) +
                          ", expected " + ad::shape_str(p.shape));
    }
  }
  if (params_.size() != ref.size()) throw FormatError("unexpected extra parameters");
}

DecisionTransformer::Forward DecisionTransformer::forward(ad::Tape& tape,
                                                          std::span<const TokenizedTrajectory> batch,
                                                          bool trainable) const {
  check_batch(batch, config_);
  const DTConfig& cfg = config_;
  const Layout lay = build_layout(batch, cfg);
  const int d = cfg.embed_dim;
  const int B = lay.batch, L = lay.length;

  auto P = [&](const std::string& name) {
    const ad::Param& p = params_.at(name);
    return trainable ? tape.parameter(name, p) : tape.constant(p.shape, p.values);
  };

  const int n_rtg = static_cast<int>(lay.rtg.size());
  const int n_obs = static_cast<int>(lay.obs_slots.size());
  std::vector<ad::Tensor> parts;
  parts.push_back(ad::add(ad::matmul(tape.constant({n_rtg, 1}, lay.rtg), P("embed.rtg.w")), P("embed.rtg.b")));
  parts.push_back(
      ad::add(ad::matmul(tape.constant({n_obs, cfg.obs_dim}, lay.obs), P("embed.obs.w")), P("embed.obs.b")));
  if (!lay.actions.empty()) {
    parts.push_back(ad::embedding_lookup(P("embed.action"), lay.actions, {static_cast<int>(lay.actions.size())}));
  }
  parts.push_back(tape.constant({1, d}, 0.0));
  const ad::Tensor table = ad::concat_rows(parts);

  ad::Tensor x = ad::add(ad::embedding_lookup(table, lay.gather, {B, L}),
                         ad::embedding_lookup(P("embed.time"), lay.timestep, {B, L}));

  const int dh = d / cfg.n_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int i = 0; i < cfg.n_layers; ++i) {
    const ad::Tensor h = ad::layer_norm(x, P(block_name(i, "ln1.g")), P(block_name(i, "ln1.b")));
    const ad::Tensor qkv = ad::add(ad::matmul(h, P(block_name(i, "qkv.w"))), P(block_name(i, "qkv.b")));
    std::vector<ad::Tensor> heads;
    for (int k = 0; k < cfg.n_heads; ++k) {
      const ad::Tensor q = ad::slice_last(qkv, k * dh, (k + 1) * dh);
      const ad::Tensor key = ad::slice_last(qkv, d + k * dh, d + (k + 1) * dh);
      const ad::Tensor v = ad::slice_last(qkv, 2 * d + k * dh, 2 * d + (k + 1) * dh);
      ad::Tensor scores = ad::scale(ad::matmul(q, ad::transpose_last2(key)), inv_sqrt);
      scores = ad::masked_fill(scores, lay.mask, kMaskValue);
      heads.push_back(ad::matmul(ad::softmax(scores), v));
    }
    const ad::Tensor joined = cfg.n_heads == 1 ? heads.front() : ad::concat_last(heads);
    x = ad::add(x, ad::add(ad::matmul(joined, P(block_name(i, "proj.w"))), P(block_name(i, "proj.b"))));
    const ad::Tensor h2 = ad::layer_norm(x, P(block_name(i, "ln2.g")), P(block_name(i, "ln2.b")));
    const ad::Tensor m = ad::gelu(ad::add(ad::matmul(h2, P(block_name(i, "mlp1.w"))), P(block_name(i, "mlp1.b"))));
    x = ad::add(x, ad::add(ad::matmul(m, P(block_name(i, "mlp2.w"))), P(block_name(i, "mlp2.b"))));
  }
  x = ad::layer_norm(x, P("ln_f.g"), P("ln_f.b"));
  const ad::Tensor flat = ad::reshape(x, {B * L, d});
  const ad::Tensor picked = ad::embedding_lookup(flat, lay.obs_slots, {n_obs});
  Forward out;
  out.logits = ad::add(ad::matmul(picked, P("head.w")), P("head.b"));
  out.rows = lay.rows;
  return out;
}

DecisionTransformer::LossTensors DecisionTransformer::loss(ad::Tape& tape,
                                                           std::span<const TokenizedTrajectory> batch,
                                                           double lambda, bool trainable) const {
  const Forward fw = forward(tape, batch, trainable);
  std::vector<int> keep;
  std::vector<int> targets;
  for (std::size_t r = 0; r < fw.rows.size(); ++r) {
    const auto& tr = batch[static_cast<std::size_t>(fw.rows[r].first)];
    const auto t = static_cast<std::size_t>(fw.rows[r].second);
    if (t < tr.actions.size()) {
      keep.push_back(static_cast<int>(r));
      targets.push_back(tr.actions[t]);
    }
  }
  if (keep.empty()) throw std::invalid_argument("batch has no supervised action");
  ad::Tensor logits = fw.logits;
  if (keep.size() != fw.rows.size()) {
    logits = ad::embedding_lookup(fw.logits, keep, {static_cast<int>(keep.size())});
  }
  LossTensors out;
  out.ce = ad::cross_entropy_from_logits(logits, targets);
  out.entropy = ad::entropy_from_logits(logits);
  out.total = ad::add(out.ce, ad::scale(out.entropy, -lambda));
  return out;
}

LossReport DecisionTransformer::evaluate_loss(std::span<const TokenizedTrajectory> batch, double lambda) const {
  ad::Tape tape;
  const LossTensors l = loss(tape, batch, lambda, false);
  return {l.ce.item(), l.entropy.item(), l.total.item()};
}

std::vector<std::vector<double>> DecisionTransformer::next_action_logits(
    std::span<const TokenizedTrajectory> histories) const {
  std::vector<TokenizedTrajectory> windows;
  windows.reserve(histories.size());
  for (const auto& h : histories) {
    TokenizedTrajectory w = h.last_steps(static_cast<std::size_t>(config_.context_len));
    if (w.actions.size() == w.obs.size() && !w.actions.empty()) w.actions.pop_back();
    windows.push_back(std::move(w));
  }
  ad::Tape tape;
  const Forward fw = forward(tape, windows, false);
  const auto vals = fw.logits.values();
  const std::size_t c = static_cast<std::size_t>(config_.n_actions);
  std::vector<std::vector<double>> out(windows.size());
  for (std::size_t r = 0; r < fw.rows.size(); ++r) {
    const auto [b, t] = fw.rows[r];
    if (static_cast<std::size_t>(t) + 1 == windows[static_cast<std::size_t>(b)].steps()) {
      out[static_cast<std::size_t>(b)].assign(vals.begin() + static_cast<std::ptrdiff_t>(r * c),
                                              vals.begin() + static_cast<std::ptrdiff_t>((r + 1) * c));
    }
  }
  return out;
}

Action DecisionTransformer::act(const TokenizedTrajectory& history, const RTGSchedule& schedule,
                                const ActOptions& options, Rng* rng) const {
  TokenizedTrajectory h = history;
  if (!h.rtg.empty()) h.rtg.back() = schedule.remaining();
  return act_batch(std::span<const TokenizedTrajectory>(&h, 1), options, rng).front();
}

std::vector<Action> DecisionTransformer::act_batch(std::span<const TokenizedTrajectory> histories,
                                                   const ActOptions& options, Rng* rng) const {
  if (options.mode == DecodeMode::Sample && rng == nullptr) {
    throw std::invalid_argument("sampling requires a random generator");
  }
  const auto logits = next_action_logits(histories);
  std::vector<Action> out;
  out.reserve(logits.size());
  for (const auto& z : logits) {
    const int a = options.mode == DecodeMode::Greedy ? argmax_action(z) : sample_action(z, options.temperature, *rng);
    out.push_back(action_from_int(a));
  }
  return out;
}

std::string DecisionTransformer::to_json() const {
  nlohmann::json j;
  j["version"] = 1;
  j["config"] = {{"embed_dim", config_.embed_dim},       {"n_layers", config_.n_layers},
                 {"n_heads", config_.n_heads},           {"context_len", config_.context_len},
                 {"obs_dim", config_.obs_dim},           {"n_actions", config_.n_actions},
                 {"max_timestep", config_.max_timestep}, {"rtg_scale", config_.rtg_scale},
                 {"init_std", config_.init_std}};
  j["params"] = nlohmann::json::parse(ad::params_to_json(params_))["params"];
  return j.dump();
}

DecisionTransformer DecisionTransformer::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || j.value("version", 0) != 1) throw FormatError("unsupported checkpoint version");
  try {
    const auto& c = j.at("config");
    DTConfig cfg;
    cfg.embed_dim = c.at("embed_dim").get<int>();
    cfg.n_layers = c.at("n_layers").get<int>();
    cfg.n_heads = c.at("n_heads").get<int>();
    cfg.context_len = c.at("context_len").get<int>();
    cfg.obs_dim = c.at("obs_dim").get<int>();
    cfg.n_actions = c.at("n_actions").get<int>();
    cfg.max_timestep = c.at("max_timestep").get<int>();
    cfg.rtg_scale = c.at("rtg_scale").get<double>();
    cfg.init_std = c.at("init_std").get<double>();
    nlohmann::json wrapped = {{"version", 1}, {"params", j.at("params")}};
    return DecisionTransformer(cfg, ad::params_from_json(wrapped.dump()));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed checkpoint: ") + e.what());
  }
}

}  // namespace adt
