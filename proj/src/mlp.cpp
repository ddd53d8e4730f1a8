#include "activedt/mlp.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "activedt/error.hpp"
#include "activedt/rng.hpp"

namespace adt {

namespace {

ad::ParamStore init_mlp(int obs_dim, int hidden, int n_actions, std::uint64_t seed) {
  if (obs_dim <= 0 || hidden <= 0 || n_actions <= 0) throw std::invalid_argument("MLP sizes must be positive");
  Rng rng(seed);
  ad::ParamStore p;
  auto dense = [&](const std::string& name, int in, int out) {
    ad::Param w{{in, out}, std::vector<double>(static_cast<std::size_t>(in) * out)};
    const double s = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& v : w.values) v = rng.normal(0.0, s);
    p[name + ".w"] = std::move(w);
    p[name + ".b"] = ad::Param{{out}, std::vector<double>(static_cast<std::size_t>(out), 0.0)};
  };
  dense("mlp.hidden", obs_dim, hidden);
  dense("mlp.out", hidden, n_actions);
  return p;
}

}  // namespace

MlpPolicyNet::MlpPolicyNet(int obs_dim, int hidden, int n_actions, std::uint64_t seed)
    : obs_dim_(obs_dim), hidden_(hidden), n_actions_(n_actions), params_(init_mlp(obs_dim, hidden, n_actions, seed)) {}

MlpPolicyNet::MlpPolicyNet(int obs_dim, int hidden, int n_actions, ad::ParamStore params)
    : obs_dim_(obs_dim), hidden_(hidden), n_actions_(n_actions), params_(std::move(params)) {
  const ad::ParamStore ref = init_mlp(obs_dim, hidden, n_actions, 0);
  for (const auto& [name, p] : ref) {
    auto it = params_.find(name);
    if (it == params_.end()) throw FormatError("missing parameter " + name);
    if (it->second.shape != p.shape) throw ShapeMismatch("parameter " + name + " has the wrong shape");
  }
}

ad::Tensor MlpPolicyNet::forward(ad::Tape& tape, std::span<const std::vector<double>> obs, bool trainable) const {
  if (obs.empty()) throw std::invalid_argument("empty observation batch");
  std::vector<double> flat;
  flat.reserve(obs.size() * static_cast<std::size_t>(obs_dim_));
  for (const auto& o : obs) {
    if (static_cast<int>(o.size()) != obs_dim_) {
      throw ShapeMismatch("observation of size " + std::to_string(o.size()) + ", expected " +
                          std::to_string(obs_dim_));
    }
    flat.insert(flat.end(), o.begin(), o.end());
  }
  auto P = [&](const std::string& name) {
    const ad::Param& p = params_.at(name);
    return trainable ? tape.parameter(name, p) : tape.constant(p.shape, p.values);
  };
  const ad::Tensor x = tape.constant({static_cast<int>(obs.size()), obs_dim_}, std::move(flat));
  const ad::Tensor h = ad::tanh(ad::add(ad::matmul(x, P("mlp.hidden.w")), P("mlp.hidden.b")));
  return ad::add(ad::matmul(h, P("mlp.out.w")), P("mlp.out.b"));
}

std::vector<std::vector<double>> MlpPolicyNet::logits(std::span<const std::vector<double>> obs) const {
  ad::Tape tape;
  const ad::Tensor z = forward(tape, obs, false);
  const auto v = z.values();
  const std::size_t c = static_cast<std::size_t>(n_actions_);
  std::vector<std::vector<double>> out(obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i) out[i].assign(v.begin() + i * c, v.begin() + (i + 1) * c);
  return out;
}

ad::Tensor MlpPolicyNet::policy_gradient_loss(ad::Tape& tape, std::span<const std::vector<double>> obs,
                                              std::span<const int> actions, std::span<const double> advantages,
                                              bool trainable) const {
  const ad::Tensor z = forward(tape, obs, trainable);
  return ad::cross_entropy_from_logits(z, actions, advantages);
}

std::string MlpPolicyNet::to_json() const {
  nlohmann::json j;
  j["version"] = 1;
  j["config"] = {{"obs_dim", obs_dim_}, {"hidden", hidden_}, {"n_actions", n_actions_}};
  j["params"] = nlohmann::json::parse(ad::params_to_json(params_))["params"];
  return j.dump();
}

MlpPolicyNet MlpPolicyNet::from_json(const std::string& text) {
  try {
    const nlohmann::json j = nlohmann::json::parse(text);
    if (j.value("version", 0) != 1) throw FormatError("unsupported checkpoint version");
    const auto& c = j.at("config");
    nlohmann::json wrapped = {{"version", 1}, {"params", j.at("params")}};
    return MlpPolicyNet(c.at("obs_dim").get<int>(), c.at("hidden").get<int>(), c.at("n_actions").get<int>(),
                        ad::params_from_json(wrapped.dump()));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed checkpoint: ") + e.what());
  }
}

}  // namespace adt
