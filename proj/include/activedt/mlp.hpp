#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "activedt/autodiff.hpp"

namespace adt {

// Markovian policy network: obs -> tanh hidden layer -> action logits.
class MlpPolicyNet {
 public:
  MlpPolicyNet() = default;
  MlpPolicyNet(int obs_dim, int hidden, int n_actions, std::uint64_t seed);
  MlpPolicyNet(int obs_dim, int hidden, int n_actions, ad::ParamStore params);

  int obs_dim() const { return obs_dim_; }
  int hidden() const { return hidden_; }
  int n_actions() const { return n_actions_; }
  const ad::ParamStore& params() const { return params_; }
  ad::ParamStore& params() { return params_; }

  // Logits [N, n_actions] for N stacked observations.
  ad::Tensor forward(ad::Tape& tape, std::span<const std::vector<double>> obs, bool trainable) const;
  std::vector<std::vector<double>> logits(std::span<const std::vector<double>> obs) const;

  // Advantage-weighted negative log-likelihood: mean of -(A_i) log pi(a_i | o_i).
  ad::Tensor policy_gradient_loss(ad::Tape& tape, std::span<const std::vector<double>> obs,
                                  std::span<const int> actions, std::span<const double> advantages,
                                  bool trainable = true) const;

  std::string to_json() const;
  static MlpPolicyNet from_json(const std::string& text);

 private:
  int obs_dim_ = 0;
  int hidden_ = 0;
  int n_actions_ = 0;
  ad::ParamStore params_;
};

}  // namespace adt
