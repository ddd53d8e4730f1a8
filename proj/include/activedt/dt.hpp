#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "activedt/autodiff.hpp"
#include "activedt/env.hpp"
#include "activedt/rng.hpp"

namespace adt {

struct DTConfig {
  int embed_dim = 64;
  int n_layers = 2;
  int n_heads = 2;
  int context_len = 10;  // K, in timesteps
  int obs_dim = 30;
  int n_actions = kNumActions;
  int max_timestep = 10;
  // Return-to-go inputs are divided by this before embedding.
  double rtg_scale = 10.0;
  double init_std = 0.02;

  // Throws std::invalid_argument on an inconsistent configuration.
  void validate() const;
  friend bool operator==(const DTConfig&, const DTConfig&) = default;
};

// Interleaved (R_t, o_t, a_t) triplets; the final action may be absent.
struct TokenizedTrajectory {
  std::vector<double> rtg;
  std::vector<std::vector<double>> obs;
  std::vector<int> actions;
  std::vector<int> timesteps;

  std::size_t steps() const { return obs.size(); }
  bool final_action_absent() const { return actions.size() + 1 == obs.size(); }
  std::size_t token_count() const { return 3 * steps() - (final_action_absent() ? 1 : 0); }
  // Throws std::invalid_argument when field lengths disagree.
  void validate() const;
  // The trailing `k` timesteps.
  TokenizedTrajectory last_steps(std::size_t k) const;
};

// Suffix sums: rtg[t] = sum of rewards[t..].
std::vector<double> compute_rtg(std::span<const double> rewards);

// Inference-time return-to-go: starts at a target and is decreased by every
// realized reward.
class RTGSchedule {
 public:
  explicit RTGSchedule(double initial) : initial_(initial), remaining_(initial) {}
  double initial() const { return initial_; }
  double remaining() const { return remaining_; }
  double consumed() const { return consumed_; }
  void consume(double reward) {
    remaining_ -= reward;
    consumed_ += reward;
  }

 private:
  double initial_;
  double remaining_;
  double consumed_ = 0.0;
};

struct LossReport {
  double ce = 0.0;
  double entropy = 0.0;
  double total = 0.0;
};

enum class DecodeMode { Greedy, Sample };

struct ActOptions {
  DecodeMode mode = DecodeMode::Greedy;
  double temperature = 1.0;
};

// Index of the largest logit; ties resolve to the lowest index.
int argmax_action(std::span<const double> logits);

// Decision Transformer policy: configuration plus its parameters.
class DecisionTransformer {
 public:
  DecisionTransformer() = default;
  DecisionTransformer(DTConfig config, std::uint64_t seed);
  DecisionTransformer(DTConfig config, ad::ParamStore params);

  const DTConfig& config() const { return config_; }
  const ad::ParamStore& params() const { return params_; }
  ad::ParamStore& params() { return params_; }

  struct Forward {
    ad::Tensor logits;  // [N, n_actions], one row per observation token
    // (sequence index, timestep position within the sequence) of each row.
    std::vector<std::pair<int, int>> rows;
  };

  // Records the forward pass on `tape`. Sequences are left-padded to a common
  // length and masked. With `trainable`, parameters become gradient leaves.
  Forward forward(ad::Tape& tape, std::span<const TokenizedTrajectory> batch, bool trainable) const;

  struct LossTensors {
    ad::Tensor ce;
    ad::Tensor entropy;
    ad::Tensor total;
  };
  // ce - lambda * entropy over every observation position carrying an action.
  // Throws std::invalid_argument when no position is supervised.
  LossTensors loss(ad::Tape& tape, std::span<const TokenizedTrajectory> batch, double lambda,
                   bool trainable = true) const;
  LossReport evaluate_loss(std::span<const TokenizedTrajectory> batch, double lambda) const;

  // Logits for the newest observation of each history (last K steps used).
  std::vector<std::vector<double>> next_action_logits(std::span<const TokenizedTrajectory> histories) const;

  Action act(const TokenizedTrajectory& history, const RTGSchedule& schedule, const ActOptions& options,
             Rng* rng = nullptr) const;
  std::vector<Action> act_batch(std::span<const TokenizedTrajectory> histories, const ActOptions& options,
                                Rng* rng = nullptr) const;

  // Versioned JSON holding the config and every parameter.
  std::string to_json() const;
  static DecisionTransformer from_json(const std::string& text);

 private:
  DTConfig config_;
  ad::ParamStore params_;
};

ad::ParamStore init_dt_params(const DTConfig& config, std::uint64_t seed);

// Draws an action from softmax(logits / temperature).
int sample_action(std::span<const double> logits, double temperature, Rng& rng);

}  // namespace adt
