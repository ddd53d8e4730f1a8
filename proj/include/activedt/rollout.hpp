#pragma once

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "activedt/detection.hpp"
#include "activedt/dt.hpp"
#include "activedt/mlp.hpp"
#include "activedt/policies.hpp"
#include "activedt/replay.hpp"
#include "activedt/rng.hpp"
#include "activedt/simulator.hpp"

namespace adt {

struct EpisodeSpec {
  PreparedScenePtr scene;
  Pose start;
};

struct RolloutOptions {
  int horizon = 10;
  ChannelMask mask = ChannelMask::all();
  // Initial return-to-go for return-conditioned policies; defaults to the horizon.
  std::optional<double> target_return;
};

// What a policy may look at when choosing the next action.
struct AgentView {
  const PreparedScene* scene = nullptr;
  Pose pose;
  int t = 0;
  bool stopped = false;
  // o_0..o_t, a_0..a_{t-1} and the return-to-go schedule R_0..R_t.
  const TokenizedTrajectory* history = nullptr;
};

class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string name() const = 0;
  // One action per view. Views of one call share the same step index.
  virtual std::vector<Action> decide(std::span<const AgentView> views, Rng& rng) const = 0;
};

class ExpertPolicy : public Policy {
 public:
  std::string name() const override { return "expert"; }
  std::vector<Action> decide(std::span<const AgentView> views, Rng& rng) const override;
};

class RandomPolicy : public Policy {
 public:
  std::string name() const override { return "random"; }
  std::vector<Action> decide(std::span<const AgentView> views, Rng& rng) const override;
};

// Follows the exact planner; tables are built per scene on first use.
class OraclePolicy : public Policy {
 public:
  explicit OraclePolicy(int horizon) : horizon_(horizon) {}
  std::string name() const override { return "oracle"; }
  std::vector<Action> decide(std::span<const AgentView> views, Rng& rng) const override;

 private:
  int horizon_;
  mutable std::map<const PreparedScene*, std::unique_ptr<OracleTable>> tables_;
};

class DTPolicy : public Policy {
 public:
  DTPolicy(const DecisionTransformer& model, ActOptions options, std::string name = "dt")
      : model_(&model), options_(options), name_(std::move(name)) {}
  std::string name() const override { return name_; }
  std::vector<Action> decide(std::span<const AgentView> views, Rng& rng) const override;

 private:
  const DecisionTransformer* model_;
  ActOptions options_;
  std::string name_;
};

class MlpPolicy : public Policy {
 public:
  MlpPolicy(const MlpPolicyNet& net, ActOptions options, std::string name = "reinforce")
      : net_(&net), options_(options), name_(std::move(name)) {}
  std::string name() const override { return name_; }
  std::vector<Action> decide(std::span<const AgentView> views, Rng& rng) const override;

 private:
  const MlpPolicyNet* net_;
  ActOptions options_;
  std::string name_;
};

struct Episode {
  Trajectory trajectory;      // relabeled with realized returns
  std::vector<Pose> poses;    // horizon + 1 poses, start first
  std::vector<double> scores;  // detection score after every step
};

// Runs every episode for exactly `horizon` steps in lockstep. The policy sees
// the return-to-go schedule initialized to the target return and reduced by
// each realized reward; stored trajectories carry hindsight returns.
std::vector<Episode> run_episodes(const Policy& policy, std::span<const EpisodeSpec> specs,
                                  const RolloutOptions& options, Rng& rng);

}  // namespace adt
