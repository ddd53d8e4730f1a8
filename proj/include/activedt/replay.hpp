#pragma once

#include <cstddef>
#include <deque>
#include <span>
#include <string>
#include <vector>

#include "activedt/dt.hpp"
#include "activedt/env.hpp"
#include "activedt/rng.hpp"

namespace adt {

// One episode: per-step observation, action and reward, plus the
// return-to-go sequence used for conditioning.
struct Trajectory {
  std::string scene_ref;
  Pose init_pose;
  std::vector<std::vector<double>> obs;
  std::vector<int> actions;
  std::vector<double> rewards;
  std::vector<double> rtg;

  std::size_t steps() const { return actions.size(); }
  double total_reward() const;
  // Throws std::invalid_argument when the per-step fields disagree in length.
  void validate() const;
  TokenizedTrajectory tokenize() const;
  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

// Replaces the stored return-to-go with suffix sums of the realized rewards.
Trajectory hindsight_relabel(Trajectory traj);

// Population variance of a reward sequence; 0 for fewer than two values.
double reward_variance(std::span<const double> rewards);

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 1000);

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }

  // Appends, evicting the oldest trajectory when full. Throws
  // std::invalid_argument for a trajectory without steps.
  void push(Trajectory traj);

  const Trajectory& at(std::size_t i) const { return items_.at(i); }
  const std::deque<Trajectory>& items() const { return items_; }
  double variance(std::size_t i) const { return variances_.at(i); }

  // Sampling distribution: proportional to reward variance, uniform when
  // every variance is zero.
  std::vector<double> probabilities() const;
  // Independent draws with replacement. Throws EmptyBuffer.
  std::vector<std::size_t> sample_indices(std::size_t batch_size, Rng& rng) const;
  std::vector<Trajectory> sample_batch(std::size_t batch_size, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::deque<Trajectory> items_;
  std::deque<double> variances_;
};

}  // namespace adt
