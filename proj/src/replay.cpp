#include "activedt/replay.hpp"

#include <random>
#include <stdexcept>

#include "activedt/error.hpp"

namespace adt {

double Trajectory::total_reward() const {
  double s = 0.0;
  for (double r : rewards) s += r;
  return s;
}

void Trajectory::validate() const {
  const std::size_t n = actions.size();
  if (obs.size() != n || rewards.size() != n || rtg.size() != n) {
    throw std::invalid_argument("trajectory fields have inconsistent lengths");
  }
}

TokenizedTrajectory Trajectory::tokenize() const {
  validate();
  TokenizedTrajectory t;
  t.rtg = rtg;
  t.obs = obs;
  t.actions = actions;
  t.timesteps.resize(steps());
  for (std::size_t i = 0; i < steps(); ++i) t.timesteps[i] = static_cast<int>(i);
  return t;
}

Trajectory hindsight_relabel(Trajectory traj) {
  traj.rtg = compute_rtg(traj.rewards);
  return traj;
}

double reward_variance(std::span<const double> rewards) {
  if (rewards.size() < 2) return 0.0;
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(rewards.size());
  double ss = 0.0;
  for (double r : rewards) ss += (r - mean) * (r - mean);
  return ss / static_cast<double>(rewards.size());
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("buffer capacity must be positive");
}

void ReplayBuffer::push(Trajectory traj) {
  traj.validate();
  if (traj.steps() == 0) throw std::invalid_argument("cannot store an empty trajectory");
  if (items_.size() == capacity_) {
    items_.pop_front();
    variances_.pop_front();
  }
  variances_.push_back(reward_variance(traj.rewards));
  items_.push_back(std::move(traj));
}

std::vector<double> ReplayBuffer::probabilities() const {
  if (items_.empty()) return {};
  double total = 0.0;
  for (double v : variances_) total += v;
  std::vector<double> p(items_.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = total > 0.0 ? variances_[i] / total : 1.0 / static_cast<double>(p.size());
  }
  return p;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t batch_size, Rng& rng) const {
  if (items_.empty()) throw EmptyBuffer("cannot sample from an empty replay buffer");
  const std::vector<double> p = probabilities();
  std::discrete_distribution<std::size_t> dist(p.begin(), p.end());
  std::vector<std::size_t> out(batch_size);
  for (auto& i : out) i = dist(rng.engine());
  return out;
}

std::vector<Trajectory> ReplayBuffer::sample_batch(std::size_t batch_size, Rng& rng) const {
  std::vector<Trajectory> out;
  out.reserve(batch_size);
  for (std::size_t i : sample_indices(batch_size, rng)) out.push_back(items_[i]);
  return out;
}

}  // namespace adt
