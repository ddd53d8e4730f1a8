#include <cmath>

#include "activedt/dt.hpp"
#include "activedt/error.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace adt;

namespace {

DTConfig tiny_config(int embed = 8, int layers = 1, int heads = 1, int obs_dim = 4, int steps = 3) {
  DTConfig c;
  c.embed_dim = embed;
  c.n_layers = layers;
  c.n_heads = heads;
  c.obs_dim = obs_dim;
  c.context_len = steps;
  c.max_timestep = steps;
  return c;
}

TokenizedTrajectory random_traj(const DTConfig& c, int steps, bool final_action, Rng& rng) {
  TokenizedTrajectory t;
  for (int i = 0; i < steps; ++i) {
    t.rtg.push_back(rng.uniform(0.0, 10.0));
    std::vector<double> o(static_cast<std::size_t>(c.obs_dim));
    for (double& v : o) v = rng.uniform();
    t.obs.push_back(o);
    t.timesteps.push_back(i);
    if (i + 1 < steps || final_action) t.actions.push_back(rng.uniform_int(0, c.n_actions - 1));
  }
  return t;
}

// Every parameter redrawn, including the zero-initialized head.
DecisionTransformer randomized(const DTConfig& c, std::uint64_t seed) {
  DecisionTransformer m(c, seed);
  Rng rng(derive_seed(seed, 77));
  for (auto& [name, p] : m.params()) {
    for (double& v : p.values) v += rng.normal(0.0, 0.3);
  }
  return m;
}

double total_loss(const DTConfig& c, const ad::ParamStore& ps, std::span<const TokenizedTrajectory> batch, double lambda) {
  return DecisionTransformer(c, ps).evaluate_loss(batch, lambda).total;
}

}  // namespace

TEST_CASE("compute_rtg examples") {
  const std::vector<double> r{0.2, 0.5, 0.3};
  const auto g = compute_rtg(r);
  CHECK(g[0] == doctest::Approx(1.0));
  CHECK(g[1] == doctest::Approx(0.8));
  CHECK(g[2] == doctest::Approx(0.3));
  CHECK(compute_rtg(std::vector<double>(10, 0.0)) == std::vector<double>(10, 0.0));
  const auto ones = compute_rtg(std::vector<double>(10, 1.0));
  for (int i = 0; i < 10; ++i) CHECK(ones[static_cast<std::size_t>(i)] == 10.0 - i);
  CHECK(compute_rtg(std::vector<double>{}).empty());
}

TEST_CASE("rtg schedule stays exact") {
  RTGSchedule s(10.0);
  const double rewards[] = {0.0, 0.25, 0.5, 0.75, 1.0};
  double consumed = 0.0;
  for (double r : rewards) {
    s.consume(r);
    consumed += r;
    CHECK(s.remaining() == 10.0 - consumed);
    CHECK(s.consumed() == consumed);
  }
  CHECK(s.initial() == 10.0);
}

TEST_CASE("argmax and sampling") {
  CHECK(argmax_action(std::vector<double>{2, 0, 0, 0, 0, 0, 0}) == 0);
  CHECK(argmax_action(std::vector<double>(7, 0.0)) == 0);
  CHECK(argmax_action(std::vector<double>{0, 1, 3, 3, 0, 0, 0}) == 2);
  const std::vector<double> z{0.1, 0.5, -0.2, 0.0, 0.3, 0.9, -1.0};
  Rng a(3), b(3);
  for (int i = 0; i < 200; ++i) CHECK(sample_action(z, 1.0, a) == sample_action(z, 1.0, b));
  Rng c(4);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 20000; ++i) ++counts[static_cast<std::size_t>(sample_action(z, 1.0, c))];
  double norm = 0.0;
  for (double v : z) norm += std::exp(v);
  for (std::size_t k = 0; k < 7; ++k) CHECK(counts[k] / 20000.0 == doctest::Approx(std::exp(z[k]) / norm).epsilon(0.1));
  CHECK_THROWS(sample_action(z, 0.0, c));
}

TEST_CASE("tokenized trajectory bookkeeping") {
  Rng rng(1);
  const DTConfig c = tiny_config();
  const auto full = random_traj(c, 3, true, rng);
  const auto open = random_traj(c, 3, false, rng);
  CHECK(full.token_count() == 9);
  CHECK(open.token_count() == 8);
  CHECK(open.final_action_absent());
  const auto tail = full.last_steps(2);
  CHECK(tail.steps() == 2);
  CHECK(tail.timesteps == std::vector<int>{1, 2});
  CHECK(tail.actions.size() == 2);
  TokenizedTrajectory bad = full;
  bad.rtg.pop_back();
  CHECK_THROWS(bad.validate());
}

TEST_CASE("config validation") {
  DTConfig c;
  CHECK_NOTHROW(c.validate());
  c.n_heads = 3;
  CHECK_THROWS(c.validate());
  c = DTConfig{};
  c.context_len = 0;
  CHECK_THROWS(c.validate());
}

TEST_CASE("zero head gives a uniform policy and the analytic initial loss") {
  Rng rng(2);
  const DTConfig c = tiny_config();
  const DecisionTransformer m(c, 5);
  std::vector<TokenizedTrajectory> batch{random_traj(c, 3, true, rng), random_traj(c, 2, false, rng)};
  const LossReport r = m.evaluate_loss(batch, 0.1);
  CHECK(r.ce == doctest::Approx(std::log(7.0)).epsilon(1e-12));
  CHECK(r.entropy == doctest::Approx(std::log(7.0)).epsilon(1e-12));
  CHECK(r.total == doctest::Approx(0.9 * std::log(7.0)).epsilon(1e-12));
  CHECK(r.total == doctest::Approx(1.7513).epsilon(1e-4));
  const auto logits = m.next_action_logits(batch);
  for (const auto& z : logits) {
    for (double v : z) CHECK(v == 0.0);
  }
}

TEST_CASE("a single timestep yields one logit vector") {
  Rng rng(3);
  const DTConfig c = tiny_config();
  const DecisionTransformer m = randomized(c, 1);
  const std::vector<TokenizedTrajectory> one{random_traj(c, 1, false, rng)};
  ad::Tape tape;
  const auto fw = m.forward(tape, one, false);
  CHECK(fw.logits.shape() == ad::Shape{1, 7});
  CHECK(fw.rows.size() == 1);
  CHECK_THROWS_AS(m.evaluate_loss(one, 0.1), std::invalid_argument);
}

TEST_CASE("causality: later tokens never change earlier logits") {
  Rng rng(4);
  const DTConfig c = tiny_config(16, 2, 2, 5, 4);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const DecisionTransformer m = randomized(c, seed);
    const auto base = random_traj(c, 4, true, rng);
    ad::Tape t0;
    const auto ref = m.forward(t0, std::span(&base, 1), false);
    const auto ref_vals = std::vector<double>(ref.logits.values().begin(), ref.logits.values().end());
    for (int t = 0; t < 3; ++t) {
      TokenizedTrajectory p = base;
      p.obs[static_cast<std::size_t>(t + 1)][0] += 3.0;
      p.rtg[static_cast<std::size_t>(t + 1)] -= 2.0;
      p.actions[static_cast<std::size_t>(t)] = (p.actions[static_cast<std::size_t>(t)] + 3) % 7;
      ad::Tape t1;
      const auto out = m.forward(t1, std::span(&p, 1), false);
      const auto vals = out.logits.values();
      for (int r = 0; r <= t; ++r) {
        for (int k = 0; k < 7; ++k) {
          CHECK(vals[static_cast<std::size_t>(r * 7 + k)] == ref_vals[static_cast<std::size_t>(r * 7 + k)]);
        }
      }
      bool changed = false;
      for (int k = 0; k < 7; ++k) {
        changed = changed || vals[static_cast<std::size_t>((t + 1) * 7 + k)] != ref_vals[static_cast<std::size_t>((t + 1) * 7 + k)];
      }
      CHECK(changed);
    }
  }
}

TEST_CASE("left padding does not change a sequence's logits") {
  Rng rng(5);
  const DTConfig c = tiny_config(16, 2, 2, 5, 4);
  const DecisionTransformer m = randomized(c, 9);
  const auto short_seq = random_traj(c, 2, false, rng);
  const auto long_seq = random_traj(c, 4, true, rng);
  ad::Tape t0, t1;
  const auto alone = m.forward(t0, std::span(&short_seq, 1), false);
  const std::vector<TokenizedTrajectory> both{long_seq, short_seq};
  const auto batched = m.forward(t1, both, false);
  const auto a = alone.logits.values();
  const auto b = batched.logits.values();
  REQUIRE(batched.rows.size() == 6);
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t k = 0; k < 7; ++k) CHECK(b[(4 + r) * 7 + k] == doctest::Approx(a[r * 7 + k]).epsilon(1e-12));
  }
}

TEST_CASE("loss gradients match finite differences on random tiny transformers") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(derive_seed(99, seed));
    const DTConfig c = tiny_config();
    DecisionTransformer m = randomized(c, seed);
    const std::vector<TokenizedTrajectory> batch{random_traj(c, 3, true, rng), random_traj(c, 2, false, rng)};
    ad::Tape tape;
    const auto l = m.loss(tape, batch, 0.1);
    tape.backward(l.total);
    const ad::Gradients g = tape.gradients();
    ad::ParamStore ps = m.params();
    INFO("seed " << seed);
    CHECK(test::max_param_grad_error(ps, g, [&](const ad::ParamStore& q) { return total_loss(c, q, batch, 0.1); }) < 1e-4);
  }
}

TEST_CASE("loss gradients with two layers and two heads") {
  Rng rng(6);
  const DTConfig c = tiny_config(8, 2, 2, 3, 3);
  DecisionTransformer m = randomized(c, 42);
  const std::vector<TokenizedTrajectory> batch{random_traj(c, 3, true, rng), random_traj(c, 3, false, rng),
                                               random_traj(c, 1, true, rng)};
  ad::Tape tape;
  const auto l = m.loss(tape, batch, 0.0);
  tape.backward(l.total);
  ad::ParamStore ps = m.params();
  CHECK(test::max_param_grad_error(ps, tape.gradients(),
                                   [&](const ad::ParamStore& q) { return total_loss(c, q, batch, 0.0); }) < 1e-4);
}

TEST_CASE("act uses the schedule and reads only the newest window") {
  Rng rng(7);
  DTConfig c = tiny_config(8, 1, 1, 4, 2);
  c.max_timestep = 5;
  const DecisionTransformer m = randomized(c, 3);
  TokenizedTrajectory h;
  for (int i = 0; i < 4; ++i) {
    h.rtg.push_back(5.0 - i);
    h.obs.push_back({rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform()});
    h.timesteps.push_back(i);
    if (i < 3) h.actions.push_back(i);
  }
  const auto logits = m.next_action_logits(std::span(&h, 1)).front();
  const auto window = h.last_steps(2);
  CHECK(m.next_action_logits(std::span(&window, 1)).front() == logits);
  CHECK(static_cast<int>(m.act(h, RTGSchedule(h.rtg.back()), ActOptions{})) == argmax_action(logits));
  CHECK_THROWS(m.act(h, RTGSchedule(1.0), ActOptions{DecodeMode::Sample, 1.0}, nullptr));
  Rng a(1), b(1);
  for (int i = 0; i < 20; ++i) {
    CHECK(m.act(h, RTGSchedule(2.0), ActOptions{DecodeMode::Sample, 1.0}, &a) ==
          m.act(h, RTGSchedule(2.0), ActOptions{DecodeMode::Sample, 1.0}, &b));
  }
}

TEST_CASE("checkpoints round-trip and reject mismatched parameters") {
  const DTConfig c = tiny_config(8, 2, 2, 4, 3);
  const DecisionTransformer m = randomized(c, 11);
  const DecisionTransformer back = DecisionTransformer::from_json(m.to_json());
  CHECK(back.config() == m.config());
  for (const auto& [name, p] : m.params()) CHECK(back.params().at(name).values == p.values);
  CHECK(back.to_json() == m.to_json());

  ad::ParamStore broken = m.params();
  broken["head.w"].shape = {7, 8};
  CHECK_THROWS_AS(DecisionTransformer(c, broken), ShapeMismatch);
  broken = m.params();
  broken.erase("ln_f.g");
  CHECK_THROWS_AS(DecisionTransformer(c, broken), FormatError);
  CHECK_THROWS_AS(DecisionTransformer::from_json("{\"version\":3}"), FormatError);
}

TEST_CASE("forward rejects malformed batches") {
  Rng rng(12);
  const DTConfig c = tiny_config();
  const DecisionTransformer m(c, 0);
  auto t = random_traj(c, 3, true, rng);
  t.obs[0].push_back(0.0);
  ad::Tape tape;
  CHECK_THROWS_AS(m.forward(tape, std::span(&t, 1), false), ShapeMismatch);
  auto long_t = random_traj(tiny_config(8, 1, 1, 4, 5), 5, true, rng);
  CHECK_THROWS(m.forward(tape, std::span(&long_t, 1), false));
  CHECK_THROWS(m.forward(tape, std::span<const TokenizedTrajectory>{}, false));
}
