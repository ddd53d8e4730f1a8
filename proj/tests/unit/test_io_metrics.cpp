#include <cstdlib>
#include <sstream>

#include "activedt/error.hpp"
#include "activedt/io.hpp"
#include "activedt/metrics.hpp"
#include "activedt/pipeline.hpp"
#include "doctest.h"

using namespace adt;

namespace {

EpisodeResult result_with(double reward, Category c = Category::Open) {
  EpisodeResult r;
  r.scene_id = "s";
  r.category = c;
  r.policy = "p";
  r.reward = reward;
  r.oracle_value = 10.0;
  return r;
}

BenchmarkSuite tiny_suite() {
  SuiteOptions so;
  so.scenes_per_category = 1;
  so.starts_per_scene = 3;
  so.seed = 5;
  return build_suite(so, {Category::Open, Category::Cluttered});
}

}  // namespace

TEST_CASE("scene json round trip for every category") {
  for (Category c : kAllCategories) {
    const Scene s = generate_scene(c, 11);
    const Scene back = scene_from_json(scene_to_json(s));
    CHECK(back == s);
    CHECK(scene_to_json(back) == scene_to_json(s));
  }
}

TEST_CASE("malformed scene json raises FormatError") {
  CHECK_THROWS_AS(scene_from_json("{not json"), FormatError);
  CHECK_THROWS_AS(scene_from_json("{\"version\": 99}"), FormatError);
  CHECK_THROWS_AS(scene_from_json("[1,2]"), FormatError);
}

TEST_CASE("trajectory jsonl is lossless") {
  const auto suite = tiny_suite();
  std::vector<EpisodeSpec> specs = evaluation_specs(suite, suite.categories);
  Rng rng(3);
  auto eps = run_episodes(RandomPolicy{}, specs, {}, rng);
  std::vector<Trajectory> trajs;
  for (auto& e : eps) trajs.push_back(e.trajectory);
  std::stringstream ss;
  write_trajectories(ss, trajs);
  const auto back = read_trajectories(ss);
  REQUIRE(back.size() == trajs.size());
  for (std::size_t i = 0; i < trajs.size(); ++i) CHECK(back[i] == trajs[i]);
}

TEST_CASE("config rejects unknown keys and names them") {
  try {
    config_from_json(R"({"version": 1, "seed": 1, "dt": {"embed_dim": 32, "colour": 3}})");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("colour") != std::string::npos);
  }
  CHECK_THROWS_AS(config_from_json(R"({"version": 1, "bogus": true})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"version": 1, "seed": "abc"})"), ConfigError);
}

TEST_CASE("config round trip and seed fallback") {
  RunConfig c = config_from_json(R"({"version": 1, "seed": 42, "training": {"horizon": 10}})");
  CHECK(c.seed == 42u);
  const RunConfig back = config_from_json(config_to_json(c));
  CHECK(config_to_json(back) == config_to_json(c));

  ::setenv("ACTIVE_DT_SEED", "77", 1);
  CHECK(config_from_json(R"({"version": 1})").seed == 77u);
  CHECK(config_from_json(R"({"version": 1, "seed": 3})").seed == 3u);
  ::setenv("ACTIVE_DT_SEED", "x7", 1);
  CHECK_THROWS_AS(config_from_json(R"({"version": 1})"), ConfigError);
  ::unsetenv("ACTIVE_DT_SEED");
}

TEST_CASE("summarize worked examples") {
  std::vector<EpisodeResult> one{result_with(7.3)};
  auto s = summarize(one);
  REQUIRE(s.histogram.size() == 11);
  CHECK(s.histogram[7] == 1);

  std::vector<EpisodeResult> zeros{result_with(0), result_with(0), result_with(0)};
  CHECK(summarize(zeros).failure_rate == 1.0);

  std::vector<EpisodeResult> pair{result_with(0), result_with(10)};
  s = summarize(pair);
  CHECK(s.mean_reward == doctest::Approx(5.0));
  CHECK(s.std_reward == doctest::Approx(5.0));
  CHECK(s.failure_rate == doctest::Approx(0.5));
  CHECK(s.histogram[10] == 1);
  CHECK(s.histogram[0] == 1);
  CHECK(s.oracle_ratio == doctest::Approx(0.5));

  CHECK_THROWS_AS(summarize(std::span<const EpisodeResult>{}), EmptyInput);
}

TEST_CASE("histogram counts every episode") {
  Rng rng(8);
  std::vector<EpisodeResult> rs;
  for (int i = 0; i < 500; ++i) rs.push_back(result_with(rng.uniform() * 10.0));
  rs.push_back(result_with(10.0));
  const auto s = summarize(rs);
  std::size_t total = 0;
  for (auto n : s.histogram) total += n;
  CHECK(total == rs.size());
}

TEST_CASE("recorded actions replay to the logged reward") {
  const auto suite = tiny_suite();
  const auto specs = evaluation_specs(suite, suite.categories);
  Rng rng(4);
  const auto results = evaluate_policy(RandomPolicy{}, specs, {}, rng);
  REQUIRE(results.size() == specs.size());
  for (std::size_t i = 0; i < results.size(); ++i) {
    CHECK(replay_reward(*specs[i].scene, specs[i].start, results[i].actions) == results[i].reward);
    CHECK(results[i].reward <= results[i].oracle_value);
  }
  for (const auto& s : summarize_by_category(results)) CHECK(s.oracle_ratio <= 1.0);
}

TEST_CASE("metric files are byte stable across runs") {
  const auto suite = tiny_suite();
  const auto specs = evaluation_specs(suite, suite.categories);
  auto once = [&] {
    Rng rng(21);
    const auto results = evaluate_policy(RandomPolicy{}, specs, {}, rng);
    const auto sums = summarize_by_category(results);
    return results_csv(results) + summaries_csv(sums) + summaries_json(sums);
  };
  CHECK(once() == once());
}

TEST_CASE("summaries by category end with all") {
  std::vector<EpisodeResult> rs{result_with(1, Category::Trap), result_with(3, Category::Open)};
  const auto sums = summarize_by_category(rs);
  REQUIRE(sums.size() == 3);
  CHECK(sums[0].category == "open");
  CHECK(sums[1].category == "trap");
  CHECK(sums[2].category == "all");
  CHECK(sums[2].mean_reward == doctest::Approx(2.0));
}
