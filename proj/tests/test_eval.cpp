#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "frarl/eval.hpp"

using namespace frarl;
namespace fs = std::filesystem;

namespace {

std::vector<sim::Scenario> random_set(int n, std::uint64_t seed, const sim::SimConfig& cfg) {
  std::mt19937_64 rng(seed);
  std::vector<sim::Scenario> out;
  for (int i = 0; i < n; ++i) out.push_back(sim::generate_random_scenario(rng, cfg));
  return out;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("evaluation rejects an empty scenario set") {
  policy::PolicyParams p;
  CHECK_THROWS_AS(eval::evaluate(p, {}, trainer::Task::BrakingAssist, {}),
                  std::invalid_argument);
}

TEST_CASE("evaluation counts episodes and is deterministic") {
  sim::SimConfig cfg;
  auto scenarios = random_set(20, 3, cfg);
  policy::PolicyParams p;  // zero policy holds its speed
  auto a = eval::evaluate(p, scenarios, trainer::Task::BrakingAssist, cfg);
  auto b = eval::evaluate(p, scenarios, trainer::Task::BrakingAssist, cfg);
  CHECK(a.episodes == 20);
  CHECK(a.collision_rate == b.collision_rate);
  CHECK(a.mean_reward == b.mean_reward);
  CHECK(a.sdv_steps == b.sdv_steps);
  CHECK(a.collision_rate ==
        static_cast<double>(a.collision_episodes) / static_cast<double>(a.episodes));
  CHECK(a.reverse_rate >= 0.0);
  CHECK(a.reverse_rate <= 1.0);
  // braking-assist rewards are non-positive
  CHECK(a.mean_reward <= 0.0);
}

TEST_CASE("aggregation averages rates and sums violation steps") {
  eval::EvalRow r1, r2;
  r1.episodes = r2.episodes = 100;
  r1.collision_rate = 0.1;
  r2.collision_rate = 0.3;
  r1.reverse_rate = 0.0;
  r2.reverse_rate = 0.2;
  r1.mean_reward = -1.0;
  r2.mean_reward = -3.0;
  r1.sdv_steps = 10;
  r2.sdv_steps = 30;
  auto agg = eval::aggregate({r1, r2});
  CHECK(agg.seeds == 2);
  CHECK(agg.collision_rate == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(agg.reverse_rate == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(agg.mean_reward == doctest::Approx(-2.0).epsilon(1e-12));
  CHECK(agg.sdv_steps == 40);
  CHECK_THROWS_AS(eval::aggregate({}), std::invalid_argument);
}

TEST_CASE("method comparison reads run directories and flags gaps") {
  sim::SimConfig cfg;
  fs::create_directories("test_eval_run_a");
  policy::Checkpoint ckpt;
  ckpt.adam = policy::AdamState::init();
  policy::save_checkpoint("test_eval_run_a/ckpt.bin", ckpt);

  auto sets = std::vector<std::pair<std::string, std::vector<sim::Scenario>>>{
      {"random-test", random_set(5, 7, cfg)}};
  auto cmp = eval::compare_methods({{"zero", {"test_eval_run_a"}}, {"ghost", {"no_such_dir"}}},
                                   sets, trainer::Task::BrakingAssist, cfg);
  REQUIRE(cmp.methods.size() == 2);
  CHECK(cmp.cells[0][0].present);
  CHECK_FALSE(cmp.cells[1][0].present);
  CHECK(!cmp.missing.empty());

  auto table = eval::render_table(cmp);
  CHECK(table.find("zero") != std::string::npos);
  CHECK(table.find("missing") != std::string::npos);

  std::string out = "test_eval_cmp.csv";
  eval::export_comparison(out, cmp);
  auto c1 = slurp(out);
  eval::export_comparison(out, cmp);
  CHECK(slurp(out) == c1);  // byte-identical re-export
  CHECK(c1.find("zero,ba,random-test") != std::string::npos);
  std::remove(out.c_str());
  fs::remove_all("test_eval_run_a");
}

TEST_CASE("learning curves: trivial cases") {
  std::vector<long> steps{10, 20, 30};

  SUBCASE("single series, window 1 is the identity") {
    auto curve = eval::learning_curve({{1.0, 2.0, 3.0}}, steps, 1);
    REQUIRE(curve.size() == 3);
    CHECK(curve[1].step == 20);
    CHECK(curve[1].mean == 2.0);
    CHECK(curve[1].stddev == 0.0);
  }
  SUBCASE("trailing window averages the recent points") {
    auto curve = eval::learning_curve({{1.0, 2.0, 3.0}}, steps, 2);
    CHECK(curve[0].mean == 1.0);  // shorter prefix window
    CHECK(curve[1].mean == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(curve[2].mean == doctest::Approx(2.5).epsilon(1e-12));
  }
  SUBCASE("cross-seed mean and std") {
    auto curve = eval::learning_curve({{1.0, 1.0, 1.0}, {3.0, 3.0, 3.0}}, steps, 1);
    CHECK(curve[0].mean == 2.0);
    CHECK(curve[0].stddev == 1.0);
  }
  SUBCASE("mismatched axes are rejected") {
    CHECK_THROWS_AS(eval::learning_curve({{1.0, 2.0}}, steps, 1), std::invalid_argument);
    CHECK_THROWS_AS(eval::learning_curve({}, steps, 1), std::invalid_argument);
    CHECK_THROWS_AS(eval::learning_curve({{1.0, 2.0, 3.0}}, steps, 0), std::invalid_argument);
  }
}

TEST_CASE("curve files are emitted per metric and are reproducible") {
  trainer::MetricsLog log1 = {{64, -1.0, 1, 0, 5}, {128, -0.5, 0, 0, 3}};
  trainer::MetricsLog log2 = {{64, -2.0, 2, 1, 9}, {128, -1.5, 1, 0, 7}};
  eval::emit_learning_curves({log1, log2}, 1, "test_eval_curve_");
  auto reward = slurp("test_eval_curve_episode_reward.csv");
  auto sdv = slurp("test_eval_curve_safe_distance_violations.csv");
  CHECK(reward.rfind("step,mean,std\n", 0) == 0);
  CHECK(sdv.rfind("step,mean,std\n", 0) == 0);
  CHECK(reward.find("64,") != std::string::npos);

  eval::emit_learning_curves({log1, log2}, 1, "test_eval_curve2_");
  CHECK(slurp("test_eval_curve2_episode_reward.csv") == reward);
  std::remove("test_eval_curve_episode_reward.csv");
  std::remove("test_eval_curve_safe_distance_violations.csv");
  std::remove("test_eval_curve2_episode_reward.csv");
  std::remove("test_eval_curve2_safe_distance_violations.csv");
}
