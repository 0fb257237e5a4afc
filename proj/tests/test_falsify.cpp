#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "frarl/falsify.hpp"
#include "oracles.hpp"

using namespace frarl;

namespace {

falsify::SearchSpace toy_space() {
  falsify::SearchSpace space;
  space.trace_dims = 1;
  space.dims = {{"x", 0.0, 1.0}, {"y", -1.0, 1.0}, {"z", 10.0, 20.0}};
  return space;
}

/// Robustness of the returned single-record trace is exactly f(candidate).
falsify::RolloutFn scalar_system(double (*f)(const falsify::Candidate&)) {
  return [f](const falsify::Candidate& c) {
    mtl::Trace tr;
    tr.dt = 1.0;
    mtl::TraceRecord r;
    r.gap = f(c);
    tr.records.push_back(r);
    return tr;
  };
}

mtl::FormulaPtr gap_atom() {
  return mtl::make_atom({"gap", [](const mtl::TraceRecord& r) { return r.gap; }});
}

}  // namespace

TEST_CASE("search space validation") {
  auto space = toy_space();
  CHECK_NOTHROW(space.validate());
  space.dims[0].hi = space.dims[0].lo;
  CHECK_THROWS_AS(space.validate(), std::invalid_argument);
  space = toy_space();
  space.trace_dims = 2;
  CHECK_THROWS_AS(space.validate(), std::invalid_argument);

  sim::SimConfig cfg;
  auto drive = falsify::driving_search_space(cfg, 10);
  CHECK(drive.size() == 12);
  CHECK(drive.trace_dims == 10);
  CHECK(drive.dims[0].lo == -cfg.a_max);
  CHECK(drive.dims[10].name == "lead_offset");
  CHECK(drive.dims[11].hi == cfg.lead_v_max);
}

TEST_CASE("decode then encode round-trips the control points") {
  sim::SimConfig cfg;
  std::mt19937_64 rng(3);
  for (int k : {1, 2, 3, 10}) {
    auto space = falsify::driving_search_space(cfg, k);
    for (int trial = 0; trial < 20; ++trial) {
      falsify::Candidate c(space.size());
      for (std::size_t d = 0; d < space.size(); ++d) {
        std::uniform_real_distribution<double> u(space.dims[d].lo, space.dims[d].hi);
        c[d] = u(rng);
      }
      auto scenario = falsify::decode_candidate(c, space, cfg);
      CHECK(scenario.lead_accel.size() == 500);
      CHECK(scenario.source == sim::ScenarioSource::Falsified);
      auto back = falsify::encode_scenario(scenario, space, cfg);
      REQUIRE(back.size() == c.size());
      for (std::size_t d = 0; d < c.size(); ++d) {
        CHECK(back[d] == doctest::Approx(c[d]).epsilon(1e-12));
      }
      // interpolation stays within the control-point hull
      double lo = *std::min_element(c.begin(), c.begin() + k);
      double hi = *std::max_element(c.begin(), c.begin() + k);
      for (double a : scenario.lead_accel) {
        CHECK(a >= lo - 1e-12);
        CHECK(a <= hi + 1e-12);
      }
    }
  }
}

TEST_CASE("initial distribution and bounded sampling") {
  auto space = toy_space();
  auto dist = falsify::CeDistribution::from_space(space);
  CHECK(dist.mean[0] == 0.5);
  CHECK(dist.mean[2] == 15.0);
  CHECK(dist.stddev[0] == doctest::Approx(1.0 / std::sqrt(12.0)).epsilon(1e-12));

  std::mt19937_64 rng(5);
  auto samples = falsify::sample_candidates(dist, 1000, rng);
  REQUIRE(samples.size() == 1000);
  double mean0 = 0.0;
  for (const auto& c : samples) {
    for (std::size_t d = 0; d < space.size(); ++d) {
      CHECK(c[d] >= space.dims[d].lo);
      CHECK(c[d] <= space.dims[d].hi);
    }
    mean0 += c[0];
  }
  CHECK(mean0 / 1000.0 == doctest::Approx(0.5).epsilon(0.1));

  std::mt19937_64 r1(9), r2(9);
  CHECK(falsify::sample_candidates(dist, 10, r1) == falsify::sample_candidates(dist, 10, r2));

  // a distribution squeezed against the bounds still samples in-bounds
  dist.mean[1] = 1.0;
  dist.stddev[1] = 5.0;
  auto edge = falsify::sample_candidates(dist, 200, rng);
  for (const auto& c : edge) {
    CHECK(c[1] >= -1.0);
    CHECK(c[1] <= 1.0);
  }

  CHECK_THROWS_AS(falsify::sample_candidates(dist, 0, rng), std::invalid_argument);
}

TEST_CASE("ce_update blends elite statistics") {
  falsify::CeDistribution dist;
  dist.mean = {5.0};
  dist.stddev = {2.0};
  dist.lo = {0.0};
  dist.hi = {10.0};

  std::vector<falsify::ScoredCandidate> scored;
  for (int i = 1; i <= 10; ++i) {
    scored.push_back({{static_cast<double>(i)}, static_cast<double>(i)});
  }

  SUBCASE("full smoothing takes the elite mean") {
    // elites are x=2 and x=4 (lowest robustness after reordering)
    std::vector<falsify::ScoredCandidate> pair = {{{4.0}, 0.4}, {{9.0}, 9.0}, {{2.0}, 0.2}};
    auto out = falsify::ce_update(dist, pair, 0.5, 1.0);
    CHECK(out.mean[0] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(out.stddev[0] == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("zero smoothing is the identity") {
    auto out = falsify::ce_update(dist, scored, 0.2, 0.0);
    CHECK(out.mean[0] == 5.0);
    CHECK(out.stddev[0] == 2.0);
  }
  SUBCASE("elite count is the ceiling") {
    // 0.25 * 10 -> ceil = 3: elites {1,2,3}, mean 2
    auto out = falsify::ce_update(dist, scored, 0.25, 1.0);
    CHECK(out.mean[0] == doctest::Approx(2.0).epsilon(1e-12));
  }
  SUBCASE("whole-sample fit with elite fraction one") {
    auto out = falsify::ce_update(dist, scored, 1.0, 1.0);
    CHECK(out.mean[0] == doctest::Approx(5.5).epsilon(1e-12));
  }
  SUBCASE("degenerate elites hit the std floor") {
    std::vector<falsify::ScoredCandidate> same = {{{3.0}, 0.0}, {{3.0}, 0.0}};
    auto out = falsify::ce_update(dist, same, 1.0, 1.0, 1e-3);
    CHECK(out.stddev[0] == 1e-3);
    CHECK(out.mean[0] == 3.0);
  }
  SUBCASE("invalid arguments are rejected") {
    CHECK_THROWS_AS(falsify::ce_update(dist, {}, 0.5, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(falsify::ce_update(dist, scored, 0.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(falsify::ce_update(dist, scored, 0.5, 1.5), std::invalid_argument);
  }
}

TEST_CASE("scalar CE run converges to the minimizer") {
  // minimize (x - 0.7)^2 on [0, 1]
  falsify::CeDistribution dist;
  dist.mean = {0.5};
  dist.stddev = {1.0 / std::sqrt(12.0)};
  dist.lo = {0.0};
  dist.hi = {1.0};
  std::mt19937_64 rng(7);
  for (int iter = 0; iter < 20; ++iter) {
    auto samples = falsify::sample_candidates(dist, 100, rng);
    std::vector<falsify::ScoredCandidate> scored;
    for (auto& c : samples) {
      double x = c[0];
      scored.push_back({std::move(c), (x - 0.7) * (x - 0.7)});
    }
    dist = falsify::ce_update(dist, std::move(scored), 0.1, 0.7);
  }
  CHECK(std::abs(dist.mean[0] - 0.7) < 0.02);
}

TEST_CASE("falsify tracks the running best and respects the budget") {
  auto space = toy_space();
  // positive everywhere: never falsified
  auto system = scalar_system([](const falsify::Candidate& c) {
    return 1.0 + c[0] * c[0] + c[1] * c[1];
  });
  falsify::CeConfig cfg;
  cfg.samples_per_iter = 20;
  std::mt19937_64 rng(11);
  auto result = falsify::falsify(system, *gap_atom(), space, 130, cfg, rng);
  CHECK_FALSE(result.falsified);
  CHECK(result.best.robustness >= 1.0);
  CHECK(result.simulations_used <= 130);
  double prev = mtl::kTop;
  for (const auto& it : result.history) {
    CHECK(it.best_robustness <= prev);
    prev = it.best_robustness;
  }
  for (const auto& t : result.top) {
    for (std::size_t d = 0; d < space.size(); ++d) {
      CHECK(t.x[d] >= space.dims[d].lo);
      CHECK(t.x[d] <= space.dims[d].hi);
    }
  }
  CHECK(result.top.size() <= static_cast<std::size_t>(cfg.top_n));

  CHECK_THROWS_AS(falsify::falsify(system, *gap_atom(), space, 10, cfg, rng),
                  std::invalid_argument);
}

TEST_CASE("falsify stops early once a violation is found") {
  auto space = toy_space();
  // negative whenever y < 0: falsified almost immediately
  auto system = scalar_system([](const falsify::Candidate& c) { return c[1]; });
  falsify::CeConfig cfg;
  cfg.samples_per_iter = 10;
  std::mt19937_64 rng(13);
  auto result = falsify::falsify(system, *gap_atom(), space, 1000, cfg, rng);
  CHECK(result.falsified);
  CHECK(result.best.robustness < 0.0);
  CHECK(result.simulations_used == 10);

  cfg.stop_on_falsified = false;
  cfg.std_tolerance = 0.0;  // keep the search alive for the full budget
  std::mt19937_64 rng2(13);
  auto full = falsify::falsify(system, *gap_atom(), space, 200, cfg, rng2);
  CHECK(full.falsified);
  CHECK(full.simulations_used == 200);
}

TEST_CASE("specification 'true' is never falsified") {
  auto space = toy_space();
  auto system = scalar_system([](const falsify::Candidate&) { return -100.0; });
  falsify::CeConfig cfg;
  cfg.samples_per_iter = 10;
  std::mt19937_64 rng(17);
  auto t = mtl::make_true();
  auto result = falsify::falsify(system, *t, space, 100, cfg, rng);
  CHECK_FALSE(result.falsified);
  CHECK(result.best.robustness == mtl::kTop);
  auto uniform = falsify::uniform_falsify(system, *t, space, 100, cfg, rng);
  CHECK_FALSE(uniform.falsified);
  CHECK(uniform.best.robustness == mtl::kTop);
}

TEST_CASE("simulator failures carry the offending candidate") {
  auto space = toy_space();
  falsify::RolloutFn broken = [](const falsify::Candidate&) -> mtl::Trace {
    throw std::runtime_error("vehicle model exploded");
  };
  falsify::CeConfig cfg;
  cfg.samples_per_iter = 5;
  std::mt19937_64 rng(19);
  try {
    falsify::falsify(broken, *gap_atom(), space, 50, cfg, rng);
    FAIL("expected RolloutError");
  } catch (const falsify::RolloutError& e) {
    CHECK(e.candidate.size() == space.size());
  }
}

TEST_CASE("falsification report lists one row per iteration") {
  auto space = toy_space();
  auto system = scalar_system([](const falsify::Candidate& c) { return 1.0 + c[0]; });
  falsify::CeConfig cfg;
  cfg.samples_per_iter = 10;
  cfg.max_iters = 3;
  std::mt19937_64 rng(23);
  auto result = falsify::falsify(system, *gap_atom(), space, 30, cfg, rng);
  std::string path = "test_falsify_report.csv";
  falsify::write_report(path, result, space);
  std::ifstream in(path);
  std::string header;
  REQUIRE(std::getline(in, header));
  CHECK(header ==
        "iteration,best_robustness,mean_robustness,x_mean,x_std,y_mean,y_std,z_mean,z_std");
  int rows = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) ++rows;
  }
  CHECK(rows == static_cast<int>(result.history.size()));
  std::remove(path.c_str());
}

TEST_CASE("a constant-velocity ego is falsified, a perfect braker is not") {
  sim::SimConfig cfg;
  auto space = falsify::driving_search_space(cfg, 10);
  auto spec = sim::safety_specification(cfg);
  falsify::CeConfig ce;

  std::mt19937_64 rng(29);
  auto naive = falsify::falsify(
      test_oracles::controller_rollout_fn(test_oracles::constant_velocity_accel, space, cfg),
      *spec, space, 2000, ce, rng);
  CHECK(naive.falsified);

  std::mt19937_64 rng2(29);
  auto safe = falsify::falsify(
      test_oracles::controller_rollout_fn(test_oracles::perfect_braking_accel, space, cfg),
      *spec, space, 2000, ce, rng2);
  CHECK_FALSE(safe.falsified);
  CHECK(safe.best.robustness >= 0.0);
}
