#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <random>

#include "frarl/config.hpp"
#include "frarl/dataset.hpp"
#include "frarl/eval.hpp"
#include "frarl/falsify.hpp"
#include "frarl/trainer.hpp"

namespace fs = std::filesystem;
using namespace frarl;

namespace {

std::vector<sim::Scenario> random_set(int n, std::uint64_t seed, const sim::SimConfig& cfg) {
  std::mt19937_64 rng(seed);
  std::vector<sim::Scenario> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.push_back(sim::generate_random_scenario(rng, cfg));
  return out;
}

std::vector<sim::Scenario> pool_test_set(const std::string& pool_path, std::uint64_t seed,
                                         const sim::SimConfig& cfg, int limit) {
  auto pool = dataset::load_pool(pool_path);
  std::mt19937_64 rng(seed);
  std::vector<sim::Scenario> out;
  for (const auto& sig : pool.test) {
    if (limit > 0 && static_cast<int>(out.size()) >= limit) break;
    out.push_back(dataset::make_scenario(sig, cfg, rng));
  }
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open file: " + path);
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run(int argc, char** argv) {
  CLI::App app{"Falsification-based adversarial RL lab for longitudinal driving"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic trajectory dataset");
  std::string gen_out = "trajectories.csv";
  int gen_n = 1000;
  std::uint64_t gen_seed = 0;
  gen->add_option("--out", gen_out, "Output trajectory file");
  gen->add_option("--n", gen_n, "Number of vehicles")->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "RNG seed");

  // preprocess
  auto* prep = app.add_subcommand("preprocess", "Filter, extend and split trajectories");
  std::string prep_in, prep_out = "pool.txt";
  std::uint64_t prep_seed = 0;
  prep->add_option("--in", prep_in, "Input trajectory file")->required();
  prep->add_option("--out", prep_out, "Output scenario pool");
  prep->add_option("--seed", prep_seed, "Shuffle seed");

  // train
  auto* train = app.add_subcommand("train", "Train a policy");
  std::string method = "ppo", task_name = "ba", config_path, run_dir, pool_path, resume_path;
  std::uint64_t train_seed = 0;
  bool seed_given = false;
  std::vector<std::string> overrides;
  train->add_option("--method", method, "ppo | rarl | frarl")
      ->check(CLI::IsMember({"ppo", "rarl", "frarl"}));
  train->add_option("--task", task_name, "ba | acc")->check(CLI::IsMember({"ba", "acc"}));
  train->add_option_function<std::uint64_t>(
      "--seed",
      [&](const std::uint64_t& v) {
        train_seed = v;
        seed_given = true;
      },
      "RNG seed (overrides config)");
  train->add_option("--config", config_path, "Key-value config file");
  train->add_option("--run-dir", run_dir, "Run directory for logs and checkpoints");
  train->add_option("--pool", pool_path, "Scenario pool (train split); random scenarios if unset");
  train->add_option("--resume", resume_path, "Checkpoint to resume from");
  train->add_option("--set", overrides, "Config overrides, key=value")->take_all();

  // falsify
  auto* fals = app.add_subcommand("falsify", "Falsify a trained policy");
  std::string f_ckpt, f_spec, f_report, f_scenario_dir, f_config;
  int f_budget = 1000;
  std::uint64_t f_seed = 0;
  bool f_uniform = false;
  fals->add_option("--checkpoint", f_ckpt, "Policy checkpoint")->required();
  fals->add_option("--spec", f_spec, "MTL specification file (text formula)")->required();
  fals->add_option("--budget", f_budget, "Max simulations")->check(CLI::PositiveNumber);
  fals->add_option("--report", f_report, "Per-iteration report file");
  fals->add_option("--scenario-dir", f_scenario_dir, "Directory for the best candidate scenarios");
  fals->add_option("--config", f_config, "Key-value config file");
  fals->add_option("--seed", f_seed, "RNG seed");
  fals->add_flag("--uniform", f_uniform, "Use the uniform-sampling baseline");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Evaluate a checkpoint on a scenario set");
  std::string e_ckpt, e_task = "ba", e_pool, e_out;
  int e_n = 500;
  std::uint64_t e_seed = 0;
  ev->add_option("--checkpoint", e_ckpt, "Policy checkpoint")->required();
  ev->add_option("--task", e_task, "ba | acc")->check(CLI::IsMember({"ba", "acc"}));
  ev->add_option("--pool", e_pool, "Scenario pool; uses its test split instead of random");
  ev->add_option("--n", e_n, "Number of scenarios")->check(CLI::PositiveNumber);
  ev->add_option("--seed", e_seed, "Scenario seed");
  ev->add_option("--out", e_out, "CSV export path");

  // compare
  auto* cmp = app.add_subcommand("compare", "Compare trained methods on test sets");
  std::vector<std::string> cmp_runs;
  std::string cmp_task = "ba", cmp_pool, cmp_out;
  int cmp_n = 500;
  std::uint64_t cmp_seed = 0;
  cmp->add_option("--runs", cmp_runs, "method=dir1,dir2,... (repeatable)")->required();
  cmp->add_option("--task", cmp_task, "ba | acc")->check(CLI::IsMember({"ba", "acc"}));
  cmp->add_option("--pool", cmp_pool, "Scenario pool for a dataset-test column");
  cmp->add_option("--n", cmp_n, "Random test scenarios")->check(CLI::PositiveNumber);
  cmp->add_option("--seed", cmp_seed, "Scenario seed");
  cmp->add_option("--out", cmp_out, "CSV export path");

  // curves
  auto* cur = app.add_subcommand("curves", "Aggregate metrics logs into learning curves");
  std::vector<std::string> cur_logs;
  int cur_window = 10;
  std::string cur_prefix = "curve_";
  cur->add_option("--logs", cur_logs, "Metrics CSV files (one per seed)")->required();
  cur->add_option("--window", cur_window, "Smoothing window in iterations")
      ->check(CLI::PositiveNumber);
  cur->add_option("--out-prefix", cur_prefix, "Output file prefix");

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) {
    std::mt19937_64 rng(gen_seed);
    dataset::generate_synthetic_dataset(gen_out, gen_n, rng);
    std::cout << "wrote " << gen_n << " trajectories to " << gen_out << "\n";
    return 0;
  }

  if (prep->parsed()) {
    auto signals = dataset::load_trajectories(prep_in);
    auto pool = dataset::preprocess(signals, prep_seed);
    dataset::save_pool(prep_out, pool);
    std::cout << "loaded " << signals.size() << " trajectories, kept "
              << pool.train.size() + pool.test.size() << " (train " << pool.train.size()
              << ", test " << pool.test.size() << ") -> " << prep_out << "\n";
    return 0;
  }

  if (train->parsed()) {
    trainer::TrainConfig cfg;
    if (!config_path.empty()) cfg = config::load_config(config_path);
    cfg.task = trainer::task_from_string(task_name);
    if (seed_given) cfg.seed = train_seed;
    if (!run_dir.empty()) cfg.run_dir = run_dir;
    for (const auto& kv : overrides) {
      auto eq = kv.find('=');
      if (eq == std::string::npos) {
        throw CLI::ValidationError("--set expects key=value, got '" + kv + "'");
      }
      config::apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!cfg.run_dir.empty()) {
      fs::create_directories(cfg.run_dir);
      config::save_config((fs::path(cfg.run_dir) / "config.txt").string(), cfg);
    }
    std::optional<policy::Checkpoint> resume;
    if (!resume_path.empty()) resume = policy::load_checkpoint(resume_path);

    std::unique_ptr<trainer::ScenarioStream> stream;
    if (pool_path.empty()) {
      stream = std::make_unique<trainer::RandomStream>(cfg.sim, cfg.seed);
    } else {
      auto pool = dataset::load_pool(pool_path);
      stream = std::make_unique<trainer::DatasetStream>(std::move(pool.train), cfg.sim, cfg.seed);
    }

    trainer::TrainResult result;
    if (method == "ppo") {
      result = trainer::train_ppo(cfg, *stream, resume);
    } else if (method == "rarl") {
      result = trainer::train_rarl(cfg, *stream, resume);
    } else {
      auto spec = sim::safety_specification(cfg.sim);
      result = trainer::train_frarl(cfg, *stream, *spec, resume);
    }
    std::cout << "trained " << method << " for " << result.protagonist.global_step
              << " steps over " << result.metrics.size() << " iterations\n";
    if (!result.metrics.empty()) {
      const auto& last = result.metrics.back();
      std::cout << "final iteration: mean reward " << last.mean_reward << ", collisions "
                << last.collisions << ", reverses " << last.reverses << "\n";
    }
    return 0;
  }

  if (fals->parsed()) {
    trainer::TrainConfig cfg;
    if (!f_config.empty()) cfg = config::load_config(f_config);
    auto ckpt = policy::load_checkpoint(f_ckpt);
    auto preds = sim::driving_predicates(cfg.sim);
    auto spec = mtl::parse_formula(read_file(f_spec), preds);
    auto space = falsify::driving_search_space(cfg.sim, cfg.control_points);
    falsify::CeConfig ce = cfg.ce;
    ce.top_n = cfg.traces_per_falsify;
    std::mt19937_64 rng(f_seed);
    auto system = [&](const falsify::Candidate& c) {
      return trainer::rollout_candidate(c, space, ckpt.params, cfg.sim);
    };
    auto result = f_uniform
                      ? falsify::uniform_falsify(system, *spec, space, f_budget, ce, rng)
                      : falsify::falsify(system, *spec, space, f_budget, ce, rng);
    std::cout << (result.falsified ? "FALSIFIED" : "not falsified") << ": best robustness "
              << result.best.robustness << " after " << result.simulations_used
              << " simulations\n";
    if (!f_report.empty()) {
      falsify::write_report(f_report, result, space);
    }
    if (!f_scenario_dir.empty()) {
      fs::create_directories(f_scenario_dir);
      for (std::size_t i = 0; i < result.top.size(); ++i) {
        auto scenario = falsify::decode_candidate(result.top[i].x, space, cfg.sim);
        sim::save_scenario(
            (fs::path(f_scenario_dir) / ("scenario_" + std::to_string(i) + ".txt")).string(),
            scenario);
      }
    }
    return 0;
  }

  if (ev->parsed()) {
    sim::SimConfig sim_cfg;
    auto ckpt = policy::load_checkpoint(e_ckpt);
    auto scenarios = e_pool.empty() ? random_set(e_n, e_seed, sim_cfg)
                                    : pool_test_set(e_pool, e_seed, sim_cfg, e_n);
    auto row = eval::evaluate(ckpt.params, scenarios, trainer::task_from_string(e_task), sim_cfg);
    row.method = e_ckpt;
    row.scenario_set = e_pool.empty() ? "random" : "dataset-test";
    std::cout << "episodes " << row.episodes << ", reverse rate " << row.reverse_rate
              << ", collision rate " << row.collision_rate << ", mean reward " << row.mean_reward
              << ", safe-distance violation steps " << row.sdv_steps << "\n";
    if (!e_out.empty()) {
      eval::Comparison c;
      c.methods = {row.method};
      c.scenario_sets = {row.scenario_set};
      c.cells = {{{true, row}}};
      eval::export_comparison(e_out, c);
    }
    return 0;
  }

  if (cmp->parsed()) {
    sim::SimConfig sim_cfg;
    std::vector<std::pair<std::string, std::vector<std::string>>> runs;
    for (const auto& spec : cmp_runs) {
      auto eq = spec.find('=');
      if (eq == std::string::npos) {
        throw CLI::ValidationError("--runs expects method=dir1,dir2, got '" + spec + "'");
      }
      std::vector<std::string> dirs;
      std::istringstream ss(spec.substr(eq + 1));
      std::string dir;
      while (std::getline(ss, dir, ',')) {
        if (!dir.empty()) dirs.push_back(dir);
      }
      runs.emplace_back(spec.substr(0, eq), std::move(dirs));
    }
    std::vector<std::pair<std::string, std::vector<sim::Scenario>>> sets;
    if (!cmp_pool.empty()) {
      sets.emplace_back("dataset-test", pool_test_set(cmp_pool, cmp_seed, sim_cfg, cmp_n));
    }
    sets.emplace_back("random-test", random_set(cmp_n, cmp_seed, sim_cfg));
    auto cmp_result =
        eval::compare_methods(runs, sets, trainer::task_from_string(cmp_task), sim_cfg);
    std::cout << eval::render_table(cmp_result);
    if (!cmp_out.empty()) {
      eval::export_comparison(cmp_out, cmp_result);
    }
    return 0;
  }

  if (cur->parsed()) {
    std::vector<trainer::MetricsLog> logs;
    for (const auto& path : cur_logs) {
      logs.push_back(trainer::load_metrics(path));
    }
    eval::emit_learning_curves(logs, cur_window, cur_prefix);
    std::cout << "wrote " << cur_prefix << "episode_reward.csv and " << cur_prefix
              << "safe_distance_violations.csv\n";
    return 0;
  }

  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const CLI::Error& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
