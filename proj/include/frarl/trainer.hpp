#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "frarl/dataset.hpp"
#include "frarl/falsify.hpp"
#include "frarl/policy.hpp"
#include "frarl/sim.hpp"

namespace frarl::trainer {

enum class Task { BrakingAssist, AdaptiveCruise };

Task task_from_string(const std::string& s);
std::string to_string(Task t);

struct TrainConfig {
  Task task = Task::BrakingAssist;
  long total_steps = 300000;    // T
  long warmup_steps = 200000;   // t_f
  int n_actors = 4;             // n_a
  int steps_per_actor = 512;    // t_a
  int falsify_cadence = 10;     // protagonist iterations between falsifier calls
  int traces_per_falsify = 10;  // candidates requested per call
  int falsify_budget = 1000;    // simulations per call
  int rarl_protagonist_iters = 10;  // N_mu
  int rarl_adversary_iters = 1;     // N_nu
  int convergence_calls = 3;    // consecutive non-falsifying calls to stop falsification
  double falsified_mix = 0.5;   // share of episodes drawn from falsified scenarios
  double adversary_mix = 0.4;   // share of adversary-driven episodes in RARL
  int eval_cadence = 0;         // iterations between evaluation hooks; 0 disables
  int eval_scenarios = 100;
  int control_points = 10;      // K
  std::uint64_t seed = 0;
  std::string run_dir;          // empty: keep everything in memory

  sim::SimConfig sim;
  policy::PpoConfig ppo;
  falsify::CeConfig ce;
};

struct MetricsRow {
  long step = 0;
  double mean_reward = 0.0;
  long collisions = 0;
  long reverses = 0;
  long sdv_steps = 0;  // steps with gap < safe distance
};

using MetricsLog = std::vector<MetricsRow>;

void save_metrics(const std::string& path, const MetricsLog& log);
MetricsLog load_metrics(const std::string& path);

/// Supplies one scenario per episode reset.
class ScenarioStream {
 public:
  virtual ~ScenarioStream() = default;
  virtual sim::Scenario next() = 0;
};

class RandomStream : public ScenarioStream {
 public:
  RandomStream(sim::SimConfig cfg, std::uint64_t seed);
  sim::Scenario next() override;

 private:
  sim::SimConfig cfg_;
  std::mt19937_64 rng_;
};

class DatasetStream : public ScenarioStream {
 public:
  DatasetStream(std::vector<dataset::ProcessedSignal> pool, sim::SimConfig cfg,
                std::uint64_t seed);
  sim::Scenario next() override;

 private:
  std::vector<dataset::ProcessedSignal> pool_;
  sim::SimConfig cfg_;
  std::mt19937_64 rng_;
};

struct FalsifiedScenario {
  sim::Scenario scenario;
  double robustness = 0.0;
};

struct FalsifyEvent {
  long step = 0;
  double best_robustness = 0.0;
  int falsifying_candidates = 0;  // candidates with robustness < 0
  int simulations_used = 0;
};

struct TrainResult {
  policy::Checkpoint protagonist;
  std::optional<policy::Checkpoint> adversary;
  std::optional<policy::Checkpoint> warmup_checkpoint;
  MetricsLog metrics;
  MetricsLog eval_log;  // periodic deterministic evaluation, if enabled
  std::vector<FalsifyEvent> falsification_history;
  std::vector<FalsifiedScenario> falsified_scenarios;
};

TrainResult train_ppo(const TrainConfig& cfg, ScenarioStream& stream,
                      std::optional<policy::Checkpoint> resume = std::nullopt);

TrainResult train_rarl(const TrainConfig& cfg, ScenarioStream& stream,
                       std::optional<policy::Checkpoint> resume = std::nullopt);

TrainResult train_frarl(const TrainConfig& cfg, ScenarioStream& stream,
                        const mtl::Formula& spec,
                        std::optional<policy::Checkpoint> resume = std::nullopt);

/// Deterministic-policy rollout of one scenario, recorded as an MTL trace.
mtl::Trace rollout_scenario(const sim::Scenario& scenario, const policy::PolicyParams& params,
                            const sim::SimConfig& cfg);

/// Black-box rollout of the deterministic policy from a falsifier candidate.
mtl::Trace rollout_candidate(const falsify::Candidate& c, const falsify::SearchSpace& space,
                             const policy::PolicyParams& params, const sim::SimConfig& cfg);

}  // namespace frarl::trainer
