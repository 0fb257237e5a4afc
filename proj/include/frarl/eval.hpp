#pragma once

#include <string>
#include <vector>

#include "frarl/policy.hpp"
#include "frarl/sim.hpp"
#include "frarl/trainer.hpp"

namespace frarl::eval {

struct EvalRow {
  std::string method;
  std::string task;
  std::string scenario_set;
  int seeds = 1;
  long episodes = 0;
  double reverse_rate = 0.0;    // reversing episodes / episodes
  double collision_rate = 0.0;  // colliding episodes / episodes
  double mean_reward = 0.0;
  long sdv_steps = 0;  // total steps with gap < safe distance

  /// Raw per-episode outcomes so the aggregate is recomputable exactly.
  long reverse_episodes = 0;
  long collision_episodes = 0;
};

/// Deterministic-policy rollouts over a scenario set. Throws on an empty set.
EvalRow evaluate(const policy::PolicyParams& params, const std::vector<sim::Scenario>& scenarios,
                 trainer::Task task, const sim::SimConfig& cfg);

/// Averages rows from multiple seeds of one method/task/set cell.
EvalRow aggregate(const std::vector<EvalRow>& rows);

struct ComparisonCell {
  bool present = false;
  EvalRow row;
};

struct Comparison {
  std::vector<std::string> methods;
  std::vector<std::string> scenario_sets;
  std::vector<std::vector<ComparisonCell>> cells;  // [method][set]
  std::vector<std::string> missing;                // per-cell diagnostics
};

/// Reads final checkpoints from run directories (one per seed per method)
/// and evaluates each on each test set.
Comparison compare_methods(const std::vector<std::pair<std::string, std::vector<std::string>>>&
                               method_run_dirs,  // method name -> run dirs (seeds)
                           const std::vector<std::pair<std::string, std::vector<sim::Scenario>>>&
                               test_sets,  // set name -> scenarios
                           trainer::Task task, const sim::SimConfig& cfg);

/// Plain-text table; per-column minimum rates are bolded with '*'.
std::string render_table(const Comparison& c);
void export_comparison(const std::string& path, const Comparison& c);

struct CurvePoint {
  long step = 0;
  double mean = 0.0;
  double stddev = 0.0;
};

/// Windowed moving average per log, then mean +- std across seeds per step.
/// Logs must share the step axis.
std::vector<CurvePoint> learning_curve(const std::vector<std::vector<double>>& series,
                                       const std::vector<long>& steps, int window);

/// One file per metric (mean reward, safe-distance violations).
void emit_learning_curves(const std::vector<trainer::MetricsLog>& logs, int window,
                          const std::string& out_prefix);

}  // namespace frarl::eval
