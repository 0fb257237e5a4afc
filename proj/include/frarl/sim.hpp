#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "frarl/mtl.hpp"

namespace frarl::sim {

struct SimConfig {
  double lane_length = 600.0;   // [m]
  int max_steps = 500;
  double dt = 0.04;             // [s] 25 Hz
  double a_max = 10.0;          // [m/s^2] max |acceleration| for both vehicles
  double reaction_delay = 0.3;  // [s]
  double ego_start = 10.0;      // [m]
  double lead_offset_min = 0.0;   // [m] beyond the safe distance
  double lead_offset_max = 40.0;  // [m]
  double ego_v_min = 15.0;  // [m/s]
  double ego_v_max = 35.0;  // [m/s]
  double lead_v_min = 15.0;  // [m/s]
  double lead_v_max = 35.0;  // [m/s]
  double random_accel_min = -5.0;  // [m/s^2] random-scenario leader levels
  double random_accel_max = 5.0;
  int random_segment_steps = 25;
};

enum class ScenarioSource { Dataset, Random, Falsified, Adversary };

std::string to_string(ScenarioSource s);
ScenarioSource scenario_source_from_string(const std::string& s);

struct Scenario {
  ScenarioSource source = ScenarioSource::Random;
  double lead_offset = 0.0;  // initial gap beyond the safe distance [m]
  double lead_v0 = 20.0;     // [m/s]
  double ego_v0 = 20.0;      // [m/s]
  std::vector<double> lead_accel;  // one value per step [m/s^2]
};

enum class Termination { None, LaneEnd, MaxSteps, Collision, Reverse };

std::string to_string(Termination t);

struct SimState {
  double x_ego = 0.0;
  double v_ego = 0.0;
  double a_ego = 0.0;
  double x_lead = 0.0;
  double v_lead = 0.0;
  double a_lead = 0.0;
  int step = 0;
  Termination cause = Termination::None;

  double gap() const { return x_lead - x_ego; }
};

using Observation = std::array<double, 5>;  // s, v_ego - v_lead, v_ego, a_lead, a_ego

Observation observe(const SimState& st);

/// Minimum gap for collision-free emergency braking of the follower,
/// floored at zero.
double safe_distance(double v_follow, double v_lead, const SimConfig& cfg);

double reward_ba(const SimState& st);
double reward_acc(const SimState& st, const SimConfig& cfg);
inline double adversary_reward(double protagonist_reward) { return -protagonist_reward; }

struct StepResult {
  Observation obs{};
  bool done = false;
  Termination cause = Termination::None;
};

/// Two point-mass vehicles on a straight lane; the leader follows the
/// scenario's acceleration trace unless a per-step override is supplied
/// (adversary-driven mode). Single-threaded; one instance per actor.
class Environment {
 public:
  explicit Environment(SimConfig cfg = {});

  /// Rejects scenarios whose acceleration trace length differs from
  /// max_steps by throwing std::invalid_argument.
  Observation reset(const Scenario& scenario);

  /// Advances one step. `leader_accel` overrides the scenario trace when set.
  /// Calling after termination throws std::logic_error.
  StepResult step(double ego_accel, std::optional<double> leader_accel = std::nullopt);

  const SimState& state() const { return state_; }
  const SimConfig& config() const { return cfg_; }
  const Scenario& scenario() const { return scenario_; }
  bool done() const { return state_.cause != Termination::None; }

  /// Records the post-step state each step when enabled; reset clears it.
  void set_trace_recording(bool on) { record_trace_ = on; }
  const mtl::Trace& trace() const { return trace_; }

 private:
  void record();

  SimConfig cfg_;
  Scenario scenario_;
  SimState state_;
  bool record_trace_ = false;
  mtl::Trace trace_;
};

/// Piecewise-constant leader acceleration, uniform offset and velocities.
Scenario generate_random_scenario(std::mt19937_64& rng, const SimConfig& cfg);

/// Predicates for the shipped safety specification
/// "G (!collision & !reverse)". Distances are normalized by the signal
/// ranges reachable under the scenario bounds so gap [m] and velocity [m/s]
/// are commensurable under min/max.
mtl::PredicateRegistry driving_predicates(const SimConfig& cfg);

/// The shipped safety specification over driving_predicates().
mtl::FormulaPtr safety_specification(const SimConfig& cfg);

void save_scenario(const std::string& path, const Scenario& s);
Scenario load_scenario(const std::string& path);

}  // namespace frarl::sim
