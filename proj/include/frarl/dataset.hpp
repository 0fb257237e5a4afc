#pragma once

#include <random>
#include <string>
#include <vector>

#include "frarl/sim.hpp"

namespace frarl::dataset {

/// Longitudinal signal of one lane-following vehicle at 25 Hz.
struct TrajectorySignal {
  long vehicle_id = 0;
  double v0 = 0.0;            // velocity at the first frame [m/s]
  std::vector<double> accel;  // per-frame acceleration [m/s^2]
};

struct SchemaError : std::runtime_error {
  SchemaError(const std::string& msg, long row, int column);
  long row;
  int column;
};

/// Reads a trajectory file (see write_trajectories for the schema), groups
/// rows by vehicle and drops vehicles whose lane id changes.
std::vector<TrajectorySignal> load_trajectories(const std::string& path);

struct ProcessedSignal {
  double v0 = 0.0;
  std::vector<double> accel;  // length 500: first 250 frames + reversed copy
};

struct ScenarioPoolSplit {
  std::vector<ProcessedSignal> train;
  std::vector<ProcessedSignal> test;
};

/// Keeps signals of length >= 250, truncates to 250, appends the reversed
/// copy, then splits 70/30 after a seeded shuffle.
ScenarioPoolSplit preprocess(const std::vector<TrajectorySignal>& signals, std::uint64_t seed);

/// Samples the remaining scenario freedoms (placement offset, ego velocity).
sim::Scenario make_scenario(const ProcessedSignal& sig, const sim::SimConfig& cfg,
                            std::mt19937_64& rng);

struct TrajectoryRow {
  long vehicle_id;
  long frame;
  int lane_id;
  double x;  // [m]
  double v;  // [m/s]
  double a;  // [m/s^2]
};

void write_trajectories(const std::string& path, const std::vector<TrajectoryRow>& rows);

/// Writes n lane-following trajectories: an intelligent-driver-model follower
/// behind a scripted leader, with bounded acceleration noise. Lengths are
/// drawn so the length-250 preprocessing filter keeps well over 60%.
void generate_synthetic_dataset(const std::string& path, int n, std::mt19937_64& rng,
                                const sim::SimConfig& cfg = {});

void save_pool(const std::string& path, const ScenarioPoolSplit& pool);
ScenarioPoolSplit load_pool(const std::string& path);

}  // namespace frarl::dataset
