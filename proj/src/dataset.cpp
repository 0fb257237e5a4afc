#include "frarl/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace frarl::dataset {

namespace {

const char* kHeader = "vehicle_id,frame,lane_id,x_position,x_velocity,x_acceleration";

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  return out;
}

}  // namespace

SchemaError::SchemaError(const std::string& msg, long row_, int column_)
    : std::runtime_error(msg + " (row " + std::to_string(row_) + ", column " +
                         std::to_string(column_) + ")"),
      row(row_),
      column(column_) {}

std::vector<TrajectorySignal> load_trajectories(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open trajectory file: " + path);
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw SchemaError("missing header row", 0, 0);
  }
  if (line != kHeader) {
    throw SchemaError("unexpected header, want '" + std::string(kHeader) + "'", 0, 0);
  }

  struct Pending {
    TrajectorySignal signal;
    int lane_id = 0;
    bool lane_changed = false;
    bool started = false;
  };

  std::vector<TrajectorySignal> result;
  Pending cur;
  long row = 0;
  auto flush = [&]() {
    if (cur.started && !cur.lane_changed) {
      result.push_back(std::move(cur.signal));
    }
    cur = Pending{};
  };

  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    auto fields = split_csv(line);
    if (fields.size() != 6) {
      throw SchemaError("expected 6 columns, got " + std::to_string(fields.size()), row,
                        static_cast<int>(fields.size()));
    }
    TrajectoryRow r;
    try {
      r.vehicle_id = std::stol(fields[0]);
      r.frame = std::stol(fields[1]);
      r.lane_id = std::stoi(fields[2]);
      r.x = std::stod(fields[3]);
      r.v = std::stod(fields[4]);
      r.a = std::stod(fields[5]);
    } catch (const std::exception&) {
      throw SchemaError("non-numeric field", row, 0);
    }
    if (!cur.started || r.vehicle_id != cur.signal.vehicle_id) {
      flush();
      cur.started = true;
      cur.signal.vehicle_id = r.vehicle_id;
      cur.signal.v0 = r.v;
      cur.lane_id = r.lane_id;
    }
    if (r.lane_id != cur.lane_id) {
      cur.lane_changed = true;  // lane-changing vehicles are excluded
    }
    cur.signal.accel.push_back(r.a);
  }
  flush();
  return result;
}

ScenarioPoolSplit preprocess(const std::vector<TrajectorySignal>& signals, std::uint64_t seed) {
  constexpr std::size_t kCut = 250;
  std::vector<ProcessedSignal> pool;
  for (const auto& sig : signals) {
    if (sig.accel.size() < kCut) continue;
    ProcessedSignal p;
    p.v0 = sig.v0;
    p.accel.assign(sig.accel.begin(), sig.accel.begin() + kCut);
    p.accel.insert(p.accel.end(), p.accel.rbegin(), p.accel.rend());
    pool.push_back(std::move(p));
  }
  std::mt19937_64 rng(seed);
  std::shuffle(pool.begin(), pool.end(), rng);
  std::size_t n_train = pool.size() * 7 / 10;
  ScenarioPoolSplit split;
  split.train.assign(pool.begin(), pool.begin() + n_train);
  split.test.assign(pool.begin() + n_train, pool.end());
  return split;
}

sim::Scenario make_scenario(const ProcessedSignal& sig, const sim::SimConfig& cfg,
                            std::mt19937_64& rng) {
  std::uniform_real_distribution<double> offset_dist(cfg.lead_offset_min, cfg.lead_offset_max);
  std::uniform_real_distribution<double> ego_v_dist(cfg.ego_v_min, cfg.ego_v_max);
  sim::Scenario s;
  s.source = sim::ScenarioSource::Dataset;
  s.lead_offset = offset_dist(rng);
  s.ego_v0 = ego_v_dist(rng);
  s.lead_v0 = std::max(0.0, sig.v0);
  s.lead_accel = sig.accel;
  for (double& a : s.lead_accel) a = std::clamp(a, -cfg.a_max, cfg.a_max);
  s.lead_accel.resize(cfg.max_steps, 0.0);
  return s;
}

void write_trajectories(const std::string& path, const std::vector<TrajectoryRow>& rows) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot open trajectory file for writing: " + path);
  }
  out.precision(17);
  out << kHeader << "\n";
  for (const auto& r : rows) {
    out << r.vehicle_id << "," << r.frame << "," << r.lane_id << "," << r.x << "," << r.v << ","
        << r.a << "\n";
  }
}

namespace {

/// Intelligent-driver-model acceleration of the follower.
double idm_accel(double v, double v_desired, double gap, double dv) {
  constexpr double kMaxAccel = 1.5;   // [m/s^2]
  constexpr double kComfortBrake = 2.0;
  constexpr double kMinGap = 2.0;     // [m]
  constexpr double kHeadway = 1.5;    // [s]
  double s_star = kMinGap + std::max(0.0, v * kHeadway +
                                              v * dv / (2.0 * std::sqrt(kMaxAccel * kComfortBrake)));
  double ratio = v / std::max(1e-6, v_desired);
  return kMaxAccel * (1.0 - std::pow(ratio, 4) - (s_star / std::max(0.1, gap)) * (s_star / std::max(0.1, gap)));
}

}  // namespace

void generate_synthetic_dataset(const std::string& path, int n, std::mt19937_64& rng,
                                const sim::SimConfig& cfg) {
  if (n < 1) {
    throw std::invalid_argument("need n >= 1 trajectories");
  }
  std::uniform_int_distribution<int> length_dist(150, 600);
  std::uniform_real_distribution<double> lead_v_dist(18.0, 32.0);
  std::uniform_real_distribution<double> gap_dist(15.0, 60.0);
  std::uniform_real_distribution<double> desired_dist(20.0, 35.0);
  std::uniform_real_distribution<double> lead_level_dist(-2.0, 2.0);
  std::normal_distribution<double> noise(0.0, 0.05);

  std::vector<TrajectoryRow> rows;
  for (int vid = 1; vid <= n; ++vid) {
    int length = length_dist(rng);
    double v_lead = lead_v_dist(rng);
    double gap = gap_dist(rng);
    double v_desired = desired_dist(rng);
    double v = std::min(v_lead + 2.0, v_desired);
    double x = 0.0;
    double x_lead = gap;
    double lead_level = lead_level_dist(rng);
    for (int frame = 0; frame < length; ++frame) {
      if (frame % 50 == 0) lead_level = lead_level_dist(rng);
      double a = idm_accel(v, v_desired, x_lead - x, v - v_lead) + noise(rng);
      a = std::clamp(a, -cfg.a_max, cfg.a_max);
      rows.push_back({vid, frame, 2, x, v, a});
      v = std::max(0.0, v + a * cfg.dt);
      x += v * cfg.dt;
      v_lead = std::max(0.0, v_lead + lead_level * cfg.dt);
      x_lead += v_lead * cfg.dt;
    }
  }
  write_trajectories(path, rows);
}

void save_pool(const std::string& path, const ScenarioPoolSplit& pool) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot open pool file for writing: " + path);
  }
  out.precision(17);
  out << "frarl-pool v1\n";
  auto dump = [&](const char* name, const std::vector<ProcessedSignal>& sigs) {
    out << name << " " << sigs.size() << "\n";
    for (const auto& s : sigs) {
      out << s.v0;
      for (double a : s.accel) out << " " << a;
      out << "\n";
    }
  };
  dump("train", pool.train);
  dump("test", pool.test);
}

ScenarioPoolSplit load_pool(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open pool file: " + path);
  }
  std::string line;
  if (!std::getline(in, line) || line != "frarl-pool v1") {
    throw std::runtime_error("bad pool header in " + path);
  }
  ScenarioPoolSplit pool;
  auto read_section = [&](const char* name, std::vector<ProcessedSignal>& out) {
    std::string tag;
    std::size_t count = 0;
    in >> tag >> count;
    if (tag != name) {
      throw std::runtime_error("bad pool section '" + tag + "' in " + path);
    }
    out.resize(count);
    for (auto& sig : out) {
      in >> sig.v0;
      sig.accel.resize(500);
      for (double& a : sig.accel) in >> a;
    }
  };
  read_section("train", pool.train);
  read_section("test", pool.test);
  if (!in) {
    throw std::runtime_error("truncated pool file: " + path);
  }
  return pool;
}

}  // namespace frarl::dataset
