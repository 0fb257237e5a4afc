#include "frarl/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace frarl::sim {

std::string to_string(ScenarioSource s) {
  switch (s) {
    case ScenarioSource::Dataset:
      return "dataset";
    case ScenarioSource::Random:
      return "random";
    case ScenarioSource::Falsified:
      return "falsified";
    case ScenarioSource::Adversary:
      return "adversary";
  }
  return "unknown";
}

ScenarioSource scenario_source_from_string(const std::string& s) {
  if (s == "dataset") return ScenarioSource::Dataset;
  if (s == "random") return ScenarioSource::Random;
  if (s == "falsified") return ScenarioSource::Falsified;
  if (s == "adversary") return ScenarioSource::Adversary;
  throw std::invalid_argument("unknown scenario source: " + s);
}

std::string to_string(Termination t) {
  switch (t) {
    case Termination::None:
      return "none";
    case Termination::LaneEnd:
      return "lane-end";
    case Termination::MaxSteps:
      return "max-steps";
    case Termination::Collision:
      return "collision";
    case Termination::Reverse:
      return "reverse";
  }
  return "unknown";
}

Observation observe(const SimState& st) {
  return {st.gap(), st.v_ego - st.v_lead, st.v_ego, st.a_lead, st.a_ego};
}

double safe_distance(double v_follow, double v_lead, const SimConfig& cfg) {
  double raw = (v_follow * v_follow - v_lead * v_lead) / (2.0 * cfg.a_max) +
               v_follow * cfg.reaction_delay;
  return std::max(0.0, raw);
}

double reward_ba(const SimState& st) {
  if (st.cause == Termination::Collision || st.cause == Termination::Reverse) {
    return -1.0;
  }
  return 0.0;
}

double reward_acc(const SimState& st, const SimConfig& cfg) {
  if (st.cause == Termination::Collision || st.cause == Termination::Reverse) {
    return -1.0;
  }
  double s = st.gap();
  double s_safe = safe_distance(st.v_ego, st.v_lead, cfg);
  if (s < s_safe) {
    return -0.1 * std::exp(-5.0 * s / s_safe);
  }
  if (st.v_ego < st.v_lead) {
    return -0.05 * std::exp(-5.0 * st.v_ego / st.v_lead);
  }
  return 0.0;
}

Environment::Environment(SimConfig cfg) : cfg_(cfg) {}

Observation Environment::reset(const Scenario& scenario) {
  if (static_cast<int>(scenario.lead_accel.size()) != cfg_.max_steps) {
    throw std::invalid_argument("scenario acceleration trace length " +
                                std::to_string(scenario.lead_accel.size()) +
                                " does not match max_steps " + std::to_string(cfg_.max_steps));
  }
  scenario_ = scenario;
  state_ = SimState{};
  state_.x_ego = cfg_.ego_start;
  state_.v_ego = scenario.ego_v0;
  state_.v_lead = scenario.lead_v0;
  state_.x_lead = cfg_.ego_start + safe_distance(scenario.ego_v0, scenario.lead_v0, cfg_) +
                  scenario.lead_offset;
  trace_.dt = cfg_.dt;
  trace_.records.clear();
  if (record_trace_) record();
  return observe(state_);
}

StepResult Environment::step(double ego_accel, std::optional<double> leader_accel) {
  if (done()) {
    throw std::logic_error("step() called on a terminated episode");
  }
  double a_ego = std::clamp(ego_accel, -cfg_.a_max, cfg_.a_max);
  double a_lead = leader_accel ? *leader_accel : scenario_.lead_accel[state_.step];
  a_lead = std::clamp(a_lead, -cfg_.a_max, cfg_.a_max);

  // semi-implicit Euler, leader velocity floored at 0
  state_.a_ego = a_ego;
  state_.a_lead = a_lead;
  state_.v_ego += a_ego * cfg_.dt;
  state_.v_lead = std::max(0.0, state_.v_lead + a_lead * cfg_.dt);
  state_.x_ego += state_.v_ego * cfg_.dt;
  state_.x_lead += state_.v_lead * cfg_.dt;
  state_.step += 1;

  if (state_.gap() <= 0.0) {
    state_.cause = Termination::Collision;
  } else if (state_.v_ego < 0.0) {
    state_.cause = Termination::Reverse;
  } else if (state_.x_lead >= cfg_.lane_length) {
    state_.cause = Termination::LaneEnd;
  } else if (state_.step >= cfg_.max_steps) {
    state_.cause = Termination::MaxSteps;
  }

  if (record_trace_) record();
  return {observe(state_), done(), state_.cause};
}

void Environment::record() {
  mtl::TraceRecord r;
  r.gap = state_.gap();
  r.v_ego = state_.v_ego;
  r.v_lead = state_.v_lead;
  r.a_ego = state_.a_ego;
  r.a_lead = state_.a_lead;
  r.x_ego = state_.x_ego;
  r.x_lead = state_.x_lead;
  trace_.records.push_back(r);
}

Scenario generate_random_scenario(std::mt19937_64& rng, const SimConfig& cfg) {
  std::uniform_real_distribution<double> offset_dist(cfg.lead_offset_min, cfg.lead_offset_max);
  std::uniform_real_distribution<double> lead_v_dist(cfg.lead_v_min, cfg.lead_v_max);
  std::uniform_real_distribution<double> ego_v_dist(cfg.ego_v_min, cfg.ego_v_max);
  std::uniform_real_distribution<double> level_dist(cfg.random_accel_min, cfg.random_accel_max);

  Scenario s;
  s.source = ScenarioSource::Random;
  s.lead_offset = offset_dist(rng);
  s.lead_v0 = lead_v_dist(rng);
  s.ego_v0 = ego_v_dist(rng);
  s.lead_accel.resize(cfg.max_steps);
  for (int i = 0; i < cfg.max_steps; i += cfg.random_segment_steps) {
    double level = level_dist(rng);
    int end = std::min(i + cfg.random_segment_steps, cfg.max_steps);
    for (int j = i; j < end; ++j) s.lead_accel[j] = level;
  }
  return s;
}

mtl::PredicateRegistry driving_predicates(const SimConfig& cfg) {
  // Largest initial gap reachable under the scenario bounds; used to put
  // gap [m] and velocity [m/s] margins on a common scale.
  double gap_scale =
      cfg.lead_offset_max + safe_distance(cfg.ego_v_max, cfg.lead_v_min, cfg);
  double v_scale = cfg.ego_v_max;

  mtl::PredicateRegistry reg;
  // collision holds when the gap is closed: signed distance = -gap
  reg.add({"collision", [gap_scale](const mtl::TraceRecord& r) { return -r.gap / gap_scale; }});
  // reverse holds when the ego moves backwards: signed distance = -v_ego
  reg.add({"reverse", [v_scale](const mtl::TraceRecord& r) { return -r.v_ego / v_scale; }});
  return reg;
}

mtl::FormulaPtr safety_specification(const SimConfig& cfg) {
  return mtl::parse_formula("G (!collision & !reverse)", driving_predicates(cfg));
}

void save_scenario(const std::string& path, const Scenario& s) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot open scenario file for writing: " + path);
  }
  out.precision(17);
  out << "frarl-scenario v1\n";
  out << "source=" << to_string(s.source) << "\n";
  out << "offset=" << s.lead_offset << "\n";
  out << "lead_v0=" << s.lead_v0 << "\n";
  out << "ego_v0=" << s.ego_v0 << "\n";
  for (double a : s.lead_accel) {
    out << a << "\n";
  }
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open scenario file: " + path);
  }
  std::string line;
  if (!std::getline(in, line) || line != "frarl-scenario v1") {
    throw std::runtime_error("bad scenario header in " + path);
  }
  Scenario s;
  while (std::getline(in, line)) {
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      if (!line.empty()) s.lead_accel.push_back(std::stod(line));
      continue;
    }
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    if (key == "source") {
      s.source = scenario_source_from_string(value);
    } else if (key == "offset") {
      s.lead_offset = std::stod(value);
    } else if (key == "lead_v0") {
      s.lead_v0 = std::stod(value);
    } else if (key == "ego_v0") {
      s.ego_v0 = std::stod(value);
    } else {
      throw std::runtime_error("unknown scenario key '" + key + "' in " + path);
    }
  }
  return s;
}

}  // namespace frarl::sim
