#include "frarl/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace frarl::config {

namespace {

std::string trim(const std::string& s) {
  auto begin = s.find_first_not_of(" \t\r");
  auto end = s.find_last_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  return s.substr(begin, end - begin + 1);
}

struct Field {
  std::function<void(trainer::TrainConfig&, const std::string&)> set;
  std::function<std::string(const trainer::TrainConfig&)> get;
};

template <typename T>
std::string fmt(T v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

const std::map<std::string, Field>& fields() {
  using C = trainer::TrainConfig;
  static const std::map<std::string, Field> table = {
      {"task",
       {[](C& c, const std::string& v) { c.task = trainer::task_from_string(v); },
        [](const C& c) { return trainer::to_string(c.task); }}},
      {"total_steps",
       {[](C& c, const std::string& v) { c.total_steps = std::stol(v); },
        [](const C& c) { return fmt(c.total_steps); }}},
      {"warmup_steps",
       {[](C& c, const std::string& v) { c.warmup_steps = std::stol(v); },
        [](const C& c) { return fmt(c.warmup_steps); }}},
      {"n_actors",
       {[](C& c, const std::string& v) { c.n_actors = std::stoi(v); },
        [](const C& c) { return fmt(c.n_actors); }}},
      {"steps_per_actor",
       {[](C& c, const std::string& v) { c.steps_per_actor = std::stoi(v); },
        [](const C& c) { return fmt(c.steps_per_actor); }}},
      {"falsify_cadence",
       {[](C& c, const std::string& v) { c.falsify_cadence = std::stoi(v); },
        [](const C& c) { return fmt(c.falsify_cadence); }}},
      {"traces_per_falsify",
       {[](C& c, const std::string& v) { c.traces_per_falsify = std::stoi(v); },
        [](const C& c) { return fmt(c.traces_per_falsify); }}},
      {"falsify_budget",
       {[](C& c, const std::string& v) { c.falsify_budget = std::stoi(v); },
        [](const C& c) { return fmt(c.falsify_budget); }}},
      {"rarl_protagonist_iters",
       {[](C& c, const std::string& v) { c.rarl_protagonist_iters = std::stoi(v); },
        [](const C& c) { return fmt(c.rarl_protagonist_iters); }}},
      {"rarl_adversary_iters",
       {[](C& c, const std::string& v) { c.rarl_adversary_iters = std::stoi(v); },
        [](const C& c) { return fmt(c.rarl_adversary_iters); }}},
      {"convergence_calls",
       {[](C& c, const std::string& v) { c.convergence_calls = std::stoi(v); },
        [](const C& c) { return fmt(c.convergence_calls); }}},
      {"falsified_mix",
       {[](C& c, const std::string& v) { c.falsified_mix = std::stod(v); },
        [](const C& c) { return fmt(c.falsified_mix); }}},
      {"adversary_mix",
       {[](C& c, const std::string& v) { c.adversary_mix = std::stod(v); },
        [](const C& c) { return fmt(c.adversary_mix); }}},
      {"eval_cadence",
       {[](C& c, const std::string& v) { c.eval_cadence = std::stoi(v); },
        [](const C& c) { return fmt(c.eval_cadence); }}},
      {"eval_scenarios",
       {[](C& c, const std::string& v) { c.eval_scenarios = std::stoi(v); },
        [](const C& c) { return fmt(c.eval_scenarios); }}},
      {"control_points",
       {[](C& c, const std::string& v) { c.control_points = std::stoi(v); },
        [](const C& c) { return fmt(c.control_points); }}},
      {"seed",
       {[](C& c, const std::string& v) { c.seed = std::stoull(v); },
        [](const C& c) { return fmt(c.seed); }}},
      {"run_dir",
       {[](C& c, const std::string& v) { c.run_dir = v; },
        [](const C& c) { return c.run_dir; }}},
      // simulator
      {"sim.lane_length",
       {[](C& c, const std::string& v) { c.sim.lane_length = std::stod(v); },
        [](const C& c) { return fmt(c.sim.lane_length); }}},
      {"sim.max_steps",
       {[](C& c, const std::string& v) { c.sim.max_steps = std::stoi(v); },
        [](const C& c) { return fmt(c.sim.max_steps); }}},
      {"sim.dt",
       {[](C& c, const std::string& v) { c.sim.dt = std::stod(v); },
        [](const C& c) { return fmt(c.sim.dt); }}},
      {"sim.a_max",
       {[](C& c, const std::string& v) { c.sim.a_max = std::stod(v); },
        [](const C& c) { return fmt(c.sim.a_max); }}},
      {"sim.reaction_delay",
       {[](C& c, const std::string& v) { c.sim.reaction_delay = std::stod(v); },
        [](const C& c) { return fmt(c.sim.reaction_delay); }}},
      {"sim.ego_start",
       {[](C& c, const std::string& v) { c.sim.ego_start = std::stod(v); },
        [](const C& c) { return fmt(c.sim.ego_start); }}},
      {"sim.lead_offset_min",
       {[](C& c, const std::string& v) { c.sim.lead_offset_min = std::stod(v); },
        [](const C& c) { return fmt(c.sim.lead_offset_min); }}},
      {"sim.lead_offset_max",
       {[](C& c, const std::string& v) { c.sim.lead_offset_max = std::stod(v); },
        [](const C& c) { return fmt(c.sim.lead_offset_max); }}},
      {"sim.ego_v_min",
       {[](C& c, const std::string& v) { c.sim.ego_v_min = std::stod(v); },
        [](const C& c) { return fmt(c.sim.ego_v_min); }}},
      {"sim.ego_v_max",
       {[](C& c, const std::string& v) { c.sim.ego_v_max = std::stod(v); },
        [](const C& c) { return fmt(c.sim.ego_v_max); }}},
      {"sim.lead_v_min",
       {[](C& c, const std::string& v) { c.sim.lead_v_min = std::stod(v); },
        [](const C& c) { return fmt(c.sim.lead_v_min); }}},
      {"sim.lead_v_max",
       {[](C& c, const std::string& v) { c.sim.lead_v_max = std::stod(v); },
        [](const C& c) { return fmt(c.sim.lead_v_max); }}},
      {"sim.random_accel_min",
       {[](C& c, const std::string& v) { c.sim.random_accel_min = std::stod(v); },
        [](const C& c) { return fmt(c.sim.random_accel_min); }}},
      {"sim.random_accel_max",
       {[](C& c, const std::string& v) { c.sim.random_accel_max = std::stod(v); },
        [](const C& c) { return fmt(c.sim.random_accel_max); }}},
      {"sim.random_segment_steps",
       {[](C& c, const std::string& v) { c.sim.random_segment_steps = std::stoi(v); },
        [](const C& c) { return fmt(c.sim.random_segment_steps); }}},
      // PPO
      {"ppo.clip_range",
       {[](C& c, const std::string& v) { c.ppo.clip_range = std::stod(v); },
        [](const C& c) { return fmt(c.ppo.clip_range); }}},
      {"ppo.value_coef",
       {[](C& c, const std::string& v) { c.ppo.value_coef = std::stod(v); },
        [](const C& c) { return fmt(c.ppo.value_coef); }}},
      {"ppo.gamma",
       {[](C& c, const std::string& v) { c.ppo.gamma = std::stod(v); },
        [](const C& c) { return fmt(c.ppo.gamma); }}},
      {"ppo.lambda",
       {[](C& c, const std::string& v) { c.ppo.lambda = std::stod(v); },
        [](const C& c) { return fmt(c.ppo.lambda); }}},
      {"ppo.learning_rate",
       {[](C& c, const std::string& v) { c.ppo.learning_rate = std::stod(v); },
        [](const C& c) { return fmt(c.ppo.learning_rate); }}},
      {"ppo.minibatch_size",
       {[](C& c, const std::string& v) { c.ppo.minibatch_size = std::stoi(v); },
        [](const C& c) { return fmt(c.ppo.minibatch_size); }}},
      {"ppo.epochs",
       {[](C& c, const std::string& v) { c.ppo.epochs = std::stoi(v); },
        [](const C& c) { return fmt(c.ppo.epochs); }}},
      {"ppo.normalize_advantages",
       {[](C& c, const std::string& v) { c.ppo.normalize_advantages = (v == "true" || v == "1"); },
        [](const C& c) { return c.ppo.normalize_advantages ? "true" : "false"; }}},
      {"ppo.anneal_lr",
       {[](C& c, const std::string& v) { c.ppo.anneal_lr = (v == "true" || v == "1"); },
        [](const C& c) { return c.ppo.anneal_lr ? "true" : "false"; }}},
      // cross-entropy falsifier
      {"ce.samples_per_iter",
       {[](C& c, const std::string& v) { c.ce.samples_per_iter = std::stoi(v); },
        [](const C& c) { return fmt(c.ce.samples_per_iter); }}},
      {"ce.elite_fraction",
       {[](C& c, const std::string& v) { c.ce.elite_fraction = std::stod(v); },
        [](const C& c) { return fmt(c.ce.elite_fraction); }}},
      {"ce.smoothing",
       {[](C& c, const std::string& v) { c.ce.smoothing = std::stod(v); },
        [](const C& c) { return fmt(c.ce.smoothing); }}},
      {"ce.max_iters",
       {[](C& c, const std::string& v) { c.ce.max_iters = std::stoi(v); },
        [](const C& c) { return fmt(c.ce.max_iters); }}},
      {"ce.std_floor",
       {[](C& c, const std::string& v) { c.ce.std_floor = std::stod(v); },
        [](const C& c) { return fmt(c.ce.std_floor); }}},
      {"ce.std_tolerance",
       {[](C& c, const std::string& v) { c.ce.std_tolerance = std::stod(v); },
        [](const C& c) { return fmt(c.ce.std_tolerance); }}},
  };
  return table;
}

}  // namespace

void apply_override(trainer::TrainConfig& cfg, const std::string& key, const std::string& value) {
  auto it = fields().find(key);
  if (it == fields().end()) {
    throw std::invalid_argument("unknown config key: " + key);
  }
  it->second.set(cfg, value);
}

trainer::TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open config file: " + path);
  }
  trainer::TrainConfig cfg;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected key = value");
    }
    apply_override(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

void save_config(const std::string& path, const trainer::TrainConfig& cfg) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot open config file for writing: " + path);
  }
  for (const auto& [key, field] : fields()) {
    out << key << " = " << field.get(cfg) << "\n";
  }
}

}  // namespace frarl::config
