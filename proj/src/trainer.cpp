#include "frarl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

namespace frarl::trainer {

namespace {

// fixed offsets so the rng streams stay independent yet reproducible
constexpr std::uint64_t kInitStream = 0x1db3u;
constexpr std::uint64_t kActionStream = 0x9c37u;
constexpr std::uint64_t kUpdateStream = 0x5b21u;
constexpr std::uint64_t kAdvInitStream = 0x71f9u;
constexpr std::uint64_t kFalsifyStream = 0xe4adu;
constexpr std::uint64_t kEvalStream = 0x3d0bu;
constexpr std::uint64_t kMixStream = 0xa627u;
constexpr std::uint64_t kAdvMixStream = 0xc451u;

// adversary decision period in simulator steps (1 s at 25 Hz)
constexpr int kAdvHold = 25;

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{seed, stream};
  return std::mt19937_64(seq);
}

double task_reward(Task task, const sim::SimState& st, const sim::SimConfig& cfg) {
  return task == Task::BrakingAssist ? sim::reward_ba(st) : sim::reward_acc(st, cfg);
}

// full rate through warm-up, then linear decay to zero at the step budget;
// resumed runs pick up mid-schedule
double lr_schedule(const TrainConfig& cfg, long step) {
  if (!cfg.ppo.anneal_lr || step <= cfg.warmup_steps || cfg.total_steps <= cfg.warmup_steps) {
    return 1.0;
  }
  double frac = 1.0 - static_cast<double>(step - cfg.warmup_steps) /
                          static_cast<double>(cfg.total_steps - cfg.warmup_steps);
  return std::max(frac, 0.0);
}

}  // namespace

Task task_from_string(const std::string& s) {
  if (s == "ba") return Task::BrakingAssist;
  if (s == "acc") return Task::AdaptiveCruise;
  throw std::invalid_argument("unknown task '" + s + "', expected ba or acc");
}

std::string to_string(Task t) {
  return t == Task::BrakingAssist ? "ba" : "acc";
}

void save_metrics(const std::string& path, const MetricsLog& log) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot open metrics file for writing: " + path);
  }
  out.precision(17);
  out << "step,mean_reward,collisions,reverses,safe_distance_violation_steps\n";
  for (const auto& r : log) {
    out << r.step << "," << r.mean_reward << "," << r.collisions << "," << r.reverses << ","
        << r.sdv_steps << "\n";
  }
}

MetricsLog load_metrics(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open metrics file: " + path);
  }
  std::string line;
  if (!std::getline(in, line) ||
      line != "step,mean_reward,collisions,reverses,safe_distance_violation_steps") {
    throw std::runtime_error("bad metrics header in " + path);
  }
  MetricsLog log;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    MetricsRow r;
    char comma;
    std::istringstream ss(line);
    ss >> r.step >> comma >> r.mean_reward >> comma >> r.collisions >> comma >> r.reverses >>
        comma >> r.sdv_steps;
    if (!ss) {
      throw std::runtime_error("bad metrics row in " + path + ": " + line);
    }
    log.push_back(r);
  }
  return log;
}

RandomStream::RandomStream(sim::SimConfig cfg, std::uint64_t seed)
    : cfg_(cfg), rng_(stream_rng(seed, 0x72616e64u)) {}

sim::Scenario RandomStream::next() { return sim::generate_random_scenario(rng_, cfg_); }

DatasetStream::DatasetStream(std::vector<dataset::ProcessedSignal> pool, sim::SimConfig cfg,
                             std::uint64_t seed)
    : pool_(std::move(pool)), cfg_(cfg), rng_(stream_rng(seed, 0x64617461u)) {
  if (pool_.empty()) {
    throw std::invalid_argument("dataset scenario pool is empty");
  }
}

sim::Scenario DatasetStream::next() {
  std::uniform_int_distribution<std::size_t> pick(0, pool_.size() - 1);
  return dataset::make_scenario(pool_[pick(rng_)], cfg_, rng_);
}

namespace {

/// Draws falsified scenarios with probability `mix` once any exist;
/// otherwise passes the base stream through untouched.
class MixingStream : public ScenarioStream {
 public:
  MixingStream(ScenarioStream& base, const std::vector<FalsifiedScenario>& falsified, double mix,
               std::uint64_t seed)
      : base_(base), falsified_(falsified), mix_(mix), rng_(stream_rng(seed, kMixStream)) {}

  sim::Scenario next() override {
    if (!falsified_.empty()) {
      std::uniform_real_distribution<double> coin(0.0, 1.0);
      if (coin(rng_) < mix_) {
        std::uniform_int_distribution<std::size_t> pick(0, falsified_.size() - 1);
        return falsified_[pick(rng_)].scenario;
      }
    }
    return base_.next();
  }

 private:
  ScenarioStream& base_;
  const std::vector<FalsifiedScenario>& falsified_;
  double mix_;
  std::mt19937_64 rng_;
};

enum class Role { Ego, Leader };

/// Owns the actor environments and the PPO update path. Episodes persist
/// across iterations; role decides which side of the zero-sum pair is
/// optimized this iteration.
class PpoDriver {
 public:
  PpoDriver(const TrainConfig& cfg, ScenarioStream& stream)
      : cfg_(cfg),
        stream_(stream),
        act_rng_(stream_rng(cfg.seed, kActionStream)),
        update_rng_(stream_rng(cfg.seed, kUpdateStream)),
        adv_mix_rng_(stream_rng(cfg.seed, kAdvMixStream)) {
    envs_.reserve(cfg.n_actors);
    for (int i = 0; i < cfg.n_actors; ++i) {
      envs_.emplace_back(cfg.sim);
    }
    obs_.resize(cfg.n_actors);
    episode_reward_.assign(cfg.n_actors, 0.0);
    need_reset_.assign(cfg.n_actors, true);
    adversary_episode_.assign(cfg.n_actors, 0);
    episode_step_.assign(cfg.n_actors, 0);
    adv_action_.assign(cfg.n_actors, 0.0);
  }

  // lr_scale applies the per-iteration learning-rate schedule
  MetricsRow run_iteration(policy::PolicyParams& params, policy::AdamState& adam, Role role,
                           const policy::PolicyParams* frozen_other, double lr_scale = 1.0) {
    const int t_a = cfg_.steps_per_actor;
    const int n_a = cfg_.n_actors;
    if (role == Role::Leader && frozen_other == nullptr) {
      throw std::invalid_argument("adversary training needs a frozen protagonist");
    }

    MetricsRow row{};
    std::vector<policy::Sample> samples;
    samples.reserve(static_cast<std::size_t>(t_a) * n_a);
    std::vector<double> completed;

    for (int actor = 0; actor < n_a; ++actor) {
      std::vector<double> rewards, values;
      std::vector<std::uint8_t> dones;
      rewards.reserve(t_a);
      values.reserve(t_a);
      dones.reserve(t_a);
      std::size_t offset = samples.size();
      auto& env = envs_[actor];

      for (int step = 0; step < t_a; ++step) {
        if (need_reset_[actor]) {
          obs_[actor] = env.reset(stream_.next());
          need_reset_[actor] = false;
          episode_reward_[actor] = 0.0;
          // adversary episodes mix with nominal ones at the same ratio as
          // falsified scenarios, so nominal behavior is not forgotten
          if (role == Role::Ego && frozen_other != nullptr) {
            std::uniform_real_distribution<double> coin(0.0, 1.0);
            adversary_episode_[actor] = coin(adv_mix_rng_) < cfg_.adversary_mix ? 1 : 0;
          } else {
            adversary_episode_[actor] = 1;
          }
          episode_step_[actor] = 0;
        }
        policy::Features obs = obs_[actor];
        double value = policy::forward(params, obs).value;
        auto act = policy::sample_action(params, obs, act_rng_);

        // the adversary acts at 1 Hz with a zero-order hold: white per-step
        // acceleration noise integrates to no velocity change, so finer
        // control never produces a learning signal
        double r = 0.0;
        bool done = false;
        if (role == Role::Ego) {
          std::optional<double> lead;
          if (frozen_other != nullptr && adversary_episode_[actor]) {
            if (episode_step_[actor] % kAdvHold == 0) {
              adv_action_[actor] = policy::sample_action(*frozen_other, obs, act_rng_).action;
            }
            lead = adv_action_[actor];
          }
          auto res = env.step(act.action, lead);
          const auto& st = env.state();
          r = task_reward(cfg_.task, st, cfg_.sim);
          if (st.gap() < sim::safe_distance(st.v_ego, st.v_lead, cfg_.sim)) row.sdv_steps += 1;
          if (st.cause == sim::Termination::Collision) row.collisions += 1;
          if (st.cause == sim::Termination::Reverse) row.reverses += 1;
          episode_step_[actor] += 1;
          done = res.done;
          if (!done) obs_[actor] = res.obs;
        } else {
          // one adversary decision spans a hold window; the frozen
          // protagonist keeps acting stochastically at every step
          policy::Features cur = obs;
          for (int k = 0; k < kAdvHold && !done; ++k) {
            double ego = policy::sample_action(*frozen_other, cur, act_rng_).action;
            auto res = env.step(ego, act.action);
            const auto& st = env.state();
            r += sim::adversary_reward(task_reward(cfg_.task, st, cfg_.sim));
            if (st.gap() < sim::safe_distance(st.v_ego, st.v_lead, cfg_.sim)) row.sdv_steps += 1;
            if (st.cause == sim::Termination::Collision) row.collisions += 1;
            if (st.cause == sim::Termination::Reverse) row.reverses += 1;
            done = res.done;
            if (!done) cur = res.obs;
          }
          if (!done) obs_[actor] = cur;
        }

        episode_reward_[actor] += r;
        samples.push_back({obs, act.action, act.log_prob, 0.0, 0.0});
        rewards.push_back(r);
        values.push_back(value);
        dones.push_back(done ? 1 : 0);
        if (done) {
          completed.push_back(episode_reward_[actor]);
          need_reset_[actor] = true;
        }
      }

      double bootstrap = need_reset_[actor] ? 0.0 : policy::forward(params, obs_[actor]).value;
      auto gae = policy::compute_gae(rewards, values, dones, bootstrap, cfg_.ppo.gamma,
                                     cfg_.ppo.lambda);
      for (int i = 0; i < t_a; ++i) {
        samples[offset + i].advantage = gae.advantages[i];
        samples[offset + i].value_target = gae.value_targets[i];
      }
    }

    if (cfg_.ppo.normalize_advantages) {
      double mean = 0.0;
      for (const auto& s : samples) mean += s.advantage;
      mean /= static_cast<double>(samples.size());
      double var = 0.0;
      for (const auto& s : samples) var += (s.advantage - mean) * (s.advantage - mean);
      double stddev = std::sqrt(var / static_cast<double>(samples.size()));
      for (auto& s : samples) s.advantage = (s.advantage - mean) / (stddev + 1e-8);
    }

    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<policy::Sample> minibatch;
    minibatch.reserve(cfg_.ppo.minibatch_size);
    for (int epoch = 0; epoch < cfg_.ppo.epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), update_rng_);
      for (std::size_t start = 0; start < order.size();
           start += static_cast<std::size_t>(cfg_.ppo.minibatch_size)) {
        std::size_t end = std::min(order.size(),
                                   start + static_cast<std::size_t>(cfg_.ppo.minibatch_size));
        minibatch.clear();
        for (std::size_t i = start; i < end; ++i) minibatch.push_back(samples[order[i]]);
        auto lg = policy::ppo_loss_grad(params, minibatch, cfg_.ppo);
        policy::adam_step(adam, params, lg.grad, lr_scale * cfg_.ppo.learning_rate);
      }
    }

    row.mean_reward = completed.empty()
                          ? 0.0
                          : std::accumulate(completed.begin(), completed.end(), 0.0) /
                                static_cast<double>(completed.size());
    return row;
  }

 private:
  TrainConfig cfg_;
  ScenarioStream& stream_;
  std::mt19937_64 act_rng_;
  std::mt19937_64 update_rng_;
  std::mt19937_64 adv_mix_rng_;
  std::vector<sim::Environment> envs_;
  std::vector<policy::Features> obs_;
  std::vector<double> episode_reward_;
  std::vector<std::uint8_t> need_reset_;
  std::vector<std::uint8_t> adversary_episode_;
  std::vector<int> episode_step_;
  std::vector<double> adv_action_;
};

/// Deterministic rollouts on a fixed random scenario set, for the periodic
/// evaluation hook.
class EvalHook {
 public:
  EvalHook(const TrainConfig& cfg) : cfg_(cfg) {
    if (cfg.eval_cadence <= 0) return;
    auto rng = stream_rng(cfg.seed, kEvalStream);
    for (int i = 0; i < cfg.eval_scenarios; ++i) {
      scenarios_.push_back(sim::generate_random_scenario(rng, cfg.sim));
    }
  }

  bool enabled() const { return !scenarios_.empty(); }

  MetricsRow run(const policy::PolicyParams& params, long step) const {
    MetricsRow row{};
    row.step = step;
    double reward_sum = 0.0;
    sim::Environment env(cfg_.sim);
    for (const auto& sc : scenarios_) {
      auto obs = env.reset(sc);
      double ep_reward = 0.0;
      while (!env.done()) {
        double a = policy::forward(params, obs).mean;
        obs = env.step(a).obs;
        const auto& st = env.state();
        ep_reward += task_reward(cfg_.task, st, cfg_.sim);
        if (st.gap() < sim::safe_distance(st.v_ego, st.v_lead, cfg_.sim)) row.sdv_steps += 1;
        if (st.cause == sim::Termination::Collision) row.collisions += 1;
        if (st.cause == sim::Termination::Reverse) row.reverses += 1;
      }
      reward_sum += ep_reward;
    }
    row.mean_reward = reward_sum / static_cast<double>(scenarios_.size());
    return row;
  }

 private:
  TrainConfig cfg_;
  std::vector<sim::Scenario> scenarios_;
};

}  // namespace

mtl::Trace rollout_scenario(const sim::Scenario& scenario, const policy::PolicyParams& params,
                            const sim::SimConfig& cfg) {
  sim::Environment env(cfg);
  env.set_trace_recording(true);
  auto obs = env.reset(scenario);
  while (!env.done()) {
    double a = policy::forward(params, obs).mean;
    obs = env.step(a).obs;
  }
  return env.trace();
}

mtl::Trace rollout_candidate(const falsify::Candidate& c, const falsify::SearchSpace& space,
                             const policy::PolicyParams& params, const sim::SimConfig& cfg) {
  return rollout_scenario(falsify::decode_candidate(c, space, cfg), params, cfg);
}

namespace {

void maybe_capture_warmup(const TrainConfig& cfg, long prev_step, long step,
                          const policy::PolicyParams& params, const policy::AdamState& adam,
                          TrainResult& res) {
  if (prev_step < cfg.warmup_steps && step >= cfg.warmup_steps && !res.warmup_checkpoint) {
    res.warmup_checkpoint = policy::Checkpoint{params, adam, step};
  }
}

void write_run_dir_impl(const TrainConfig& cfg, const TrainResult& res) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.run_dir);
  save_metrics((fs::path(cfg.run_dir) / "metrics.csv").string(), res.metrics);
  if (!res.eval_log.empty()) {
    save_metrics((fs::path(cfg.run_dir) / "eval.csv").string(), res.eval_log);
  }
  policy::save_checkpoint((fs::path(cfg.run_dir) / "ckpt.bin").string(), res.protagonist);
  if (res.warmup_checkpoint) {
    policy::save_checkpoint((fs::path(cfg.run_dir) / "ckpt_warmup.bin").string(),
                            *res.warmup_checkpoint);
  }
  if (res.adversary) {
    policy::save_checkpoint((fs::path(cfg.run_dir) / "ckpt_adversary.bin").string(),
                            *res.adversary);
  }
  if (!res.falsified_scenarios.empty()) {
    fs::create_directories(fs::path(cfg.run_dir) / "falsified");
    std::ofstream index((fs::path(cfg.run_dir) / "falsified" / "index.csv").string());
    index.precision(17);
    index << "file,robustness\n";
    for (std::size_t i = 0; i < res.falsified_scenarios.size(); ++i) {
      std::ostringstream name;
      name << "scenario_" << i << ".txt";
      sim::save_scenario((fs::path(cfg.run_dir) / "falsified" / name.str()).string(),
                         res.falsified_scenarios[i].scenario);
      index << name.str() << "," << res.falsified_scenarios[i].robustness << "\n";
    }
  }
  if (!res.falsification_history.empty()) {
    std::ofstream hist((fs::path(cfg.run_dir) / "falsification.csv").string());
    hist.precision(17);
    hist << "step,best_robustness,falsifying_candidates,simulations_used\n";
    for (const auto& e : res.falsification_history) {
      hist << e.step << "," << e.best_robustness << "," << e.falsifying_candidates << ","
           << e.simulations_used << "\n";
    }
  }
}

void write_run_dir(const TrainConfig& cfg, const TrainResult& res) {
  if (!cfg.run_dir.empty()) write_run_dir_impl(cfg, res);
}

}  // namespace

TrainResult train_ppo(const TrainConfig& cfg, ScenarioStream& stream,
                      std::optional<policy::Checkpoint> resume) {
  TrainResult res;
  auto init_rng = stream_rng(cfg.seed, kInitStream);
  policy::PolicyParams params = resume ? resume->params : policy::init_policy(init_rng);
  policy::AdamState adam = resume ? resume->adam : policy::AdamState::init();
  long step = resume ? resume->global_step : 0;
  const long steps_per_iter = static_cast<long>(cfg.n_actors) * cfg.steps_per_actor;

  PpoDriver driver(cfg, stream);
  EvalHook eval(cfg);
  int iter = 0;
  while (step < cfg.total_steps) {
    auto row = driver.run_iteration(params, adam, Role::Ego, nullptr, lr_schedule(cfg, step));
    long prev = step;
    step += steps_per_iter;
    row.step = step;
    res.metrics.push_back(row);
    maybe_capture_warmup(cfg, prev, step, params, adam, res);
    ++iter;
    if (eval.enabled() && iter % cfg.eval_cadence == 0) {
      res.eval_log.push_back(eval.run(params, step));
    }
  }
  res.protagonist = {params, adam, step};
  write_run_dir(cfg, res);
  return res;
}

TrainResult train_rarl(const TrainConfig& cfg, ScenarioStream& stream,
                       std::optional<policy::Checkpoint> resume) {
  TrainResult res;
  auto init_rng = stream_rng(cfg.seed, kInitStream);
  auto adv_init_rng = stream_rng(cfg.seed, kAdvInitStream);
  policy::PolicyParams params = resume ? resume->params : policy::init_policy(init_rng);
  policy::AdamState adam = resume ? resume->adam : policy::AdamState::init();
  policy::PolicyParams adv_params = policy::init_policy(adv_init_rng);
  // the adversary needs exploration on the scale of plausible lead behavior,
  // or its sparse reward never produces a gradient
  adv_params.log_std = std::log(3.0);
  policy::AdamState adv_adam = policy::AdamState::init();
  long step = resume ? resume->global_step : 0;
  const long steps_per_iter = static_cast<long>(cfg.n_actors) * cfg.steps_per_actor;

  PpoDriver driver(cfg, stream);
  EvalHook eval(cfg);
  int iter = 0;
  int mu_since_adv = 0;
  while (step < cfg.total_steps) {
    bool adversarial = step >= cfg.warmup_steps;
    auto row = driver.run_iteration(params, adam, Role::Ego, adversarial ? &adv_params : nullptr,
                                    lr_schedule(cfg, step));
    long prev = step;
    step += steps_per_iter;
    row.step = step;
    res.metrics.push_back(row);
    maybe_capture_warmup(cfg, prev, step, params, adam, res);
    ++iter;
    if (eval.enabled() && iter % cfg.eval_cadence == 0) {
      res.eval_log.push_back(eval.run(params, step));
    }
    if (adversarial && step < cfg.total_steps) {
      if (++mu_since_adv >= cfg.rarl_protagonist_iters) {
        mu_since_adv = 0;
        for (int k = 0; k < cfg.rarl_adversary_iters; ++k) {
          driver.run_iteration(adv_params, adv_adam, Role::Leader, &params,
                               lr_schedule(cfg, step));
        }
      }
    }
  }
  res.protagonist = {params, adam, step};
  res.adversary = policy::Checkpoint{adv_params, adv_adam, step};
  write_run_dir(cfg, res);
  return res;
}

TrainResult train_frarl(const TrainConfig& cfg, ScenarioStream& stream,
                        const mtl::Formula& spec,
                        std::optional<policy::Checkpoint> resume) {
  TrainResult res;
  auto init_rng = stream_rng(cfg.seed, kInitStream);
  auto fals_rng = stream_rng(cfg.seed, kFalsifyStream);
  policy::PolicyParams params = resume ? resume->params : policy::init_policy(init_rng);
  policy::AdamState adam = resume ? resume->adam : policy::AdamState::init();
  long step = resume ? resume->global_step : 0;
  const long steps_per_iter = static_cast<long>(cfg.n_actors) * cfg.steps_per_actor;

  MixingStream mixed(stream, res.falsified_scenarios, cfg.falsified_mix, cfg.seed);
  PpoDriver driver(cfg, mixed);
  EvalHook eval(cfg);
  auto space = falsify::driving_search_space(cfg.sim, cfg.control_points);
  falsify::CeConfig ce = cfg.ce;
  ce.top_n = cfg.traces_per_falsify;
  ce.stop_on_falsified = false;  // keep searching to fill the candidate list

  int iter = 0;
  long next_falsify_iter = -1;
  int calm_calls = 0;  // consecutive falsifier calls with best robustness >= 0
  bool converged = false;
  while (step < cfg.total_steps) {
    auto row = driver.run_iteration(params, adam, Role::Ego, nullptr, lr_schedule(cfg, step));
    long prev = step;
    step += steps_per_iter;
    row.step = step;
    res.metrics.push_back(row);
    maybe_capture_warmup(cfg, prev, step, params, adam, res);
    ++iter;
    if (eval.enabled() && iter % cfg.eval_cadence == 0) {
      res.eval_log.push_back(eval.run(params, step));
    }

    if (step > cfg.warmup_steps && !converged && step < cfg.total_steps) {
      if (next_falsify_iter < 0) next_falsify_iter = iter;
      if (iter >= next_falsify_iter) {
        next_falsify_iter = iter + cfg.falsify_cadence;
        falsify::FalsificationResult fres;
        bool failed = false;
        try {
          auto system = [&](const falsify::Candidate& c) {
            return rollout_candidate(c, space, params, cfg.sim);
          };
          fres = falsify::falsify(system, spec, space, cfg.falsify_budget, ce, fals_rng);
        } catch (const falsify::RolloutError&) {
          failed = true;  // keep training on the existing pool
        }
        if (!failed) {
          int violating = 0;
          for (const auto& cand : fres.top) {
            auto scenario = falsify::decode_candidate(cand.x, space, cfg.sim);
            res.falsified_scenarios.push_back({std::move(scenario), cand.robustness});
            if (cand.robustness < 0.0) ++violating;
          }
          res.falsification_history.push_back(
              {step, fres.best.robustness, violating, fres.simulations_used});
          calm_calls = fres.best.robustness >= 0.0 ? calm_calls + 1 : 0;
          if (calm_calls >= cfg.convergence_calls) converged = true;
        }
      }
    }
  }
  res.protagonist = {params, adam, step};
  write_run_dir(cfg, res);
  return res;
}

}  // namespace frarl::trainer
