#include "frarl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace frarl::eval {

EvalRow evaluate(const policy::PolicyParams& params, const std::vector<sim::Scenario>& scenarios,
                 trainer::Task task, const sim::SimConfig& cfg) {
  if (scenarios.empty()) {
    throw std::invalid_argument("cannot evaluate on an empty scenario set");
  }
  EvalRow row;
  row.task = trainer::to_string(task);
  row.episodes = static_cast<long>(scenarios.size());
  double reward_sum = 0.0;
  sim::Environment env(cfg);
  for (const auto& sc : scenarios) {
    auto obs = env.reset(sc);
    double ep_reward = 0.0;
    while (!env.done()) {
      double a = policy::forward(params, obs).mean;
      obs = env.step(a).obs;
      const auto& st = env.state();
      ep_reward += task == trainer::Task::BrakingAssist ? sim::reward_ba(st)
                                                        : sim::reward_acc(st, cfg);
      if (st.gap() < sim::safe_distance(st.v_ego, st.v_lead, cfg)) row.sdv_steps += 1;
    }
    if (env.state().cause == sim::Termination::Collision) row.collision_episodes += 1;
    if (env.state().cause == sim::Termination::Reverse) row.reverse_episodes += 1;
    reward_sum += ep_reward;
  }
  row.collision_rate = static_cast<double>(row.collision_episodes) / row.episodes;
  row.reverse_rate = static_cast<double>(row.reverse_episodes) / row.episodes;
  row.mean_reward = reward_sum / static_cast<double>(row.episodes);
  return row;
}

EvalRow aggregate(const std::vector<EvalRow>& rows) {
  if (rows.empty()) {
    throw std::invalid_argument("cannot aggregate zero rows");
  }
  EvalRow out = rows.front();
  out.seeds = static_cast<int>(rows.size());
  out.collision_rate = 0.0;
  out.reverse_rate = 0.0;
  out.mean_reward = 0.0;
  out.sdv_steps = 0;
  out.collision_episodes = 0;
  out.reverse_episodes = 0;
  for (const auto& r : rows) {
    out.collision_rate += r.collision_rate;
    out.reverse_rate += r.reverse_rate;
    out.mean_reward += r.mean_reward;
    out.sdv_steps += r.sdv_steps;
    out.collision_episodes += r.collision_episodes;
    out.reverse_episodes += r.reverse_episodes;
  }
  double n = static_cast<double>(rows.size());
  out.collision_rate /= n;
  out.reverse_rate /= n;
  out.mean_reward /= n;
  return out;
}

Comparison compare_methods(
    const std::vector<std::pair<std::string, std::vector<std::string>>>& method_run_dirs,
    const std::vector<std::pair<std::string, std::vector<sim::Scenario>>>& test_sets,
    trainer::Task task, const sim::SimConfig& cfg) {
  namespace fs = std::filesystem;
  Comparison c;
  for (const auto& [set_name, scenarios] : test_sets) {
    (void)scenarios;
    c.scenario_sets.push_back(set_name);
  }
  for (const auto& [method, run_dirs] : method_run_dirs) {
    c.methods.push_back(method);
    std::vector<ComparisonCell> row(test_sets.size());
    std::vector<policy::PolicyParams> seeds;
    for (const auto& dir : run_dirs) {
      auto ckpt_path = fs::path(dir) / "ckpt.bin";
      if (!fs::exists(ckpt_path)) {
        c.missing.push_back(method + ": missing checkpoint " + ckpt_path.string());
        continue;
      }
      seeds.push_back(policy::load_checkpoint(ckpt_path.string()).params);
    }
    for (std::size_t s = 0; s < test_sets.size(); ++s) {
      if (seeds.empty()) {
        c.missing.push_back(method + "/" + test_sets[s].first + ": no seeds available");
        continue;
      }
      std::vector<EvalRow> per_seed;
      for (const auto& params : seeds) {
        auto r = evaluate(params, test_sets[s].second, task, cfg);
        r.method = method;
        r.scenario_set = test_sets[s].first;
        per_seed.push_back(std::move(r));
      }
      row[s].present = true;
      row[s].row = aggregate(per_seed);
      row[s].row.method = method;
      row[s].row.scenario_set = test_sets[s].first;
    }
    c.cells.push_back(std::move(row));
  }
  return c;
}

std::string render_table(const Comparison& c) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  // per-column minima across methods, marked with '*'
  std::vector<double> min_rev(c.scenario_sets.size(), 1e300);
  std::vector<double> min_col(c.scenario_sets.size(), 1e300);
  for (const auto& row : c.cells) {
    for (std::size_t s = 0; s < row.size(); ++s) {
      if (!row[s].present) continue;
      min_rev[s] = std::min(min_rev[s], row[s].row.reverse_rate);
      min_col[s] = std::min(min_col[s], row[s].row.collision_rate);
    }
  }
  os << "method";
  for (const auto& set : c.scenario_sets) {
    os << " | " << set << " reverse | " << set << " collision";
  }
  os << "\n";
  for (std::size_t m = 0; m < c.methods.size(); ++m) {
    os << c.methods[m];
    for (std::size_t s = 0; s < c.scenario_sets.size(); ++s) {
      if (!c.cells[m][s].present) {
        os << " | missing | missing";
        continue;
      }
      const auto& r = c.cells[m][s].row;
      auto cell = [&](double v, double minimum) {
        std::ostringstream val;
        val << std::fixed << std::setprecision(4) << 100.0 * v << "%";
        return v == minimum ? "*" + val.str() + "*" : val.str();
      };
      os << " | " << cell(r.reverse_rate, min_rev[s]) << " | "
         << cell(r.collision_rate, min_col[s]);
    }
    os << "\n";
  }
  for (const auto& miss : c.missing) {
    os << "# " << miss << "\n";
  }
  return os.str();
}

void export_comparison(const std::string& path, const Comparison& c) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot open comparison export for writing: " + path);
  }
  out.precision(17);
  out << "method,task,scenario_set,seeds,episodes,reverse_rate,collision_rate,mean_reward,"
         "safe_distance_violation_steps\n";
  for (const auto& row : c.cells) {
    for (const auto& cell : row) {
      if (!cell.present) continue;
      const auto& r = cell.row;
      out << r.method << "," << r.task << "," << r.scenario_set << "," << r.seeds << ","
          << r.episodes << "," << r.reverse_rate << "," << r.collision_rate << ","
          << r.mean_reward << "," << r.sdv_steps << "\n";
    }
  }
  for (const auto& miss : c.missing) {
    out << "# " << miss << "\n";
  }
}

std::vector<CurvePoint> learning_curve(const std::vector<std::vector<double>>& series,
                                       const std::vector<long>& steps, int window) {
  if (series.empty()) {
    throw std::invalid_argument("need at least one series");
  }
  if (window < 1) {
    throw std::invalid_argument("window must be >= 1");
  }
  const std::size_t n = steps.size();
  for (const auto& s : series) {
    if (s.size() != n) {
      throw std::invalid_argument("all series must share the step axis");
    }
  }
  // trailing moving average per series
  std::vector<std::vector<double>> smooth(series.size(), std::vector<double>(n));
  for (std::size_t k = 0; k < series.size(); ++k) {
    double running = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      running += series[k][i];
      std::size_t w = std::min<std::size_t>(window, i + 1);
      if (i >= static_cast<std::size_t>(window)) {
        running -= series[k][i - window];
      }
      smooth[k][i] = running / static_cast<double>(w);
    }
  }
  std::vector<CurvePoint> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double mean = 0.0;
    for (std::size_t k = 0; k < series.size(); ++k) mean += smooth[k][i];
    mean /= static_cast<double>(series.size());
    double var = 0.0;
    for (std::size_t k = 0; k < series.size(); ++k) {
      var += (smooth[k][i] - mean) * (smooth[k][i] - mean);
    }
    out[i] = {steps[i], mean, std::sqrt(var / static_cast<double>(series.size()))};
  }
  return out;
}

void emit_learning_curves(const std::vector<trainer::MetricsLog>& logs, int window,
                          const std::string& out_prefix) {
  if (logs.empty()) {
    throw std::invalid_argument("need at least one metrics log");
  }
  std::vector<long> steps;
  for (const auto& r : logs.front()) steps.push_back(r.step);

  auto write_curve = [&](const std::string& metric,
                         const std::function<double(const trainer::MetricsRow&)>& get) {
    std::vector<std::vector<double>> series;
    for (const auto& log : logs) {
      std::vector<double> s;
      for (const auto& r : log) s.push_back(get(r));
      series.push_back(std::move(s));
    }
    auto curve = learning_curve(series, steps, window);
    std::ofstream out(out_prefix + metric + ".csv");
    if (!out) {
      throw std::runtime_error("cannot open curve file for writing: " + out_prefix + metric +
                               ".csv");
    }
    out.precision(17);
    out << "step,mean,std\n";
    for (const auto& p : curve) {
      out << p.step << "," << p.mean << "," << p.stddev << "\n";
    }
  };
  write_curve("episode_reward", [](const trainer::MetricsRow& r) { return r.mean_reward; });
  write_curve("safe_distance_violations",
              [](const trainer::MetricsRow& r) { return static_cast<double>(r.sdv_steps); });
}

}  // namespace frarl::eval
