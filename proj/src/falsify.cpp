#include "frarl/falsify.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace frarl::falsify {

void SearchSpace::validate() const {
  if (trace_dims < 1) {
    throw std::invalid_argument("search space needs at least one trace dimension");
  }
  if (dims.size() != static_cast<std::size_t>(trace_dims) + 2) {
    throw std::invalid_argument("search space must have trace_dims + 2 dimensions");
  }
  for (const auto& d : dims) {
    if (!(d.lo < d.hi)) {
      throw std::invalid_argument("dimension '" + d.name + "' needs lo < hi");
    }
  }
}

SearchSpace driving_search_space(const sim::SimConfig& cfg, int control_points) {
  SearchSpace space;
  space.trace_dims = control_points;
  for (int i = 0; i < control_points; ++i) {
    space.dims.push_back({"lead_accel_" + std::to_string(i), -cfg.a_max, cfg.a_max});
  }
  space.dims.push_back({"lead_offset", cfg.lead_offset_min, cfg.lead_offset_max});
  space.dims.push_back({"lead_v0", cfg.lead_v_min, cfg.lead_v_max});
  space.validate();
  return space;
}

namespace {

/// Knot step of control point i on an N-step grid.
int knot_step(int i, int control_points, int n_steps) {
  if (control_points == 1) return 0;
  return static_cast<int>(std::lround(static_cast<double>(i) * (n_steps - 1) /
                                      (control_points - 1)));
}

}  // namespace

sim::Scenario decode_candidate(const Candidate& c, const SearchSpace& space,
                               const sim::SimConfig& cfg) {
  if (c.size() != space.size()) {
    throw std::invalid_argument("candidate dimension mismatch");
  }
  const int k = space.trace_dims;
  const int n = cfg.max_steps;
  sim::Scenario s;
  s.source = sim::ScenarioSource::Falsified;
  s.lead_offset = c[k];
  s.lead_v0 = c[k + 1];
  s.ego_v0 = 0.5 * (cfg.ego_v_min + cfg.ego_v_max);
  s.lead_accel.resize(n);
  if (k == 1) {
    std::fill(s.lead_accel.begin(), s.lead_accel.end(), c[0]);
    return s;
  }
  int seg = 0;
  for (int step = 0; step < n; ++step) {
    while (seg + 1 < k - 1 && knot_step(seg + 1, k, n) <= step) ++seg;
    int s0 = knot_step(seg, k, n);
    int s1 = knot_step(seg + 1, k, n);
    double w = s1 == s0 ? 0.0 : static_cast<double>(step - s0) / (s1 - s0);
    s.lead_accel[step] = (1.0 - w) * c[seg] + w * c[seg + 1];
  }
  return s;
}

Candidate encode_scenario(const sim::Scenario& s, const SearchSpace& space,
                          const sim::SimConfig& cfg) {
  const int k = space.trace_dims;
  Candidate c(space.size());
  for (int i = 0; i < k; ++i) {
    c[i] = s.lead_accel.at(knot_step(i, k, cfg.max_steps));
  }
  c[k] = s.lead_offset;
  c[k + 1] = s.lead_v0;
  return c;
}

CeDistribution CeDistribution::from_space(const SearchSpace& space) {
  CeDistribution d;
  for (const auto& dim : space.dims) {
    d.mean.push_back(0.5 * (dim.lo + dim.hi));
    // std of a uniform over the box, a neutral starting width
    d.stddev.push_back((dim.hi - dim.lo) / std::sqrt(12.0));
    d.lo.push_back(dim.lo);
    d.hi.push_back(dim.hi);
  }
  return d;
}

std::vector<Candidate> sample_candidates(const CeDistribution& dist, int n,
                                         std::mt19937_64& rng) {
  if (n < 1) {
    throw std::invalid_argument("need n >= 1 samples");
  }
  std::vector<Candidate> out(n);
  std::normal_distribution<double> unit;
  for (auto& c : out) {
    c.resize(dist.mean.size());
    for (std::size_t d = 0; d < dist.mean.size(); ++d) {
      double v = 0.0;
      for (int tries = 0; tries < 100; ++tries) {
        v = dist.mean[d] + dist.stddev[d] * unit(rng);
        if (v >= dist.lo[d] && v <= dist.hi[d]) break;
      }
      c[d] = std::clamp(v, dist.lo[d], dist.hi[d]);
    }
  }
  return out;
}

CeDistribution ce_update(const CeDistribution& dist, std::vector<ScoredCandidate> scored,
                         double elite_fraction, double smoothing, double std_floor) {
  if (scored.empty()) {
    throw std::invalid_argument("ce_update needs at least one scored candidate");
  }
  if (!(elite_fraction > 0.0 && elite_fraction <= 1.0)) {
    throw std::invalid_argument("elite fraction must be in (0, 1]");
  }
  // smoothing 0 is the identity update, useful as a regression guard
  if (!(smoothing >= 0.0 && smoothing <= 1.0)) {
    throw std::invalid_argument("smoothing must be in [0, 1]");
  }
  std::size_t m = static_cast<std::size_t>(
      std::ceil(elite_fraction * static_cast<double>(scored.size())));
  m = std::min(m, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + m, scored.end(),
                    [](const auto& a, const auto& b) { return a.robustness < b.robustness; });

  CeDistribution out = dist;
  const std::size_t n_dims = dist.mean.size();
  for (std::size_t d = 0; d < n_dims; ++d) {
    double mean = 0.0;
    for (std::size_t i = 0; i < m; ++i) mean += scored[i].x[d];
    mean /= static_cast<double>(m);
    double var = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      double diff = scored[i].x[d] - mean;
      var += diff * diff;
    }
    var /= static_cast<double>(m);
    double stddev = std::sqrt(var);
    out.mean[d] = smoothing * mean + (1.0 - smoothing) * dist.mean[d];
    out.stddev[d] = std::max(std_floor, smoothing * stddev + (1.0 - smoothing) * dist.stddev[d]);
    out.mean[d] = std::clamp(out.mean[d], dist.lo[d], dist.hi[d]);
  }
  return out;
}

RolloutError::RolloutError(const std::string& msg, Candidate c)
    : std::runtime_error(msg), candidate(std::move(c)) {}

namespace {

std::vector<Candidate> sample_uniform(const SearchSpace& space, int n, std::mt19937_64& rng) {
  std::vector<Candidate> out(n);
  for (auto& c : out) {
    c.resize(space.size());
    for (std::size_t d = 0; d < space.size(); ++d) {
      std::uniform_real_distribution<double> u(space.dims[d].lo, space.dims[d].hi);
      c[d] = u(rng);
    }
  }
  return out;
}

std::vector<ScoredCandidate> score_batch(const RolloutFn& system, const mtl::Formula& spec,
                                         const std::vector<Candidate>& batch) {
  std::vector<ScoredCandidate> scored;
  scored.reserve(batch.size());
  for (const auto& c : batch) {
    mtl::Trace tr;
    try {
      tr = system(c);
    } catch (const RolloutError&) {
      throw;
    } catch (const std::exception& e) {
      throw RolloutError(std::string("rollout failed: ") + e.what(), c);
    }
    scored.push_back({c, mtl::robustness(spec, tr, 0)});
  }
  return scored;
}

void absorb(std::vector<ScoredCandidate>& top, const std::vector<ScoredCandidate>& scored,
            int top_n) {
  top.insert(top.end(), scored.begin(), scored.end());
  std::sort(top.begin(), top.end(),
            [](const auto& a, const auto& b) { return a.robustness < b.robustness; });
  if (top.size() > static_cast<std::size_t>(top_n)) {
    top.resize(top_n);
  }
}

struct BatchStats {
  double mean = 0.0;
  double best = mtl::kTop;
};

BatchStats batch_stats(const std::vector<ScoredCandidate>& scored) {
  BatchStats st;
  double sum = 0.0;
  for (const auto& s : scored) {
    sum += s.robustness;
    st.best = std::min(st.best, s.robustness);
  }
  st.mean = sum / static_cast<double>(scored.size());
  return st;
}

FalsificationResult run_search(const RolloutFn& system, const mtl::Formula& spec,
                               const SearchSpace& space, int budget, const CeConfig& cfg,
                               std::mt19937_64& rng, bool use_ce) {
  space.validate();
  if (budget < cfg.samples_per_iter) {
    throw std::invalid_argument("budget must cover at least one batch of samples");
  }

  FalsificationResult result;
  result.best.robustness = mtl::kTop;
  CeDistribution dist = CeDistribution::from_space(space);

  int iter = 0;
  while (result.simulations_used < budget) {
    if (use_ce && iter >= cfg.max_iters) break;
    int n = std::min(cfg.samples_per_iter, budget - result.simulations_used);
    // the first CE batch is uniform; the refit distribution takes over after
    auto batch = (use_ce && iter > 0) ? sample_candidates(dist, n, rng)
                                      : sample_uniform(space, n, rng);
    auto scored = score_batch(system, spec, batch);
    result.simulations_used += n;

    for (const auto& s : scored) {
      if (s.robustness < result.best.robustness) result.best = s;
    }
    absorb(result.top, scored, cfg.top_n);

    IterationStats stats;
    stats.iteration = iter;
    stats.best_robustness = result.best.robustness;
    stats.mean_robustness = batch_stats(scored).mean;

    if (use_ce) {
      dist = ce_update(dist, scored, cfg.elite_fraction, cfg.smoothing, cfg.std_floor);
      stats.mean = dist.mean;
      stats.stddev = dist.stddev;
    } else {
      stats.mean.resize(space.size(), 0.0);
      stats.stddev.resize(space.size(), 0.0);
      for (std::size_t d = 0; d < space.size(); ++d) {
        double mean = 0.0;
        for (const auto& s : scored) mean += s.x[d];
        mean /= static_cast<double>(scored.size());
        double var = 0.0;
        for (const auto& s : scored) var += (s.x[d] - mean) * (s.x[d] - mean);
        stats.mean[d] = mean;
        stats.stddev[d] = std::sqrt(var / static_cast<double>(scored.size()));
      }
    }
    result.history.push_back(std::move(stats));
    ++iter;

    if (cfg.stop_on_falsified && result.best.robustness < 0.0) break;
    if (use_ce) {
      bool converged = true;
      for (std::size_t d = 0; d < space.size(); ++d) {
        double range = space.dims[d].hi - space.dims[d].lo;
        if (dist.stddev[d] >= cfg.std_tolerance * range) {
          converged = false;
          break;
        }
      }
      if (converged) break;
    }
  }

  result.falsified = result.best.robustness < 0.0;
  return result;
}

}  // namespace

FalsificationResult falsify(const RolloutFn& system, const mtl::Formula& spec,
                            const SearchSpace& space, int budget, const CeConfig& cfg,
                            std::mt19937_64& rng) {
  return run_search(system, spec, space, budget, cfg, rng, /*use_ce=*/true);
}

FalsificationResult uniform_falsify(const RolloutFn& system, const mtl::Formula& spec,
                                    const SearchSpace& space, int budget, const CeConfig& cfg,
                                    std::mt19937_64& rng) {
  return run_search(system, spec, space, budget, cfg, rng, /*use_ce=*/false);
}

void write_report(const std::string& path, const FalsificationResult& result,
                  const SearchSpace& space) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot open report file for writing: " + path);
  }
  out.precision(17);
  out << "iteration,best_robustness,mean_robustness";
  for (const auto& d : space.dims) {
    out << "," << d.name << "_mean," << d.name << "_std";
  }
  out << "\n";
  for (const auto& it : result.history) {
    out << it.iteration << "," << it.best_robustness << "," << it.mean_robustness;
    for (std::size_t d = 0; d < space.size(); ++d) {
      out << "," << it.mean[d] << "," << it.stddev[d];
    }
    out << "\n";
  }
}

}  // namespace frarl::falsify
