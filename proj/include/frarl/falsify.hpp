#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "frarl/mtl.hpp"
#include "frarl/sim.hpp"

namespace frarl::falsify {

struct Dim {
  std::string name;
  double lo = 0.0;
  double hi = 1.0;
};

/// Search space over one episode: K leading-vehicle acceleration control
/// points followed by two scalars (initial gap offset, initial leading
/// velocity).
struct SearchSpace {
  std::vector<Dim> dims;
  int trace_dims = 0;  // K control points; total dimension = K + 2

  std::size_t size() const { return dims.size(); }
  void validate() const;
};

/// Default driving search space: K control points in [-a_max, a_max],
/// offset and leading velocity from the simulator bounds.
SearchSpace driving_search_space(const sim::SimConfig& cfg, int control_points = 10);

using Candidate = std::vector<double>;

/// Control points are linearly interpolated onto the step grid; knot steps
/// are evenly spaced so decode/encode round-trips the K values exactly.
sim::Scenario decode_candidate(const Candidate& c, const SearchSpace& space,
                               const sim::SimConfig& cfg);
Candidate encode_scenario(const sim::Scenario& s, const SearchSpace& space,
                          const sim::SimConfig& cfg);

/// Independent per-dimension truncated Gaussians over the box bounds.
struct CeDistribution {
  std::vector<double> mean;
  std::vector<double> stddev;
  std::vector<double> lo;
  std::vector<double> hi;

  static CeDistribution from_space(const SearchSpace& space);
};

std::vector<Candidate> sample_candidates(const CeDistribution& dist, int n,
                                         std::mt19937_64& rng);

struct ScoredCandidate {
  Candidate x;
  double robustness = 0.0;
};

/// Refits mean/std to the ceil(elite_fraction * n) lowest-robustness
/// candidates, blended as alpha * elite + (1 - alpha) * old, std floored.
CeDistribution ce_update(const CeDistribution& dist, std::vector<ScoredCandidate> scored,
                         double elite_fraction, double smoothing, double std_floor = 1e-3);

struct IterationStats {
  int iteration = 0;
  double best_robustness = 0.0;  // running minimum
  double mean_robustness = 0.0;  // over this iteration's batch
  std::vector<double> mean;
  std::vector<double> stddev;
};

struct FalsificationResult {
  ScoredCandidate best;
  bool falsified = false;  // best.robustness < 0
  int simulations_used = 0;
  std::vector<IterationStats> history;
  std::vector<ScoredCandidate> top;  // lowest-robustness candidates seen
};

struct CeConfig {
  int samples_per_iter = 50;    // N_s
  double elite_fraction = 0.1;  // m = ceil(elite_fraction * N_s)
  double smoothing = 0.7;
  int max_iters = 20;           // n_f
  double std_floor = 1e-3;
  double std_tolerance = 1e-2;  // stop when max std < tolerance * dim range
  bool stop_on_falsified = true;
  int top_n = 10;
};

using RolloutFn = std::function<mtl::Trace(const Candidate&)>;

/// Simulator failure surfaced with the offending candidate attached.
struct RolloutError : std::runtime_error {
  RolloutError(const std::string& msg, Candidate c);
  Candidate candidate;
};

/// Cross-entropy falsification: the first batch is uniform over the bounds,
/// subsequent batches come from the refit distribution.
FalsificationResult falsify(const RolloutFn& system, const mtl::Formula& spec,
                            const SearchSpace& space, int budget, const CeConfig& cfg,
                            std::mt19937_64& rng);

/// Bound-uniform sampling baseline with no distribution update.
FalsificationResult uniform_falsify(const RolloutFn& system, const mtl::Formula& spec,
                                    const SearchSpace& space, int budget, const CeConfig& cfg,
                                    std::mt19937_64& rng);

/// One row per iteration: iteration, best/mean robustness, per-dim mean/std.
void write_report(const std::string& path, const FalsificationResult& result,
                  const SearchSpace& space);

}  // namespace frarl::falsify
