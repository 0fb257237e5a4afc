#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace frarl::policy {

inline constexpr int kObsDim = 5;
inline constexpr int kHidden = 64;

/// Shared actor-critic MLP: 5 features -> 64 tanh -> 64 tanh -> {action
/// mean, value}, plus a state-independent Gaussian log-std.
struct PolicyParams {
  Eigen::MatrixXd w1 = Eigen::MatrixXd::Zero(kHidden, kObsDim);
  Eigen::VectorXd b1 = Eigen::VectorXd::Zero(kHidden);
  Eigen::MatrixXd w2 = Eigen::MatrixXd::Zero(kHidden, kHidden);
  Eigen::VectorXd b2 = Eigen::VectorXd::Zero(kHidden);
  Eigen::RowVectorXd w_mean = Eigen::RowVectorXd::Zero(kHidden);
  double b_mean = 0.0;
  Eigen::RowVectorXd w_value = Eigen::RowVectorXd::Zero(kHidden);
  double b_value = 0.0;
  double log_std = 0.0;

  bool finite() const;
};

/// Orthogonal-style init: gain sqrt(2) for the hidden layers, small-gain
/// action head, unit-gain value head, log_std 0.
PolicyParams init_policy(std::mt19937_64& rng);

std::size_t param_count();
Eigen::VectorXd to_flat(const PolicyParams& p);
PolicyParams from_flat(const Eigen::VectorXd& flat);

using Features = std::array<double, kObsDim>;

struct ForwardResult {
  double mean = 0.0;
  double value = 0.0;
};

/// Rejects non-finite inputs with std::invalid_argument.
ForwardResult forward(const PolicyParams& p, const Features& obs);

struct ActionSample {
  double action = 0.0;
  double log_prob = 0.0;
};

double gaussian_log_prob(double mean, double log_std, double action);

/// Deterministic mode returns the mean with its own log-density.
ActionSample sample_action(const PolicyParams& p, const Features& obs, std::mt19937_64& rng,
                           bool deterministic = false);

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> value_targets;
};

/// Lambda-weighted sum of TD residuals; the recursion resets at done flags.
/// `bootstrap_value` estimates the state after the last step (0 if terminal).
GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                      std::span<const std::uint8_t> dones, double bootstrap_value, double gamma,
                      double lambda);

struct PpoConfig {
  double clip_range = 0.2;
  double value_coef = 0.5;
  double gamma = 0.99;
  double lambda = 0.95;
  double learning_rate = 3e-4;
  int minibatch_size = 128;
  int epochs = 4;
  bool normalize_advantages = true;
  bool anneal_lr = false;  // optional post-warmup linear decay of the learning rate
};

struct Sample {
  Features obs{};
  double action = 0.0;
  double old_log_prob = 0.0;
  double advantage = 0.0;
  double value_target = 0.0;
};

struct LossDiagnostics {
  double loss = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
};

/// Negated clipped surrogate plus weighted value error; minimizing this
/// maximizes the PPO objective. Throws std::runtime_error with diagnostics
/// when the loss is non-finite.
LossDiagnostics ppo_loss(const PolicyParams& p, std::span<const Sample> batch,
                         const PpoConfig& cfg);

struct LossAndGrad {
  LossDiagnostics diag;
  PolicyParams grad;  // same shapes as the parameters
};

LossAndGrad ppo_loss_grad(const PolicyParams& p, std::span<const Sample> batch,
                          const PpoConfig& cfg);

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long step = 0;

  static AdamState init();
};

void adam_step(AdamState& state, PolicyParams& params, const PolicyParams& grad, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

struct Checkpoint {
  PolicyParams params;
  AdamState adam;
  long global_step = 0;
};

/// Versioned binary format with named tensors; save -> load -> save is
/// byte-identical.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace frarl::policy
