#include "frarl/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace frarl::policy {

namespace {

constexpr double kHalfLog2Pi = 0.9189385332046727;  // 0.5 * ln(2*pi)

bool all_finite(const Eigen::Ref<const Eigen::MatrixXd>& m) { return m.allFinite(); }

Eigen::MatrixXd orthogonal(int rows, int cols, double gain, std::mt19937_64& rng) {
  std::normal_distribution<double> unit;
  Eigen::MatrixXd a(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) a(i, j) = unit(rng);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
  Eigen::MatrixXd r = qr.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
  for (int j = 0; j < cols; ++j) {
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  }
  return gain * q;
}

}  // namespace

bool PolicyParams::finite() const {
  return all_finite(w1) && all_finite(b1) && all_finite(w2) && all_finite(b2) &&
         all_finite(w_mean) && all_finite(w_value) && std::isfinite(b_mean) &&
         std::isfinite(b_value) && std::isfinite(log_std);
}

PolicyParams init_policy(std::mt19937_64& rng) {
  PolicyParams p;
  p.w1 = orthogonal(kHidden, kObsDim, std::sqrt(2.0), rng);
  p.w2 = orthogonal(kHidden, kHidden, std::sqrt(2.0), rng);
  p.w_mean = orthogonal(kHidden, 1, 0.01, rng).transpose();
  p.w_value = orthogonal(kHidden, 1, 1.0, rng).transpose();
  return p;
}

std::size_t param_count() {
  return static_cast<std::size_t>(kHidden * kObsDim + kHidden + kHidden * kHidden + kHidden +
                                  kHidden + 1 + kHidden + 1 + 1);
}

Eigen::VectorXd to_flat(const PolicyParams& p) {
  Eigen::VectorXd flat(param_count());
  Eigen::Index pos = 0;
  auto put = [&](const Eigen::Ref<const Eigen::MatrixXd>& m) {
    flat.segment(pos, m.size()) = Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
    pos += m.size();
  };
  put(p.w1);
  put(p.b1);
  put(p.w2);
  put(p.b2);
  put(p.w_mean.transpose());
  flat(pos++) = p.b_mean;
  put(p.w_value.transpose());
  flat(pos++) = p.b_value;
  flat(pos++) = p.log_std;
  return flat;
}

PolicyParams from_flat(const Eigen::VectorXd& flat) {
  if (flat.size() != static_cast<Eigen::Index>(param_count())) {
    throw std::invalid_argument("flat parameter vector has wrong size");
  }
  PolicyParams p;
  Eigen::Index pos = 0;
  auto take = [&](Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m = Eigen::Map<const Eigen::MatrixXd>(flat.data() + pos, rows, cols);
    pos += rows * cols;
    return m;
  };
  p.w1 = take(kHidden, kObsDim);
  p.b1 = take(kHidden, 1);
  p.w2 = take(kHidden, kHidden);
  p.b2 = take(kHidden, 1);
  p.w_mean = take(kHidden, 1).transpose();
  p.b_mean = flat(pos++);
  p.w_value = take(kHidden, 1).transpose();
  p.b_value = flat(pos++);
  p.log_std = flat(pos++);
  return p;
}

namespace {

struct ForwardCache {
  Eigen::VectorXd x;
  Eigen::VectorXd h1;
  Eigen::VectorXd h2;
  double mean = 0.0;
  double value = 0.0;
};

// fixed per-feature scales (gap, relative velocity, ego velocity, lead and
// ego acceleration) keep the tanh layers out of saturation
constexpr double kObsScale[kObsDim] = {50.0, 10.0, 20.0, 10.0, 10.0};

ForwardCache forward_cached(const PolicyParams& p, const Features& obs) {
  ForwardCache c;
  c.x = Eigen::Map<const Eigen::VectorXd>(obs.data(), kObsDim);
  if (!c.x.allFinite()) {
    throw std::invalid_argument("non-finite observation");
  }
  for (int i = 0; i < kObsDim; ++i) c.x(i) /= kObsScale[i];
  c.h1 = (p.w1 * c.x + p.b1).array().tanh();
  c.h2 = (p.w2 * c.h1 + p.b2).array().tanh();
  c.mean = p.w_mean.dot(c.h2) + p.b_mean;
  c.value = p.w_value.dot(c.h2) + p.b_value;
  return c;
}

/// Accumulates parameter gradients for one sample given the gradients of the
/// loss with respect to the two heads.
void backward(const PolicyParams& p, const ForwardCache& c, double d_mean, double d_value,
              PolicyParams& grad) {
  Eigen::VectorXd d_h2 = p.w_mean.transpose() * d_mean + p.w_value.transpose() * d_value;
  Eigen::VectorXd d_z2 =
      d_h2.array() * (1.0 - c.h2.array() * c.h2.array());
  Eigen::VectorXd d_h1 = p.w2.transpose() * d_z2;
  Eigen::VectorXd d_z1 = d_h1.array() * (1.0 - c.h1.array() * c.h1.array());

  grad.w_mean += d_mean * c.h2.transpose();
  grad.b_mean += d_mean;
  grad.w_value += d_value * c.h2.transpose();
  grad.b_value += d_value;
  grad.w2 += d_z2 * c.h1.transpose();
  grad.b2 += d_z2;
  grad.w1 += d_z1 * c.x.transpose();
  grad.b1 += d_z1;
}

}  // namespace

ForwardResult forward(const PolicyParams& p, const Features& obs) {
  auto c = forward_cached(p, obs);
  return {c.mean, c.value};
}

double gaussian_log_prob(double mean, double log_std, double action) {
  double z = (action - mean) / std::exp(log_std);
  return -0.5 * z * z - log_std - kHalfLog2Pi;
}

ActionSample sample_action(const PolicyParams& p, const Features& obs, std::mt19937_64& rng,
                           bool deterministic) {
  auto out = forward(p, obs);
  double action = out.mean;
  if (!deterministic) {
    std::normal_distribution<double> unit;
    action = out.mean + std::exp(p.log_std) * unit(rng);
  }
  return {action, gaussian_log_prob(out.mean, p.log_std, action)};
}

GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                      std::span<const std::uint8_t> dones, double bootstrap_value, double gamma,
                      double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) {
    throw std::invalid_argument("compute_gae: length mismatch");
  }
  GaeResult out;
  out.advantages.resize(n);
  out.value_targets.resize(n);
  double next_advantage = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    double not_done = dones[i] ? 0.0 : 1.0;
    double next_value = (i + 1 < n) ? values[i + 1] : bootstrap_value;
    double delta = rewards[i] + gamma * next_value * not_done - values[i];
    next_advantage = delta + gamma * lambda * not_done * next_advantage;
    out.advantages[i] = next_advantage;
    out.value_targets[i] = next_advantage + values[i];
  }
  return out;
}

namespace {

struct LossAccumulator {
  double policy = 0.0;
  double value = 0.0;
  double clip_count = 0.0;
  double kl = 0.0;
};

LossDiagnostics finalize(const LossAccumulator& acc, std::size_t n, double value_coef) {
  LossDiagnostics d;
  double inv = 1.0 / static_cast<double>(n);
  d.policy_loss = acc.policy * inv;
  d.value_loss = acc.value * inv;
  d.clip_fraction = acc.clip_count * inv;
  d.approx_kl = acc.kl * inv;
  d.loss = d.policy_loss + value_coef * d.value_loss;
  if (!std::isfinite(d.loss)) {
    std::ostringstream msg;
    msg << "non-finite PPO loss: policy=" << d.policy_loss << " value=" << d.value_loss
        << " clip_fraction=" << d.clip_fraction << " approx_kl=" << d.approx_kl;
    throw std::runtime_error(msg.str());
  }
  return d;
}

}  // namespace

LossDiagnostics ppo_loss(const PolicyParams& p, std::span<const Sample> batch,
                         const PpoConfig& cfg) {
  if (batch.empty()) {
    throw std::invalid_argument("empty PPO batch");
  }
  LossAccumulator acc;
  for (const auto& s : batch) {
    auto c = forward_cached(p, s.obs);
    double logp = gaussian_log_prob(c.mean, p.log_std, s.action);
    double ratio = std::exp(logp - s.old_log_prob);
    double clipped = std::clamp(ratio, 1.0 - cfg.clip_range, 1.0 + cfg.clip_range);
    acc.policy -= std::min(ratio * s.advantage, clipped * s.advantage);
    double verr = c.value - s.value_target;
    acc.value += verr * verr;
    if (std::abs(ratio - 1.0) > cfg.clip_range) acc.clip_count += 1.0;
    acc.kl += ratio - 1.0 - std::log(ratio);
  }
  return finalize(acc, batch.size(), cfg.value_coef);
}

LossAndGrad ppo_loss_grad(const PolicyParams& p, std::span<const Sample> batch,
                          const PpoConfig& cfg) {
  if (batch.empty()) {
    throw std::invalid_argument("empty PPO batch");
  }
  LossAndGrad out;
  LossAccumulator acc;
  const double inv = 1.0 / static_cast<double>(batch.size());
  const double sigma = std::exp(p.log_std);
  for (const auto& s : batch) {
    auto c = forward_cached(p, s.obs);
    double logp = gaussian_log_prob(c.mean, p.log_std, s.action);
    double ratio = std::exp(logp - s.old_log_prob);
    double clipped = std::clamp(ratio, 1.0 - cfg.clip_range, 1.0 + cfg.clip_range);
    double surr_raw = ratio * s.advantage;
    double surr_clip = clipped * s.advantage;
    acc.policy -= std::min(surr_raw, surr_clip);
    double verr = c.value - s.value_target;
    acc.value += verr * verr;
    if (std::abs(ratio - 1.0) > cfg.clip_range) acc.clip_count += 1.0;
    acc.kl += ratio - 1.0 - std::log(ratio);

    // the clipped branch is flat in the parameters
    double d_logp = (surr_raw <= surr_clip) ? -s.advantage * ratio * inv : 0.0;
    double z = (s.action - c.mean) / sigma;
    double d_mean = d_logp * z / sigma;
    out.grad.log_std += d_logp * (z * z - 1.0);
    double d_value = 2.0 * cfg.value_coef * verr * inv;
    backward(p, c, d_mean, d_value, out.grad);
  }
  out.diag = finalize(acc, batch.size(), cfg.value_coef);
  return out;
}

AdamState AdamState::init() {
  AdamState s;
  s.m = Eigen::VectorXd::Zero(param_count());
  s.v = Eigen::VectorXd::Zero(param_count());
  return s;
}

void adam_step(AdamState& state, PolicyParams& params, const PolicyParams& grad, double lr,
               double beta1, double beta2, double eps) {
  if (state.m.size() != static_cast<Eigen::Index>(param_count())) {
    throw std::invalid_argument("Adam state shape mismatch");
  }
  Eigen::VectorXd g = to_flat(grad);
  Eigen::VectorXd theta = to_flat(params);
  state.step += 1;
  state.m = beta1 * state.m + (1.0 - beta1) * g;
  state.v = beta2 * state.v + (1.0 - beta2) * g.cwiseProduct(g);
  double bias1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  double bias2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  Eigen::VectorXd m_hat = state.m / bias1;
  Eigen::VectorXd v_hat = state.v / bias2;
  theta -= lr * m_hat.cwiseQuotient(v_hat.cwiseSqrt().array().matrix() +
                                    Eigen::VectorXd::Constant(theta.size(), eps));
  params = from_flat(theta);
}

namespace {

constexpr char kMagic[] = "FRARL-CKPT";
constexpr std::uint32_t kVersion = 1;

void write_tensor(std::ofstream& out, const std::string& name,
                  const Eigen::Ref<const Eigen::MatrixXd>& m) {
  std::uint32_t name_len = static_cast<std::uint32_t>(name.size());
  out.write(reinterpret_cast<const char*>(&name_len), sizeof(name_len));
  out.write(name.data(), name_len);
  std::uint64_t rows = m.rows();
  std::uint64_t cols = m.cols();
  out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
  out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
  Eigen::MatrixXd dense = m;
  out.write(reinterpret_cast<const char*>(dense.data()),
            static_cast<std::streamsize>(dense.size() * sizeof(double)));
}

Eigen::MatrixXd read_tensor(std::ifstream& in, const std::string& expected_name) {
  std::uint32_t name_len = 0;
  in.read(reinterpret_cast<char*>(&name_len), sizeof(name_len));
  std::string name(name_len, '\0');
  in.read(name.data(), name_len);
  if (name != expected_name) {
    throw std::runtime_error("checkpoint tensor mismatch: expected '" + expected_name +
                             "', got '" + name + "'");
  }
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
  in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
  in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
  Eigen::MatrixXd m(rows, cols);
  in.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(m.size() * sizeof(double)));
  if (!in) {
    throw std::runtime_error("truncated checkpoint while reading '" + expected_name + "'");
  }
  return m;
}

Eigen::MatrixXd scalar(double v) { return Eigen::MatrixXd::Constant(1, 1, v); }

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot open checkpoint for writing: " + path);
  }
  out.write(kMagic, sizeof(kMagic) - 1);
  out.write(reinterpret_cast<const char*>(&kVersion), sizeof(kVersion));
  const auto& p = ckpt.params;
  write_tensor(out, "w1", p.w1);
  write_tensor(out, "b1", p.b1);
  write_tensor(out, "w2", p.w2);
  write_tensor(out, "b2", p.b2);
  write_tensor(out, "w_mean", p.w_mean);
  write_tensor(out, "b_mean", scalar(p.b_mean));
  write_tensor(out, "w_value", p.w_value);
  write_tensor(out, "b_value", scalar(p.b_value));
  write_tensor(out, "log_std", scalar(p.log_std));
  write_tensor(out, "adam_m", ckpt.adam.m);
  write_tensor(out, "adam_v", ckpt.adam.v);
  write_tensor(out, "adam_step", scalar(static_cast<double>(ckpt.adam.step)));
  write_tensor(out, "global_step", scalar(static_cast<double>(ckpt.global_step)));
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open checkpoint: " + path);
  }
  char magic[sizeof(kMagic) - 1];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    throw std::runtime_error("not a checkpoint file: " + path);
  }
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (version != kVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  auto& p = ckpt.params;
  auto expect_shape = [](const Eigen::MatrixXd& m, Eigen::Index rows, Eigen::Index cols,
                         const char* name) {
    if (m.rows() != rows || m.cols() != cols) {
      throw std::runtime_error(std::string("checkpoint architecture mismatch for tensor ") +
                               name);
    }
    return m;
  };
  p.w1 = expect_shape(read_tensor(in, "w1"), kHidden, kObsDim, "w1");
  p.b1 = expect_shape(read_tensor(in, "b1"), kHidden, 1, "b1");
  p.w2 = expect_shape(read_tensor(in, "w2"), kHidden, kHidden, "w2");
  p.b2 = expect_shape(read_tensor(in, "b2"), kHidden, 1, "b2");
  p.w_mean = expect_shape(read_tensor(in, "w_mean"), 1, kHidden, "w_mean");
  p.b_mean = read_tensor(in, "b_mean")(0, 0);
  p.w_value = expect_shape(read_tensor(in, "w_value"), 1, kHidden, "w_value");
  p.b_value = read_tensor(in, "b_value")(0, 0);
  p.log_std = read_tensor(in, "log_std")(0, 0);
  ckpt.adam.m = read_tensor(in, "adam_m");
  ckpt.adam.v = read_tensor(in, "adam_v");
  ckpt.adam.step = static_cast<long>(read_tensor(in, "adam_step")(0, 0));
  ckpt.global_step = static_cast<long>(read_tensor(in, "global_step")(0, 0));
  return ckpt;
}

}  // namespace frarl::policy
