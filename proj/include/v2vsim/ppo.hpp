#pragma once

// PPO over per-vehicle episodes: every car's trajectory is an independent
// episode for advantage estimation and updates.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "policy.hpp"
#include "rng.hpp"
#include "rollout.hpp"

namespace v2v {

struct TrainConfig {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_eps = 0.2;
  double learning_rate = 3e-4;
  int epochs_per_iter = 10;
  int minibatch_size = 64;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  int episodes_per_iter = 16;
  int total_episodes = 2000;
  double message_dropout_p = 0.1;
  DropoutVariant dropout_variant = DropoutVariant::per_message;
  // Extensions beyond plain PPO.
  double target_kl = 0.05;      // stop the epoch loop once approx KL exceeds this; 0 disables
  double max_grad_norm = 0.5;   // global gradient-norm clip; 0 disables
  int checkpoint_every = 10;    // iterations between periodic checkpoints; 0 disables
  int num_threads = 0;          // rollout workers; 0 = hardware concurrency

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

inline void validate(const TrainConfig& c) {
  auto fail = [](const std::string& what) { throw ConfigError("invalid train config: " + what); };
  if (!(c.gamma > 0.0 && c.gamma <= 1.0)) fail("gamma must be in (0,1]");
  if (!(c.gae_lambda > 0.0 && c.gae_lambda <= 1.0)) fail("gae_lambda must be in (0,1]");
  if (!(c.clip_eps > 0.0)) fail("clip_eps must be > 0");
  if (!(c.learning_rate >= 0.0)) fail("learning_rate must be >= 0");
  if (c.epochs_per_iter < 1) fail("epochs_per_iter must be >= 1");
  if (c.minibatch_size < 1) fail("minibatch_size must be >= 1");
  if (c.episodes_per_iter < 1) fail("episodes_per_iter must be >= 1");
  if (c.total_episodes < 0) fail("total_episodes must be >= 0");
  if (!(c.message_dropout_p >= 0.0 && c.message_dropout_p <= 1.0)) fail("message_dropout_p must be in [0,1]");
  if (!(c.target_kl >= 0.0)) fail("target_kl must be >= 0");
  if (!(c.max_grad_norm >= 0.0)) fail("max_grad_norm must be >= 0");
}

// ---- rollouts --------------------------------------------------------------

struct RolloutBuffer {
  Architecture arch;
  std::vector<VehicleEpisode> episodes;  // one per vehicle per environment episode
  std::vector<EpisodeResult> env_episodes;

  [[nodiscard]] std::size_t num_samples() const {
    std::size_t n = 0;
    for (const auto& e : episodes) n += e.length();
    return n;
  }
};

inline RolloutBuffer collect_rollouts(const Agent& agent, const HighwayConfig& env, std::span<const std::uint64_t> episode_seeds,
                                      const TrainConfig& cfg) {
  std::vector<EpisodeResult> results(episode_seeds.size());
  EpisodeOptions opt;
  opt.selection = ActionSelection::sample;
  opt.dropout_p = cfg.message_dropout_p;
  opt.dropout_variant = cfg.dropout_variant;
  opt.record = true;
  const Controller ctl{&agent, {}};
  parallel_for(episode_seeds.size(), resolve_threads(cfg.num_threads),
               [&](std::size_t i) { results[i] = run_episode(ctl, env, episode_seeds[i], opt); });
  RolloutBuffer buf;
  buf.arch = agent.params.arch;
  for (auto& r : results) {
    for (auto& v : r.vehicles) buf.episodes.push_back(std::move(v));
    r.vehicles.clear();
    buf.env_episodes.push_back(std::move(r));
  }
  return buf;
}

inline RolloutBuffer collect_rollouts(const Agent& agent, const HighwayConfig& env, int n_episodes, std::uint64_t seed,
                                      const TrainConfig& cfg) {
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < n_episodes; ++i) seeds.push_back(derive_seed(seed, static_cast<std::uint64_t>(i)));
  return collect_rollouts(agent, env, seeds, cfg);
}

// ---- advantages ------------------------------------------------------------

struct Advantages {
  std::vector<double> advantages;
  std::vector<double> returns;
};

// Generalized advantage estimation by the backward recursion.
inline Advantages compute_gae(std::span<const double> rewards, std::span<const double> values, double bootstrap_value,
                              double gamma, double lambda) {
  if (rewards.size() != values.size()) throw ContractError("rewards and values must have equal length");
  const std::size_t T = rewards.size();
  Advantages out{std::vector<double>(T), std::vector<double>(T)};
  double next_value = bootstrap_value;
  double running = 0.0;
  for (std::size_t k = T; k-- > 0;) {
    const double delta = rewards[k] + gamma * next_value - values[k];
    running = delta + gamma * lambda * running;
    out.advantages[k] = running;
    out.returns[k] = running + values[k];
    next_value = values[k];
  }
  return out;
}

inline constexpr double kAdvantageStdFloor = 1e-8;

// In place: mean 0, std 1 (population std, floored).
inline void normalize_advantages(std::vector<double>& adv) {
  if (adv.empty()) return;
  const double n = static_cast<double>(adv.size());
  const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / n;
  double var = 0.0;
  for (double a : adv) var += (a - mean) * (a - mean);
  const double sd = std::max(std::sqrt(var / n), kAdvantageStdFloor);
  for (double& a : adv) a = (a - mean) / sd;
}

// ---- loss ------------------------------------------------------------------

struct Minibatch {
  Eigen::MatrixXd obs;      // N x 40
  Eigen::MatrixXd slots;    // N x slot_width
  Eigen::MatrixXd actions;  // N x gaussian_dims
  Eigen::MatrixXd bits;     // N x select_dims
  Eigen::VectorXd old_log_probs;
  Eigen::VectorXd advantages;
  Eigen::VectorXd returns;

  [[nodiscard]] Eigen::Index size() const { return obs.rows(); }
};

struct LossWeights {
  double clip_eps = 0.2;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
};

struct LossTerms {
  double loss = 0.0;
  double surrogate = 0.0;  // -mean(min(r*A, clip(r)*A))
  double value_loss = 0.0;  // mean((V - R)^2), before value_coef
  double entropy = 0.0;     // mean entropy
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  LossGrad grad;
  ForwardPass forward;
};

inline LossTerms ppo_loss(const PolicyParams& p, const Minibatch& mb, const LossWeights& w) {
  const Eigen::Index n = mb.size();
  if (n == 0) throw ContractError("ppo_loss needs a nonempty minibatch");
  LossTerms out;
  out.forward = forward_batch(p, mb.obs, mb.slots);
  const auto [lp, ent] = batch_log_prob_entropy(p, out.forward, mb.actions, mb.bits);
  out.grad.d_log_prob.resize(n);
  out.grad.d_value.resize(n);
  out.grad.d_entropy = Eigen::VectorXd::Constant(n, -w.entropy_coef / static_cast<double>(n));
  const double inv_n = 1.0 / static_cast<double>(n);
  double clipped = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double log_ratio = lp[i] - mb.old_log_probs[i];
    const double ratio = std::exp(log_ratio);
    const double a = mb.advantages[i];
    const double unclipped = ratio * a;
    const double clipped_term = std::clamp(ratio, 1.0 - w.clip_eps, 1.0 + w.clip_eps) * a;
    out.surrogate -= std::min(unclipped, clipped_term) * inv_n;
    // The clipped branch is active (zero gradient) only when it is strictly smaller.
    out.grad.d_log_prob[i] = clipped_term < unclipped ? 0.0 : -a * ratio * inv_n;
    if (std::abs(ratio - 1.0) > w.clip_eps) clipped += 1.0;
    out.approx_kl += ((ratio - 1.0) - log_ratio) * inv_n;
    const double err = out.forward.value[i] - mb.returns[i];
    out.value_loss += err * err * inv_n;
    out.grad.d_value[i] = 2.0 * w.value_coef * err * inv_n;
    out.entropy += ent[i] * inv_n;
  }
  out.clip_fraction = clipped * inv_n;
  out.loss = out.surrogate + w.value_coef * out.value_loss - w.entropy_coef * out.entropy;
  if (!std::isfinite(out.loss) || !std::isfinite(out.approx_kl)) {
    std::ostringstream os;
    os << "non-finite PPO loss (surrogate=" << out.surrogate << ", value=" << out.value_loss
       << ", entropy=" << out.entropy << ", kl=" << out.approx_kl << ", batch=" << n << ")";
    throw TrainingError(os.str());
  }
  return out;
}

// ---- optimizer -------------------------------------------------------------

struct Adam {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  PolicyParams m;
  PolicyParams v;
  long step_count = 0;

  explicit Adam(const PolicyParams& like) : m(like.zeros_like()), v(like.zeros_like()) {}

  void step(PolicyParams& p, const PolicyParams& g, double lr) {
    ++step_count;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
    for (std::size_t i = 0; i < kNumTensors; ++i) {
      m.t[i] = beta1 * m.t[i] + (1.0 - beta1) * g.t[i];
      v.t[i] = beta2 * v.t[i] + (1.0 - beta2) * g.t[i].cwiseProduct(g.t[i]);
      p.t[i].array() -= lr * ((m.t[i].array() / c1) / ((v.t[i].array() / c2).sqrt() + eps));
    }
  }
};

inline double global_norm(const PolicyParams& g) {
  double s = 0.0;
  for (const auto& t : g.t) s += t.squaredNorm();
  return std::sqrt(s);
}

// ---- training loop ---------------------------------------------------------

struct IterationMetrics {
  int iteration = 0;
  int episodes_done = 0;
  std::size_t samples = 0;
  double mean_return = 0.0;  // per vehicle-episode
  double mean_length = 0.0;
  double flat_success = 0.0;
  double episode_success = 0.0;
  double surrogate = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  int epochs_run = 0;
  bool early_stopped = false;
};

// Flattened training data for one iteration.
struct TrainingBatch {
  Minibatch all;
  [[nodiscard]] Minibatch select(std::span<const Eigen::Index> rows) const {
    Minibatch mb;
    const auto n = static_cast<Eigen::Index>(rows.size());
    mb.obs.resize(n, all.obs.cols());
    mb.slots.resize(n, all.slots.cols());
    mb.actions.resize(n, all.actions.cols());
    mb.bits.resize(n, all.bits.cols());
    mb.old_log_probs.resize(n);
    mb.advantages.resize(n);
    mb.returns.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index r = rows[static_cast<std::size_t>(i)];
      mb.obs.row(i) = all.obs.row(r);
      mb.slots.row(i) = all.slots.row(r);
      mb.actions.row(i) = all.actions.row(r);
      mb.bits.row(i) = all.bits.row(r);
      mb.old_log_probs[i] = all.old_log_probs[r];
      mb.advantages[i] = all.advantages[r];
      mb.returns[i] = all.returns[r];
    }
    return mb;
  }
};

inline TrainingBatch flatten(const RolloutBuffer& buf, const TrainConfig& cfg) {
  const Architecture& a = buf.arch;
  const auto n = static_cast<Eigen::Index>(buf.num_samples());
  TrainingBatch tb;
  Minibatch& m = tb.all;
  m.obs.resize(n, static_cast<Eigen::Index>(kObservationWidth));
  m.slots.resize(n, a.slot_width());
  m.actions.resize(n, a.gaussian_dims());
  m.bits.resize(n, a.select_dims());
  m.old_log_probs.resize(n);
  m.advantages.resize(n);
  m.returns.resize(n);
  std::vector<double> adv_all;
  adv_all.reserve(static_cast<std::size_t>(n));
  Eigen::Index row = 0;
  for (const VehicleEpisode& e : buf.episodes) {
    const Advantages g = compute_gae(e.rewards, e.values, 0.0, cfg.gamma, cfg.gae_lambda);
    for (std::size_t t = 0; t < e.length(); ++t, ++row) {
      for (Eigen::Index k = 0; k < m.obs.cols(); ++k) m.obs(row, k) = e.obs[t * kObservationWidth + static_cast<std::size_t>(k)];
      for (Eigen::Index k = 0; k < m.slots.cols(); ++k)
        m.slots(row, k) = e.slots[t * static_cast<std::size_t>(m.slots.cols()) + static_cast<std::size_t>(k)];
      for (Eigen::Index k = 0; k < m.actions.cols(); ++k)
        m.actions(row, k) = e.actions[t * static_cast<std::size_t>(m.actions.cols()) + static_cast<std::size_t>(k)];
      for (Eigen::Index k = 0; k < m.bits.cols(); ++k)
        m.bits(row, k) = e.bits[t * static_cast<std::size_t>(m.bits.cols()) + static_cast<std::size_t>(k)];
      m.old_log_probs[row] = e.log_probs[t];
      m.returns[row] = g.returns[t];
      adv_all.push_back(g.advantages[t]);
    }
  }
  normalize_advantages(adv_all);
  for (Eigen::Index i = 0; i < n; ++i) m.advantages[i] = adv_all[static_cast<std::size_t>(i)];
  return tb;
}

struct TrainState {
  Agent agent;
  int episodes_done = 0;
  int iteration = 0;
  std::uint64_t seed = 0;
};

// Called after every iteration with the updated state.
using IterationHook = std::function<void(const IterationMetrics&, const TrainState&)>;

// One PPO update (all epochs) on a collected buffer. Returns loss diagnostics
// averaged over the last epoch run.
inline IterationMetrics update(Agent& agent, Adam& opt, const RolloutBuffer& buf, const TrainConfig& cfg,
                               CounterRng shuffle) {
  IterationMetrics m;
  m.samples = buf.num_samples();
  if (m.samples == 0) return m;
  const TrainingBatch tb = flatten(buf, cfg);
  const LossWeights weights{cfg.clip_eps, cfg.value_coef, cfg.entropy_coef};
  std::vector<Eigen::Index> order(m.samples);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  for (int epoch = 0; epoch < cfg.epochs_per_iter; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
    double sur = 0.0, vl = 0.0, ent = 0.0, cf = 0.0, kl = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.minibatch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.minibatch_size));
      const Minibatch mb = tb.select(std::span<const Eigen::Index>(order).subspan(start, end - start));
      const LossTerms lt = ppo_loss(agent.params, mb, weights);
      PolicyParams g = backward(agent.params, mb.slots, lt.forward, mb.actions, mb.bits, lt.grad);
      const double gn = global_norm(g);
      if (!std::isfinite(gn)) throw TrainingError("non-finite gradient norm in minibatch of " + std::to_string(mb.size()));
      if (cfg.max_grad_norm > 0.0 && gn > cfg.max_grad_norm)
        for (auto& t : g.t) t *= cfg.max_grad_norm / gn;
      opt.step(agent.params, g, cfg.learning_rate);
      sur += lt.surrogate;
      vl += lt.value_loss;
      ent += lt.entropy;
      cf += lt.clip_fraction;
      kl += lt.approx_kl;
      ++batches;
    }
    m.surrogate = sur / batches;
    m.value_loss = vl / batches;
    m.entropy = ent / batches;
    m.clip_fraction = cf / batches;
    m.approx_kl = kl / batches;
    m.epochs_run = epoch + 1;
    if (cfg.target_kl > 0.0 && m.approx_kl > cfg.target_kl) {
      m.early_stopped = true;
      break;
    }
  }
  if (!agent.params.all_finite()) throw TrainingError("parameters became non-finite after update");
  return m;
}

inline void summarize_rollouts(const RolloutBuffer& buf, IterationMetrics& m) {
  double ret = 0.0, len = 0.0;
  int success = 0;
  for (const auto& e : buf.episodes) {
    ret += e.total_return();
    len += static_cast<double>(e.length());
    success += e.terminal == CarStatus::exited;
  }
  const double n = static_cast<double>(std::max<std::size_t>(buf.episodes.size(), 1));
  m.mean_return = ret / n;
  m.mean_length = len / n;
  m.flat_success = success / n;
  int all_ok = 0;
  for (const auto& ep : buf.env_episodes) {
    bool ok = true;
    for (const auto& ev : ep.events) ok = ok && ev.kind == EventKind::exited;
    all_ok += ok;
  }
  m.episode_success = buf.env_episodes.empty() ? 0.0 : static_cast<double>(all_ok) / buf.env_episodes.size();
}

// Collect -> GAE -> epochs of minibatch updates, until total_episodes have
// been consumed. Episode i of the run uses derive_seed(episodes stream key, i).
inline TrainState train(const TrainConfig& cfg, const HighwayConfig& env, ModelMode mode, std::uint64_t seed,
                        const IterationHook& hook = {}, std::vector<IterationMetrics>* log = nullptr) {
  validate(cfg);
  validate(env);
  const CounterRng root(seed);
  TrainState st{Agent::create(root.split(stream::kInit), Architecture::for_mode(mode, env.num_cars)), 0, 0, seed};
  Adam opt(st.agent.params);
  while (st.episodes_done < cfg.total_episodes) {
    const int n = std::min(cfg.episodes_per_iter, cfg.total_episodes - st.episodes_done);
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < n; ++i)
      seeds.push_back(derive_seed(root.split(stream::kEpisodes).key(), static_cast<std::uint64_t>(st.episodes_done + i)));
    const RolloutBuffer buf = collect_rollouts(st.agent, env, seeds, cfg);
    IterationMetrics m = update(st.agent, opt, buf, cfg, root.split(stream::kMinibatch).split(static_cast<std::uint64_t>(st.iteration)));
    for (const auto& ep : buf.env_episodes) {
      st.agent.obs_norm.merge(ep.obs_stats);
      st.agent.msg_norm.merge(ep.msg_stats);
    }
    summarize_rollouts(buf, m);
    st.episodes_done += n;
    m.iteration = st.iteration++;
    m.episodes_done = st.episodes_done;
    if (log) log->push_back(m);
    if (hook) hook(m, st);
  }
  return st;
}

}  // namespace v2v
