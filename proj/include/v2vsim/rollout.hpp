#pragma once

// Runs full episodes under one shared controller and records per-vehicle
// trajectories. Used by the trainer, the evaluator and the renderer.

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

#include "env.hpp"
#include "normalizer.hpp"
#include "policy.hpp"
#include "protocol.hpp"
#include "rng.hpp"

namespace v2v {

// Learned policy plus the input normalizers it was trained with.
struct Agent {
  PolicyParams params;
  RunningNorm obs_norm{static_cast<Eigen::Index>(kObservationWidth)};
  RunningNorm msg_norm{static_cast<Eigen::Index>(kMessageWidth)};

  static Agent create(const CounterRng& rng, const Architecture& arch) {
    Agent a;
    a.params = init_params(rng, arch);
    return a;
  }
  friend bool operator==(const Agent&, const Agent&) = default;
};

// Hand-written controller for baselines and rendering without a checkpoint.
using ScriptedPolicy = std::function<Action(const CarState&, const WorldState&, CounterRng&)>;

inline ScriptedPolicy uniform_random_policy() {
  return [](const CarState&, const WorldState&, CounterRng& rng) {
    return Action{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform()};
  };
}

struct Controller {
  const Agent* agent = nullptr;
  ScriptedPolicy scripted;
};

enum class ActionSelection { sample, greedy };

struct EpisodeOptions {
  ActionSelection selection = ActionSelection::sample;
  double dropout_p = 0.0;
  DropoutVariant dropout_variant = DropoutVariant::per_message;
  bool record = false;  // keep network inputs and actions for training
};

// One car's trajectory, stored row-major with fixed widths.
struct VehicleEpisode {
  int car_id = 0;
  std::vector<double> obs;      // T x 40 normalized
  std::vector<double> slots;    // T x slot_width
  std::vector<double> actions;  // T x gaussian_dims, pre-clamp
  std::vector<double> bits;     // T x select_dims
  std::vector<double> log_probs;
  std::vector<double> values;
  std::vector<double> rewards;
  CarStatus terminal = CarStatus::active;

  [[nodiscard]] std::size_t length() const { return rewards.size(); }
  [[nodiscard]] double total_return() const {
    double r = 0.0;
    for (double x : rewards) r += x;
    return r;
  }
  friend bool operator==(const VehicleEpisode&, const VehicleEpisode&) = default;
};

struct EpisodeResult {
  std::uint64_t episode_seed = 0;
  bool fog = false;
  std::vector<VehicleEpisode> vehicles;  // by car_id
  std::vector<StepEvent> events;
  RunningNorm obs_stats{static_cast<Eigen::Index>(kObservationWidth)};
  RunningNorm msg_stats{static_cast<Eigen::Index>(kMessageWidth)};

  [[nodiscard]] int successes() const {
    return static_cast<int>(std::count_if(vehicles.begin(), vehicles.end(),
                                          [](const VehicleEpisode& v) { return v.terminal == CarStatus::exited; }));
  }
};

using StepHook = std::function<void(const WorldState&)>;

namespace detail {

inline std::array<double, kMessageWidth> pad_payload(const Eigen::VectorXd& payload) {
  std::array<double, kMessageWidth> out{};
  for (Eigen::Index i = 0; i < payload.size(); ++i) out[static_cast<std::size_t>(i)] = payload[i];
  return out;
}

}  // namespace detail

inline EpisodeResult run_episode(const Controller& ctl, const HighwayConfig& cfg, std::uint64_t episode_seed,
                                 const EpisodeOptions& opt, const StepHook& hook = {}) {
  auto [world, first_obs] = reset(cfg, episode_seed);
  const CounterRng root(episode_seed);
  CounterRng noise = root.split(stream::kPolicyNoise);
  CounterRng dropout = root.split(stream::kDropout);

  EpisodeResult res;
  res.episode_seed = episode_seed;
  res.fog = world.fog;
  res.vehicles.resize(world.cars.size());
  for (std::size_t i = 0; i < world.cars.size(); ++i) res.vehicles[i].car_id = static_cast<int>(i);
  if (hook) hook(world);

  const Agent* agent = ctl.agent;
  const Architecture arch = agent ? agent->params.arch : Architecture{};
  const Eigen::VectorXd log_std = agent ? effective_log_std(agent->params) : Eigen::VectorXd{};
  std::vector<Eigen::VectorXd> payloads(world.cars.size(), Eigen::VectorXd::Zero(kEmergentMessageDims));
  std::vector<FieldMask> masks(world.cars.size(), kAllFields);

  std::vector<PersonalObservation> obs = std::move(first_obs);
  while (!world.done()) {
    const std::vector<int> ids = world.active_ids();
    const auto n = static_cast<Eigen::Index>(ids.size());
    std::vector<Action> actions(ids.size());

    if (!agent) {
      for (std::size_t i = 0; i < ids.size(); ++i) actions[i] = ctl.scripted(world.cars[ids[i]], world, noise);
    } else {
      Eigen::MatrixXd obs_batch(n, static_cast<Eigen::Index>(kObservationWidth));
      Eigen::MatrixXd slot_batch(n, arch.slot_width());
      for (Eigen::Index r = 0; r < n; ++r) {
        const auto raw = obs[static_cast<std::size_t>(r)].to_array();
        res.obs_stats.observe(raw);
        std::array<double, kObservationWidth> normed{};
        agent->obs_norm.apply(raw, normed);
        for (std::size_t k = 0; k < kObservationWidth; ++k) obs_batch(r, static_cast<Eigen::Index>(k)) = normed[k];
      }
      if (arch.uses_messages()) {
        const bool drop_all = opt.dropout_variant == DropoutVariant::global_step &&
                              dropout.split(static_cast<std::uint64_t>(world.step_count)).bernoulli(opt.dropout_p);
        for (Eigen::Index r = 0; r < n; ++r) {
          const CarState& me = world.cars[static_cast<std::size_t>(ids[static_cast<std::size_t>(r)])];
          std::vector<V2VMessage> inbox = gather_messages(me, world);
          if (opt.dropout_variant == DropoutVariant::per_message && opt.dropout_p > 0.0)
            inbox = drop_messages(std::move(inbox), opt.dropout_p, DropoutVariant::per_message, dropout);
          else if (drop_all)
            inbox.clear();
          std::vector<std::array<double, kMessageWidth>> contents;
          for (const V2VMessage& m : inbox) {
            const auto sender = static_cast<std::size_t>(m.car_id);
            if (arch.mode == ModelMode::emergent_continuous) {
              contents.push_back(detail::pad_payload(payloads[sender]));
              continue;
            }
            const auto raw = m.to_array();
            res.msg_stats.observe(raw);
            std::array<double, kMessageWidth> normed{};
            agent->msg_norm.apply(raw, normed);
            if (arch.mode == ModelMode::emergent_select) normed = apply_field_mask(V2VMessage::from_span(normed), masks[sender]).to_array();
            contents.push_back(normed);
          }
          slot_batch.row(r) = build_slots(contents, arch.max_senders).transpose();
        }
      }
      const ForwardPass f = forward_batch(agent->params, obs_batch, slot_batch);
      const Eigen::MatrixXd means = f.means(arch);
      const Eigen::MatrixXd logits = f.logits(arch);
      for (Eigen::Index r = 0; r < n; ++r) {
        const int id = ids[static_cast<std::size_t>(r)];
        const Eigen::VectorXd mu = means.row(r).transpose();
        const Eigen::VectorXd lg = logits.row(r).transpose();
        const SampledAction s = opt.selection == ActionSelection::sample ? sample_action(mu, log_std, noise, lg)
                                                                         : greedy_action(mu, log_std, lg);
        actions[static_cast<std::size_t>(r)] = Action{s.gaussian[0], s.gaussian[1], s.gaussian[2]};
        if (arch.mode == ModelMode::emergent_continuous)
          payloads[static_cast<std::size_t>(id)] = s.gaussian.tail(kEmergentMessageDims).cwiseMax(-1.0).cwiseMin(1.0);
        if (arch.mode == ModelMode::emergent_select)
          for (int k = 0; k < kSelectLogits; ++k) masks[static_cast<std::size_t>(id)][static_cast<std::size_t>(k)] = s.bits[k] > 0.5;
        if (opt.record) {
          VehicleEpisode& v = res.vehicles[static_cast<std::size_t>(id)];
          for (Eigen::Index k = 0; k < obs_batch.cols(); ++k) v.obs.push_back(obs_batch(r, k));
          for (Eigen::Index k = 0; k < slot_batch.cols(); ++k) v.slots.push_back(slot_batch(r, k));
          for (Eigen::Index k = 0; k < s.gaussian.size(); ++k) v.actions.push_back(s.gaussian[k]);
          for (Eigen::Index k = 0; k < s.bits.size(); ++k) v.bits.push_back(s.bits[k]);
          v.log_probs.push_back(s.log_prob);
          v.values.push_back(f.value[r]);
        }
      }
    }

    Transition tr = step(world, actions);
    for (int id : ids) {
      VehicleEpisode& v = res.vehicles[static_cast<std::size_t>(id)];
      v.rewards.push_back(tr.rewards[static_cast<std::size_t>(id)]);
      v.terminal = world.cars[static_cast<std::size_t>(id)].status;
    }
    res.events.insert(res.events.end(), tr.events.begin(), tr.events.end());
    obs = std::move(tr.observations);
    if (hook) hook(world);
  }
  return res;
}

inline unsigned resolve_threads(int requested) {
  if (requested > 0) return static_cast<unsigned>(requested);
  return std::max(1u, std::thread::hardware_concurrency());
}

// Runs fn(i) for i in [0, n) on up to `threads` workers. Callers write
// results into pre-sized slots, so output order never depends on scheduling.
template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  threads = std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace v2v
