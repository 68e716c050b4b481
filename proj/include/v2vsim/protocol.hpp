#pragma once

// Per-car observation vector and message exchange between cars.

#include <algorithm>
#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "message.hpp"
#include "rng.hpp"
#include "sim.hpp"

namespace v2v {

inline constexpr std::size_t kObservationWidth = 40;

struct PersonalObservation {
  Vec2 exit_position;
  double max_speed = 0.0;
  Vec2 velocity;
  Vec2 current_position;
  double steering_wheel_angle = 0.0;
  double size = 0.0;
  double acceleration = 0.0;
  double car_angle = 0.0;
  double time = 0.0;  // step / max_steps
  std::array<double, 10> path_history{};
  std::array<double, kLidarRays> lidar{};

  [[nodiscard]] std::array<double, kObservationWidth> to_array() const {
    std::array<double, kObservationWidth> v{};
    v[0] = exit_position.x;
    v[1] = exit_position.y;
    v[2] = max_speed;
    v[3] = velocity.x;
    v[4] = velocity.y;
    v[5] = current_position.x;
    v[6] = current_position.y;
    v[7] = steering_wheel_angle;
    v[8] = size;
    v[9] = acceleration;
    v[10] = car_angle;
    v[11] = time;
    std::copy(path_history.begin(), path_history.end(), v.begin() + 12);
    std::copy(lidar.begin(), lidar.end(), v.begin() + 22);
    return v;
  }

  static PersonalObservation from_span(std::span<const double> v) {
    if (v.size() != kObservationWidth)
      throw ContractError("personal observation must have " + std::to_string(kObservationWidth) + " scalars, got " +
                          std::to_string(v.size()));
    PersonalObservation o;
    o.exit_position = {v[0], v[1]};
    o.max_speed = v[2];
    o.velocity = {v[3], v[4]};
    o.current_position = {v[5], v[6]};
    o.steering_wheel_angle = v[7];
    o.size = v[8];
    o.acceleration = v[9];
    o.car_angle = v[10];
    o.time = v[11];
    std::copy(v.begin() + 12, v.begin() + 22, o.path_history.begin());
    std::copy(v.begin() + 22, v.end(), o.lidar.begin());
    return o;
  }

  friend bool operator==(const PersonalObservation&, const PersonalObservation&) = default;
};

inline PersonalObservation build_personal_observation(const CarState& car, const WorldState& w) {
  PersonalObservation o;
  o.exit_position = w.geometry.exits[car.assigned_exit].target;
  o.max_speed = car.max_speed;
  o.velocity = car.velocity();
  o.current_position = car.position;
  o.steering_wheel_angle = car.steering_angle;
  o.size = car.length;
  o.acceleration = car.acceleration;
  o.car_angle = car.heading;
  o.time = static_cast<double>(w.step_count) / w.config.max_steps;
  o.path_history = flatten_path(car.path_history);
  o.lidar = lidar_scan(car, w);
  return o;
}

// Messages carry the sender's state at the world's current tick.
inline V2VMessage build_v2v_message(const CarState& car, const WorldState& w, MessageCounter& counter) {
  return build_v2v_message(car, w.step_count, counter);
}

// Messages from other senders within range of the receiver, nearest first,
// ties broken by car id. `active_sender` filters out cars that have left.
template <typename ActivePredicate>
std::vector<V2VMessage> gather_messages(const CarState& receiver, std::span<const V2VMessage> all,
                                        std::optional<double> comm_range, ActivePredicate&& active_sender) {
  struct Entry {
    double dist;
    const V2VMessage* msg;
  };
  std::vector<Entry> picked;
  for (const V2VMessage& m : all) {
    if (static_cast<int>(m.car_id) == receiver.car_id || !active_sender(static_cast<int>(m.car_id))) continue;
    const double d = norm(m.position() - receiver.position);
    if (comm_range && !(d <= *comm_range)) continue;
    if (comm_range && *comm_range == 0.0) continue;
    picked.push_back({d, &m});
  }
  std::sort(picked.begin(), picked.end(), [](const Entry& a, const Entry& b) {
    if (a.dist != b.dist) return a.dist < b.dist;
    return a.msg->car_id < b.msg->car_id;
  });
  std::vector<V2VMessage> out;
  out.reserve(picked.size());
  for (const Entry& e : picked) out.push_back(*e.msg);
  return out;
}

inline std::vector<V2VMessage> gather_messages(const CarState& receiver, std::span<const V2VMessage> all,
                                               std::optional<double> comm_range) {
  return gather_messages(receiver, all, comm_range, [](int) { return true; });
}

// Inbox of one car in the live world: only senders still on the road.
inline std::vector<V2VMessage> gather_messages(const CarState& receiver, const WorldState& w) {
  return gather_messages(receiver, w.inbox, w.config.comm_range,
                         [&](int id) { return w.cars[static_cast<std::size_t>(id)].active(); });
}

enum class DropoutVariant { per_message, global_step };

// per_message: each message removed independently with probability p.
// global_step: one draw removes every message, or none.
template <typename T>
std::vector<T> drop_messages(std::vector<T> messages, double p, DropoutVariant variant, CounterRng& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw ContractError("dropout probability must be in [0,1]");
  if (variant == DropoutVariant::global_step) {
    if (rng.bernoulli(p)) messages.clear();
    return messages;
  }
  std::vector<T> kept;
  kept.reserve(messages.size());
  for (auto& m : messages)
    if (!rng.bernoulli(p)) kept.push_back(std::move(m));
  return kept;
}

}  // namespace v2v
