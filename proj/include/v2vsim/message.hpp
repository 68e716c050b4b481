#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include "errors.hpp"
#include "vehicle.hpp"

namespace v2v {

inline constexpr std::size_t kMessageWidth = 21;
inline constexpr std::size_t kMessageFields = 12;
inline constexpr double kHardBrakeThreshold = 0.5;

// Basic safety message broadcast by every active car each tick.
struct V2VMessage {
  double car_id = 0.0;
  double global_message_id = 0.0;
  double episode_time_step = 0.0;
  double pos_x = 0.0;
  double pos_y = 0.0;
  double speed = 0.0;
  double car_angle = 0.0;
  double acceleration = 0.0;
  std::array<double, 10> path_history{};
  double hard_brake_indicator = 0.0;
  double steering_wheel_angle = 0.0;
  double car_size = 0.0;

  [[nodiscard]] std::array<double, kMessageWidth> to_array() const {
    std::array<double, kMessageWidth> out{};
    out[0] = car_id;
    out[1] = global_message_id;
    out[2] = episode_time_step;
    out[3] = pos_x;
    out[4] = pos_y;
    out[5] = speed;
    out[6] = car_angle;
    out[7] = acceleration;
    for (std::size_t i = 0; i < 10; ++i) out[8 + i] = path_history[i];
    out[18] = hard_brake_indicator;
    out[19] = steering_wheel_angle;
    out[20] = car_size;
    return out;
  }

  static V2VMessage from_span(std::span<const double> v) {
    if (v.size() != kMessageWidth)
      throw ContractError("V2V message must have " + std::to_string(kMessageWidth) + " scalars, got " +
                          std::to_string(v.size()));
    V2VMessage m;
    m.car_id = v[0];
    m.global_message_id = v[1];
    m.episode_time_step = v[2];
    m.pos_x = v[3];
    m.pos_y = v[4];
    m.speed = v[5];
    m.car_angle = v[6];
    m.acceleration = v[7];
    for (std::size_t i = 0; i < 10; ++i) m.path_history[i] = v[8 + i];
    m.hard_brake_indicator = v[18];
    m.steering_wheel_angle = v[19];
    m.car_size = v[20];
    return m;
  }

  [[nodiscard]] Vec2 position() const { return {pos_x, pos_y}; }
  friend bool operator==(const V2VMessage&, const V2VMessage&) = default;
};

// Labels in wire order, one per scalar.
inline const std::array<std::string, kMessageWidth>& message_labels() {
  static const std::array<std::string, kMessageWidth> labels = [] {
    std::array<std::string, kMessageWidth> l;
    l[0] = "car_id";
    l[1] = "global_message_id";
    l[2] = "episode_time_step";
    l[3] = "pos_x";
    l[4] = "pos_y";
    l[5] = "speed";
    l[6] = "car_angle";
    l[7] = "acceleration";
    for (int i = 0; i < 5; ++i) {
      l[8 + 2 * i] = "path_history_" + std::to_string(i) + "_x";
      l[9 + 2 * i] = "path_history_" + std::to_string(i) + "_y";
    }
    l[18] = "hard_brake_indicator";
    l[19] = "steering_wheel_angle";
    l[20] = "car_size";
    return l;
  }();
  return labels;
}

// Per-episode source of strictly increasing message ids.
class MessageCounter {
 public:
  MessageCounter() = default;
  explicit MessageCounter(std::uint64_t next) : next_(next) {}
  std::uint64_t next() { return next_++; }
  [[nodiscard]] std::uint64_t peek() const { return next_; }

 private:
  std::uint64_t next_ = 1;
};

inline std::array<double, 10> flatten_path(const std::array<Vec2, kPathHistorySlots>& path) {
  std::array<double, 10> out{};
  for (std::size_t i = 0; i < kPathHistorySlots; ++i) {
    out[2 * i] = path[i].x;
    out[2 * i + 1] = path[i].y;
  }
  return out;
}

inline V2VMessage build_v2v_message(const CarState& car, int time_step, MessageCounter& counter) {
  V2VMessage m;
  m.car_id = car.car_id;
  m.global_message_id = static_cast<double>(counter.next());
  m.episode_time_step = time_step;
  m.pos_x = car.position.x;
  m.pos_y = car.position.y;
  m.speed = car.speed;
  m.car_angle = car.heading;
  m.acceleration = car.acceleration;
  m.path_history = flatten_path(car.path_history);
  m.hard_brake_indicator = car.brake > kHardBrakeThreshold ? 1.0 : 0.0;
  m.steering_wheel_angle = car.steering_angle;
  m.car_size = car.length;
  return m;
}

// One flag per logical message field; path history counts as a single field.
using FieldMask = std::array<bool, kMessageFields>;

inline constexpr FieldMask kAllFields = {true, true, true, true, true, true, true, true, true, true, true, true};

// Scalar range [first, last) covered by logical field `f`.
constexpr std::pair<std::size_t, std::size_t> field_span(std::size_t f) {
  if (f < 8) return {f, f + 1};
  if (f == 8) return {8, 18};
  return {f + 9, f + 10};
}

inline V2VMessage apply_field_mask(const V2VMessage& msg, const FieldMask& mask) {
  auto v = msg.to_array();
  for (std::size_t f = 0; f < kMessageFields; ++f) {
    if (mask[f]) continue;
    const auto [lo, hi] = field_span(f);
    for (std::size_t i = lo; i < hi; ++i) v[i] = 0.0;
  }
  return V2VMessage::from_span(v);
}

}  // namespace v2v
