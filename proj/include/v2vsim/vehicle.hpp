#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

#include "geometry.hpp"

namespace v2v {

enum class CarStatus : std::uint8_t { active, exited, crashed, passed_exit, timed_out };

constexpr std::string_view to_string(CarStatus s) {
  switch (s) {
    case CarStatus::active: return "active";
    case CarStatus::exited: return "exited";
    case CarStatus::crashed: return "crashed";
    case CarStatus::passed_exit: return "passed_exit";
    case CarStatus::timed_out: return "timed_out";
  }
  return "?";
}

// Raw policy output for one car. Components are unbounded until
// step_kinematics clamps them.
struct Action {
  double acceleration_cmd = 0.0;  // [-1, 1]
  double steering_cmd = 0.0;      // [-1, 1]
  double brake_cmd = 0.0;         // [0, 1]

  [[nodiscard]] bool finite() const {
    return std::isfinite(acceleration_cmd) && std::isfinite(steering_cmd) && std::isfinite(brake_cmd);
  }
  friend bool operator==(const Action&, const Action&) = default;
};

struct VehicleLimits {
  double steering_bound = 0.6;  // rad
  double steering_rate = 1.0;   // rad/s slew limit
  double accel_bound = 4.0;     // m/s^2
  double brake_decel = 8.0;     // m/s^2 at full brake

  friend bool operator==(const VehicleLimits&, const VehicleLimits&) = default;
};

inline constexpr std::size_t kPathHistorySlots = 5;

struct CarState {
  int car_id = 0;
  Vec2 position;
  double speed = 0.0;  // along heading, never negative
  double heading = 0.0;
  double steering_angle = 0.0;
  double acceleration = 0.0;  // realized over the last tick
  double brake = 0.0;         // last clamped brake command
  int size_class = 0;
  double length = 0.0;
  double width = 0.0;
  double wheelbase = 0.0;
  double max_speed = 0.0;
  int assigned_exit = 0;
  std::array<Vec2, kPathHistorySlots> path_history{};  // newest first, zero-padded
  CarStatus status = CarStatus::active;
  int steps = 0;  // ticks survived while active

  [[nodiscard]] Vec2 velocity() const { return unit_from_angle(heading) * speed; }
  [[nodiscard]] bool active() const { return status == CarStatus::active; }
  [[nodiscard]] OrientedRect body() const { return {position, heading, 0.5 * length, 0.5 * width}; }

  void record_path_point() {
    std::shift_right(path_history.begin(), path_history.end(), 1);
    path_history.front() = position;
  }

  friend bool operator==(const CarState&, const CarState&) = default;
};

inline double wrap_angle(double a) { return std::remainder(a, 2.0 * std::numbers::pi); }

// Kinematic bicycle update. Commands are clamped here and nowhere else.
inline CarState step_kinematics(CarState car, const Action& action, double dt, const VehicleLimits& lim = {}) {
  const double accel = std::clamp(action.acceleration_cmd, -1.0, 1.0) * lim.accel_bound;
  const double brake = std::clamp(action.brake_cmd, 0.0, 1.0);
  const double target = std::clamp(action.steering_cmd, -1.0, 1.0) * lim.steering_bound;
  const double max_delta = lim.steering_rate * dt;
  const double steering = std::clamp(car.steering_angle + std::clamp(target - car.steering_angle, -max_delta, max_delta),
                                     -lim.steering_bound, lim.steering_bound);

  const double speed = std::clamp(car.speed + (accel - lim.brake_decel * brake) * dt, 0.0, car.max_speed);
  const double heading = car.heading + (car.speed / car.wheelbase) * std::tan(steering) * dt;

  car.acceleration = (speed - car.speed) / dt;
  car.speed = speed;
  car.steering_angle = steering;
  car.brake = brake;
  car.heading = wrap_angle(heading);
  car.position = car.position + unit_from_angle(heading) * (speed * dt);
  return car;
}

}  // namespace v2v
