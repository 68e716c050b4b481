#pragma once

// 2D highway world: layout, kinematics, collisions, exits, lidar, rewards.
//
// The corridor is a straight strip in a local (s, n) frame: s runs along the
// road from the start wall to the end wall, n is the lateral offset with the
// left edge at +width/2. Exits are gaps in the right edge (n = -width/2); each
// exit region straddles its gap, exit_depth deep on both sides of the edge.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "geometry.hpp"
#include "message.hpp"
#include "rng.hpp"
#include "vehicle.hpp"

namespace v2v {

inline constexpr double kStepPenalty = -0.5;
inline constexpr double kExitReward = 60.0;
inline constexpr double kFailPenalty = -60.0;
inline constexpr std::size_t kLidarRays = 18;
inline constexpr double kWidthRatio = 0.45;
inline constexpr double kMinClassLength = 3.5;
inline constexpr double kMaxClassLength = 5.5;
inline constexpr int kStartColumns = 3;
inline constexpr double kStartRowSpacing = 10.0;
inline constexpr double kFirstRowOffset = 6.0;

struct Range {
  double min = 0.0;
  double max = 0.0;
  friend bool operator==(const Range&, const Range&) = default;
};

struct HighwayConfig {
  int num_cars = 12;
  int num_size_classes = 5;
  int num_exits = 2;
  int num_start_positions = 15;
  Range length_range{200.0, 300.0};
  Range angle_range{-0.5, 0.5};
  double width = 16.0;
  double fog_probability = 0.1;
  double fog_range_factor = 0.5;
  std::optional<double> comm_range;  // empty = unlimited
  int max_steps = 500;
  std::uint64_t seed = 0;

  double dt = 0.1;
  double lidar_max_range = 40.0;
  double exit_gap = 8.0;
  double exit_depth = 3.0;
  Range max_speed_range{8.0, 14.0};
  double initial_speed_fraction = 0.5;  // of each car's max_speed
  double wheelbase_ratio = 0.6;
  int path_history_interval = 5;
  VehicleLimits limits;

  friend bool operator==(const HighwayConfig&, const HighwayConfig&) = default;
};

inline double size_class_length(const HighwayConfig& cfg, int cls) {
  if (cfg.num_size_classes == 1) return 0.5 * (kMinClassLength + kMaxClassLength);
  return kMinClassLength + (kMaxClassLength - kMinClassLength) * cls / (cfg.num_size_classes - 1);
}

// Along-track centre of exit k as a fraction of corridor length.
inline double exit_fraction(int num_exits, int k) {
  if (num_exits == 1) return 0.95;
  return 0.6 + 0.35 * k / (num_exits - 1);
}

inline void validate(const HighwayConfig& c) {
  auto fail = [](const std::string& what) { throw ConfigError("invalid highway config: " + what); };
  if (c.num_cars < 1) fail("num_cars must be >= 1");
  if (c.num_size_classes < 1) fail("num_size_classes must be >= 1");
  if (c.num_exits < 1) fail("num_exits must be >= 1");
  if (c.num_cars > c.num_start_positions) fail("num_cars <= num_start_positions (distinct start slots)");
  if (!(c.fog_probability >= 0.0 && c.fog_probability <= 1.0)) fail("fog_probability must be in [0,1]");
  if (!(c.fog_range_factor > 0.0 && c.fog_range_factor <= 1.0)) fail("fog_range_factor must be in (0,1]");
  if (!(c.length_range.min > 0.0)) fail("length_range.min > 0");
  if (c.length_range.max < c.length_range.min) fail("length_range.max >= length_range.min");
  if (c.angle_range.max < c.angle_range.min) fail("angle_range.max >= angle_range.min");
  const double max_width = kWidthRatio * size_class_length(c, c.num_size_classes - 1);
  if (!(c.width > max_width)) fail("width must exceed the widest vehicle");
  if (!(c.width / kStartColumns > max_width)) fail("width too narrow for non-overlapping start columns");
  if (c.comm_range && !(*c.comm_range >= 0.0)) fail("comm_range must be >= 0");
  if (c.max_steps < 1) fail("max_steps must be >= 1");
  if (!(c.dt > 0.0)) fail("dt must be > 0");
  if (!(c.lidar_max_range > 0.0)) fail("lidar_max_range must be > 0");
  if (!(c.exit_gap > 0.0) || !(c.exit_depth > 0.0)) fail("exit_gap and exit_depth must be > 0");
  if (!(c.max_speed_range.min > 0.0) || c.max_speed_range.max < c.max_speed_range.min)
    fail("max_speed_range must be positive and ordered");
  if (!(c.initial_speed_fraction >= 0.0 && c.initial_speed_fraction <= 1.0))
    fail("initial_speed_fraction must be in [0,1]");
  if (!(c.wheelbase_ratio > 0.0)) fail("wheelbase_ratio must be > 0");
  if (c.path_history_interval < 1) fail("path_history_interval must be >= 1");
  const int rows = (c.num_start_positions + kStartColumns - 1) / kStartColumns;
  const double start_end = kFirstRowOffset + kStartRowSpacing * (rows - 1) + 0.5 * kMaxClassLength;
  const double L = c.length_range.min;
  if (!(exit_fraction(c.num_exits, 0) * L - 0.5 * c.exit_gap > start_end))
    fail("length_range.min too short: first exit overlaps the start area");
  if (!(exit_fraction(c.num_exits, c.num_exits - 1) * L + 0.5 * c.exit_gap < L))
    fail("length_range.min too short: last exit runs past the corridor end");
  if (c.num_exits > 1 && !(0.35 * L / (c.num_exits - 1) > c.exit_gap)) fail("exits overlap");
}

struct ExitRegion {
  double s_lo = 0.0;
  double s_hi = 0.0;
  OrientedRect area;  // centred on the gap, straddling the edge
  Vec2 target;        // gap centre on the right edge
  friend bool operator==(const ExitRegion&, const ExitRegion&) = default;
};

struct WorldGeometry {
  Vec2 origin;
  double length = 0.0;
  double width = 0.0;
  double angle = 0.0;
  std::vector<Segment> walls;
  std::vector<ExitRegion> exits;

  [[nodiscard]] Vec2 axis_s() const { return unit_from_angle(angle); }
  [[nodiscard]] Vec2 axis_n() const { return perp(axis_s()); }
  [[nodiscard]] Vec2 to_world(double s, double n) const { return origin + axis_s() * s + axis_n() * n; }
  // Returns (s, n).
  [[nodiscard]] Vec2 to_local(Vec2 p) const {
    const Vec2 d = p - origin;
    return {dot(d, axis_s()), dot(d, axis_n())};
  }

  friend bool operator==(const WorldGeometry&, const WorldGeometry&) = default;
};

inline WorldGeometry build_geometry(const HighwayConfig& cfg, double length, double angle) {
  WorldGeometry g;
  g.length = length;
  g.width = cfg.width;
  g.angle = angle;
  const double hw = 0.5 * cfg.width;
  for (int k = 0; k < cfg.num_exits; ++k) {
    const double mid = exit_fraction(cfg.num_exits, k) * length;
    ExitRegion e;
    e.s_lo = mid - 0.5 * cfg.exit_gap;
    e.s_hi = mid + 0.5 * cfg.exit_gap;
    e.area = {g.to_world(mid, -hw), angle, 0.5 * cfg.exit_gap, cfg.exit_depth};
    e.target = g.to_world(mid, -hw);
    g.exits.push_back(e);
  }
  g.walls.push_back({g.to_world(0.0, -hw), g.to_world(0.0, hw)});          // start
  g.walls.push_back({g.to_world(0.0, hw), g.to_world(length, hw)});        // left edge
  g.walls.push_back({g.to_world(length, hw), g.to_world(length, -hw)});    // end
  double s = length;
  for (auto it = g.exits.rbegin(); it != g.exits.rend(); ++it) {           // right edge, gaps removed
    g.walls.push_back({g.to_world(s, -hw), g.to_world(it->s_hi, -hw)});
    s = it->s_lo;
  }
  g.walls.push_back({g.to_world(s, -hw), g.to_world(0.0, -hw)});
  return g;
}

// World positions of every start slot, row-major from the start wall.
inline std::vector<Vec2> start_slots(const HighwayConfig& cfg, const WorldGeometry& g) {
  std::vector<Vec2> slots;
  for (int i = 0; i < cfg.num_start_positions; ++i) {
    const int row = i / kStartColumns;
    const int col = i % kStartColumns;
    const double s = kFirstRowOffset + kStartRowSpacing * row;
    const double n = -0.5 * cfg.width + cfg.width * (col + 0.5) / kStartColumns;
    slots.push_back(g.to_world(s, n));
  }
  return slots;
}

enum class EventKind : std::uint8_t { none, exited, crashed, passed_exit, timed_out };

constexpr std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::none: return "none";
    case EventKind::exited: return "exited";
    case EventKind::crashed: return "crashed";
    case EventKind::passed_exit: return "passed_exit";
    case EventKind::timed_out: return "timed_out";
  }
  return "?";
}

struct StepEvent {
  int car_id = 0;
  EventKind kind = EventKind::none;
  friend bool operator==(const StepEvent&, const StepEvent&) = default;
};

struct WorldState {
  HighwayConfig config;
  std::uint64_t episode_seed = 0;
  WorldGeometry geometry;
  std::vector<CarState> cars;  // indexed by car_id; terminal cars stay for rendering
  int step_count = 0;
  bool fog = false;
  std::uint64_t next_message_id = 1;
  std::vector<V2VMessage> inbox;  // broadcast at the previous tick

  [[nodiscard]] int num_active() const {
    return static_cast<int>(std::count_if(cars.begin(), cars.end(), [](const CarState& c) { return c.active(); }));
  }
  [[nodiscard]] bool done() const { return num_active() == 0; }
  [[nodiscard]] std::vector<int> active_ids() const {
    std::vector<int> ids;
    for (const auto& c : cars)
      if (c.active()) ids.push_back(c.car_id);
    return ids;
  }
  [[nodiscard]] double effective_lidar_range() const {
    return fog ? config.lidar_max_range * config.fog_range_factor : config.lidar_max_range;
  }

  friend bool operator==(const WorldState&, const WorldState&) = default;
};

inline std::vector<V2VMessage> broadcast_messages(WorldState& w) {
  MessageCounter counter(w.next_message_id);
  std::vector<V2VMessage> out;
  for (const auto& c : w.cars)
    if (c.active()) out.push_back(build_v2v_message(c, w.step_count, counter));
  w.next_message_id = counter.peek();
  return out;
}

// Fresh episode. Layout and fog use separate named streams of the episode seed.
inline WorldState reset_world(const HighwayConfig& cfg, std::uint64_t episode_seed) {
  validate(cfg);
  const CounterRng root(episode_seed);
  CounterRng layout = root.split(stream::kLayout);
  CounterRng fog = root.split(stream::kFog);

  WorldState w;
  w.config = cfg;
  w.episode_seed = episode_seed;
  const double length = layout.uniform(cfg.length_range.min, cfg.length_range.max);
  const double angle = layout.uniform(cfg.angle_range.min, cfg.angle_range.max);
  w.geometry = build_geometry(cfg, length, angle);

  // Partial Fisher-Yates over start slots.
  std::vector<int> slot_ids(cfg.num_start_positions);
  std::iota(slot_ids.begin(), slot_ids.end(), 0);
  for (int i = 0; i < cfg.num_cars; ++i) {
    const auto j = i + static_cast<int>(layout.below(static_cast<std::uint64_t>(cfg.num_start_positions - i)));
    std::swap(slot_ids[i], slot_ids[j]);
  }
  const auto slots = start_slots(cfg, w.geometry);
  for (int i = 0; i < cfg.num_cars; ++i) {
    CarState c;
    c.car_id = i;
    c.position = slots[slot_ids[i]];
    c.heading = angle;
    c.size_class = static_cast<int>(layout.below(cfg.num_size_classes));
    c.length = size_class_length(cfg, c.size_class);
    c.width = kWidthRatio * c.length;
    c.wheelbase = cfg.wheelbase_ratio * c.length;
    c.assigned_exit = static_cast<int>(layout.below(cfg.num_exits));
    c.max_speed = layout.uniform(cfg.max_speed_range.min, cfg.max_speed_range.max);
    c.speed = cfg.initial_speed_fraction * c.max_speed;
    w.cars.push_back(c);
  }
  w.fog = fog.bernoulli(cfg.fog_probability);
  w.inbox = broadcast_messages(w);
  return w;
}

// Car-car overlaps (both cars) and car-wall overlaps among active cars.
inline std::vector<StepEvent> detect_collisions(const WorldState& w) {
  std::vector<bool> hit(w.cars.size(), false);
  for (std::size_t i = 0; i < w.cars.size(); ++i) {
    if (!w.cars[i].active()) continue;
    const OrientedRect a = w.cars[i].body();
    for (std::size_t j = i + 1; j < w.cars.size(); ++j) {
      if (w.cars[j].active() && overlaps(a, w.cars[j].body())) hit[i] = hit[j] = true;
    }
    if (!hit[i]) {
      hit[i] = std::any_of(w.geometry.walls.begin(), w.geometry.walls.end(),
                           [&](const Segment& s) { return overlaps(a, s); });
    }
  }
  std::vector<StepEvent> events;
  for (std::size_t i = 0; i < hit.size(); ++i)
    if (hit[i]) events.push_back({w.cars[i].car_id, EventKind::crashed});
  return events;
}

// Nearest-obstacle distances on 18 bearings, 20 degrees apart, ray 0 along
// the heading. Walls and other active car bodies block rays; exit gaps do not.
inline std::array<double, kLidarRays> lidar_scan(const CarState& car, const WorldState& w, double max_range) {
  std::array<double, kLidarRays> out;
  out.fill(max_range);
  for (std::size_t k = 0; k < kLidarRays; ++k) {
    const double bearing = car.heading + 2.0 * std::numbers::pi * static_cast<double>(k) / kLidarRays;
    const Ray ray{car.position, unit_from_angle(bearing)};
    double best = max_range;
    for (const Segment& s : w.geometry.walls)
      if (auto t = ray_hit(ray, s); t && *t < best) best = *t;
    for (const CarState& other : w.cars) {
      if (other.car_id == car.car_id || !other.active()) continue;
      if (auto t = ray_hit(ray, other.body()); t && *t < best) best = *t;
    }
    out[k] = best;
  }
  return out;
}

inline std::array<double, kLidarRays> lidar_scan(const CarState& car, const WorldState& w) {
  return lidar_scan(car, w, w.effective_lidar_range());
}

struct StepOutcome {
  std::vector<double> rewards;     // indexed by car_id; 0 for cars inactive before the step
  std::vector<StepEvent> events;   // terminal events only
  bool done = false;
};

// Advances one tick. `actions` holds one entry per active car in ascending
// car_id order.
inline StepOutcome advance(WorldState& w, std::span<const Action> actions) {
  const std::vector<int> ids = w.active_ids();
  if (actions.size() != ids.size())
    throw ContractError("step expects " + std::to_string(ids.size()) + " actions (one per active car), got " +
                        std::to_string(actions.size()));
  for (const Action& a : actions)
    if (!a.finite()) throw ContractError("action components must be finite");

  w.inbox = broadcast_messages(w);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    CarState& c = w.cars[ids[i]];
    c = step_kinematics(c, actions[i], w.config.dt, w.config.limits);
    ++c.steps;
  }
  ++w.step_count;
  if (w.step_count % w.config.path_history_interval == 0)
    for (int id : ids) w.cars[id].record_path_point();

  std::vector<bool> collided(w.cars.size(), false);
  for (const StepEvent& e : detect_collisions(w)) collided[e.car_id] = true;

  StepOutcome out;
  out.rewards.assign(w.cars.size(), 0.0);
  std::vector<CarStatus> next(w.cars.size(), CarStatus::active);
  const double hw = 0.5 * w.geometry.width;
  for (int id : ids) {
    const CarState& c = w.cars[id];
    const OrientedRect body = c.body();
    const ExitRegion& mine = w.geometry.exits[c.assigned_exit];
    const Vec2 local = w.geometry.to_local(c.position);
    const bool off_road = std::abs(local.y) > hw || local.x < 0.0 || local.x > w.geometry.length;

    CarStatus s = CarStatus::active;
    if (overlaps(body, mine.area)) s = CarStatus::exited;
    else if (collided[id] || off_road) s = CarStatus::crashed;
    else if (local.x > mine.s_hi) s = CarStatus::passed_exit;
    else if (w.step_count >= w.config.max_steps) s = CarStatus::timed_out;
    next[id] = s;
  }
  for (int id : ids) {
    double r = kStepPenalty;
    EventKind kind = EventKind::none;
    switch (next[id]) {
      case CarStatus::exited: r += kExitReward; kind = EventKind::exited; break;
      case CarStatus::crashed: r += kFailPenalty; kind = EventKind::crashed; break;
      case CarStatus::passed_exit: r += kFailPenalty; kind = EventKind::passed_exit; break;
      case CarStatus::timed_out: kind = EventKind::timed_out; break;
      case CarStatus::active: break;
    }
    w.cars[id].status = next[id];
    out.rewards[id] = r;
    if (kind != EventKind::none) out.events.push_back({id, kind});
  }
  out.done = w.done();
  return out;
}

}  // namespace v2v
