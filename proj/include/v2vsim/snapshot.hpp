#pragma once

// Versioned JSON document for a WorldState. Doubles are written with
// round-trip precision, so a loaded world continues bit-identically.

#include <nlohmann/json.hpp>

#include <string>

#include "config.hpp"
#include "sim.hpp"

namespace v2v {

inline constexpr int kSnapshotVersion = 1;

namespace detail {

inline json vec_json(Vec2 v) { return json::array({v.x, v.y}); }
inline Vec2 vec_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }
inline json rect_json(const OrientedRect& r) {
  return {{"center", vec_json(r.center)}, {"heading", r.heading}, {"half_length", r.half_length}, {"half_width", r.half_width}};
}
inline OrientedRect rect_from(const json& j) {
  return {vec_from(j.at("center")), j.at("heading").get<double>(), j.at("half_length").get<double>(),
          j.at("half_width").get<double>()};
}

inline CarStatus parse_status(const std::string& s) {
  for (CarStatus c : {CarStatus::active, CarStatus::exited, CarStatus::crashed, CarStatus::passed_exit, CarStatus::timed_out})
    if (to_string(c) == s) return c;
  throw ConfigError("unknown car status '" + s + "'");
}

}  // namespace detail

inline json world_to_json(const WorldState& w) {
  using detail::vec_json;
  json geom = {{"origin", vec_json(w.geometry.origin)},
               {"length", w.geometry.length},
               {"width", w.geometry.width},
               {"angle", w.geometry.angle},
               {"walls", json::array()},
               {"exits", json::array()}};
  for (const Segment& s : w.geometry.walls) geom["walls"].push_back({vec_json(s.a), vec_json(s.b)});
  for (const ExitRegion& e : w.geometry.exits)
    geom["exits"].push_back(
        {{"s_lo", e.s_lo}, {"s_hi", e.s_hi}, {"area", detail::rect_json(e.area)}, {"target", vec_json(e.target)}});
  json cars = json::array();
  for (const CarState& c : w.cars) {
    json path = json::array();
    for (Vec2 p : c.path_history) path.push_back(vec_json(p));
    cars.push_back({{"car_id", c.car_id},
                    {"position", vec_json(c.position)},
                    {"speed", c.speed},
                    {"heading", c.heading},
                    {"steering_angle", c.steering_angle},
                    {"acceleration", c.acceleration},
                    {"brake", c.brake},
                    {"size_class", c.size_class},
                    {"length", c.length},
                    {"width", c.width},
                    {"wheelbase", c.wheelbase},
                    {"max_speed", c.max_speed},
                    {"assigned_exit", c.assigned_exit},
                    {"path_history", path},
                    {"status", std::string(to_string(c.status))},
                    {"steps", c.steps}});
  }
  json inbox = json::array();
  for (const V2VMessage& m : w.inbox) inbox.push_back(m.to_array());
  return {{"format", "v2vsim-world"},
          {"version", kSnapshotVersion},
          {"config", to_json(w.config)},
          {"episode_seed", w.episode_seed},
          {"step_count", w.step_count},
          {"fog", w.fog},
          {"next_message_id", w.next_message_id},
          {"geometry", geom},
          {"cars", cars},
          {"inbox", inbox}};
}

inline WorldState world_from_json(const json& j) {
  using detail::vec_from;
  try {
    if (j.at("format") != "v2vsim-world") throw ConfigError("not a world snapshot");
    if (j.at("version").get<int>() != kSnapshotVersion)
      throw ConfigError("unsupported snapshot version " + j.at("version").dump());
    WorldState w;
    read_highway(j.at("config"), w.config, "config");
    w.episode_seed = j.at("episode_seed").get<std::uint64_t>();
    w.step_count = j.at("step_count").get<int>();
    w.fog = j.at("fog").get<bool>();
    w.next_message_id = j.at("next_message_id").get<std::uint64_t>();
    const json& g = j.at("geometry");
    w.geometry.origin = vec_from(g.at("origin"));
    w.geometry.length = g.at("length").get<double>();
    w.geometry.width = g.at("width").get<double>();
    w.geometry.angle = g.at("angle").get<double>();
    for (const json& s : g.at("walls")) w.geometry.walls.push_back({vec_from(s.at(0)), vec_from(s.at(1))});
    for (const json& e : g.at("exits"))
      w.geometry.exits.push_back({e.at("s_lo").get<double>(), e.at("s_hi").get<double>(), detail::rect_from(e.at("area")),
                                  vec_from(e.at("target"))});
    for (const json& cj : j.at("cars")) {
      CarState c;
      c.car_id = cj.at("car_id").get<int>();
      c.position = vec_from(cj.at("position"));
      c.speed = cj.at("speed").get<double>();
      c.heading = cj.at("heading").get<double>();
      c.steering_angle = cj.at("steering_angle").get<double>();
      c.acceleration = cj.at("acceleration").get<double>();
      c.brake = cj.at("brake").get<double>();
      c.size_class = cj.at("size_class").get<int>();
      c.length = cj.at("length").get<double>();
      c.width = cj.at("width").get<double>();
      c.wheelbase = cj.at("wheelbase").get<double>();
      c.max_speed = cj.at("max_speed").get<double>();
      c.assigned_exit = cj.at("assigned_exit").get<int>();
      const json& path = cj.at("path_history");
      if (path.size() != kPathHistorySlots) throw ConfigError("path_history must have 5 points");
      for (std::size_t i = 0; i < kPathHistorySlots; ++i) c.path_history[i] = vec_from(path.at(i));
      c.status = detail::parse_status(cj.at("status").get<std::string>());
      c.steps = cj.at("steps").get<int>();
      w.cars.push_back(c);
    }
    for (const json& m : j.at("inbox")) w.inbox.push_back(V2VMessage::from_span(m.get<std::vector<double>>()));
    return w;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed world snapshot: ") + e.what());
  }
}

}  // namespace v2v
