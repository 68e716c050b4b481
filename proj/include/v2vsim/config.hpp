#pragma once

// JSON configuration with strict key checking. Every object rejects keys it
// does not know, naming the full dotted path of the offender.

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "errors.hpp"
#include "eval.hpp"
#include "policy.hpp"
#include "ppo.hpp"
#include "protocol.hpp"
#include "sim.hpp"

namespace v2v {

using json = nlohmann::json;

namespace detail {

using FieldReader = std::function<void(const json&)>;

inline void read_object(const json& j, const std::string& path, const std::map<std::string, FieldReader>& fields) {
  if (!j.is_object()) throw ConfigError("config key '" + path + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    const std::string full = path.empty() ? key : path + "." + key;
    auto it = fields.find(key);
    if (it == fields.end()) throw ConfigError("unknown config key '" + full + "'");
    try {
      it->second(value);
    } catch (const json::exception& e) {
      throw ConfigError("bad value for config key '" + full + "': " + e.what());
    }
  }
}

template <typename T>
FieldReader set(T& dst) {
  return [&dst](const json& v) { dst = v.get<T>(); };
}

inline FieldReader set_range(Range& dst) {
  return [&dst](const json& v) {
    if (!v.is_array() || v.size() != 2) throw ConfigError("range must be a [min, max] pair");
    dst = {v[0].get<double>(), v[1].get<double>()};
  };
}

inline json range_json(const Range& r) { return json::array({r.min, r.max}); }

}  // namespace detail

inline json to_json(const HighwayConfig& c) {
  return {{"num_cars", c.num_cars},
          {"num_size_classes", c.num_size_classes},
          {"num_exits", c.num_exits},
          {"num_start_positions", c.num_start_positions},
          {"length_range", detail::range_json(c.length_range)},
          {"angle_range", detail::range_json(c.angle_range)},
          {"width", c.width},
          {"fog_probability", c.fog_probability},
          {"fog_range_factor", c.fog_range_factor},
          {"comm_range", c.comm_range ? json(*c.comm_range) : json("unlimited")},
          {"max_steps", c.max_steps},
          {"seed", c.seed},
          {"dt", c.dt},
          {"lidar_max_range", c.lidar_max_range},
          {"exit_gap", c.exit_gap},
          {"exit_depth", c.exit_depth},
          {"max_speed_range", detail::range_json(c.max_speed_range)},
          {"initial_speed_fraction", c.initial_speed_fraction},
          {"wheelbase_ratio", c.wheelbase_ratio},
          {"path_history_interval", c.path_history_interval},
          {"steering_bound", c.limits.steering_bound},
          {"steering_rate", c.limits.steering_rate},
          {"accel_bound", c.limits.accel_bound},
          {"brake_decel", c.limits.brake_decel}};
}

inline std::optional<double> parse_comm_range(const json& v) {
  if (v.is_string()) {
    if (v.get<std::string>() == "unlimited") return std::nullopt;
    throw ConfigError("comm_range must be a number of meters or \"unlimited\"");
  }
  return v.get<double>();
}

inline void read_highway(const json& j, HighwayConfig& c, const std::string& path = "highway") {
  using detail::set;
  detail::read_object(j, path,
                      {{"num_cars", set(c.num_cars)},
                       {"num_size_classes", set(c.num_size_classes)},
                       {"num_exits", set(c.num_exits)},
                       {"num_start_positions", set(c.num_start_positions)},
                       {"length_range", detail::set_range(c.length_range)},
                       {"angle_range", detail::set_range(c.angle_range)},
                       {"width", set(c.width)},
                       {"fog_probability", set(c.fog_probability)},
                       {"fog_range_factor", set(c.fog_range_factor)},
                       {"comm_range", [&](const json& v) { c.comm_range = parse_comm_range(v); }},
                       {"max_steps", set(c.max_steps)},
                       {"seed", set(c.seed)},
                       {"dt", set(c.dt)},
                       {"lidar_max_range", set(c.lidar_max_range)},
                       {"exit_gap", set(c.exit_gap)},
                       {"exit_depth", set(c.exit_depth)},
                       {"max_speed_range", detail::set_range(c.max_speed_range)},
                       {"initial_speed_fraction", set(c.initial_speed_fraction)},
                       {"wheelbase_ratio", set(c.wheelbase_ratio)},
                       {"path_history_interval", set(c.path_history_interval)},
                       {"steering_bound", set(c.limits.steering_bound)},
                       {"steering_rate", set(c.limits.steering_rate)},
                       {"accel_bound", set(c.limits.accel_bound)},
                       {"brake_decel", set(c.limits.brake_decel)}});
}

inline std::string_view to_string(DropoutVariant v) {
  return v == DropoutVariant::per_message ? "per_message" : "global_step";
}

inline DropoutVariant parse_dropout_variant(std::string_view s) {
  if (s == "per_message") return DropoutVariant::per_message;
  if (s == "global_step") return DropoutVariant::global_step;
  throw ConfigError("unknown dropout variant '" + std::string(s) + "' (expected per_message or global_step)");
}

inline json to_json(const TrainConfig& c) {
  return {{"gamma", c.gamma},
          {"gae_lambda", c.gae_lambda},
          {"clip_eps", c.clip_eps},
          {"learning_rate", c.learning_rate},
          {"epochs_per_iter", c.epochs_per_iter},
          {"minibatch_size", c.minibatch_size},
          {"entropy_coef", c.entropy_coef},
          {"value_coef", c.value_coef},
          {"episodes_per_iter", c.episodes_per_iter},
          {"total_episodes", c.total_episodes},
          {"message_dropout_p", c.message_dropout_p},
          {"dropout_variant", std::string(to_string(c.dropout_variant))},
          {"target_kl", c.target_kl},
          {"max_grad_norm", c.max_grad_norm},
          {"checkpoint_every", c.checkpoint_every},
          {"num_threads", c.num_threads}};
}

inline void read_train(const json& j, TrainConfig& c, const std::string& path = "train") {
  using detail::set;
  detail::read_object(j, path,
                      {{"gamma", set(c.gamma)},
                       {"gae_lambda", set(c.gae_lambda)},
                       {"clip_eps", set(c.clip_eps)},
                       {"learning_rate", set(c.learning_rate)},
                       {"epochs_per_iter", set(c.epochs_per_iter)},
                       {"minibatch_size", set(c.minibatch_size)},
                       {"entropy_coef", set(c.entropy_coef)},
                       {"value_coef", set(c.value_coef)},
                       {"episodes_per_iter", set(c.episodes_per_iter)},
                       {"total_episodes", set(c.total_episodes)},
                       {"message_dropout_p", set(c.message_dropout_p)},
                       {"dropout_variant",
                        [&](const json& v) { c.dropout_variant = parse_dropout_variant(v.get<std::string>()); }},
                       {"target_kl", set(c.target_kl)},
                       {"max_grad_norm", set(c.max_grad_norm)},
                       {"checkpoint_every", set(c.checkpoint_every)},
                       {"num_threads", set(c.num_threads)}});
}

struct EvalConfig {
  std::vector<std::uint64_t> seeds = default_eval_seeds();
  int episodes = kDefaultEvalEpisodes;
  Condition condition = Condition::mixed;
};

struct RunConfig {
  ModelMode mode = ModelMode::v2v;
  std::uint64_t seed = 0;  // training seed
  HighwayConfig highway;
  TrainConfig train;
  EvalConfig eval;
  std::string output_dir;  // empty: $V2VSIM_OUTPUT_ROOT or ./runs
  std::string checkpoint;  // input checkpoint for eval/render
};

inline json to_json(const RunConfig& c) {
  return {{"mode", std::string(to_string(c.mode))},
          {"seed", c.seed},
          {"highway", to_json(c.highway)},
          {"train", to_json(c.train)},
          {"eval",
           {{"seeds", c.eval.seeds}, {"episodes", c.eval.episodes}, {"condition", std::string(to_string(c.eval.condition))}}},
          {"output_dir", c.output_dir},
          {"checkpoint", c.checkpoint}};
}

// Layers `j` over `c`; keys absent from `j` keep their current values.
inline void apply_json(const json& j, RunConfig& c) {
  using detail::set;
  detail::read_object(
      j, "",
      {{"mode", [&](const json& v) { c.mode = parse_mode(v.get<std::string>()); }},
       {"seed", set(c.seed)},
       {"highway", [&](const json& v) { read_highway(v, c.highway); }},
       {"train", [&](const json& v) { read_train(v, c.train); }},
       {"eval",
        [&](const json& v) {
          detail::read_object(v, "eval",
                              {{"seeds", set(c.eval.seeds)},
                               {"episodes", set(c.eval.episodes)},
                               {"condition", [&](const json& x) { c.eval.condition = parse_condition(x.get<std::string>()); }}});
        }},
       {"output_dir", set(c.output_dir)},
       {"checkpoint", set(c.checkpoint)}});
}

inline RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  apply_json(j, base);
  return base;
}

inline json to_json(const IterationMetrics& m) {
  return {{"iteration", m.iteration},         {"episodes_done", m.episodes_done}, {"samples", m.samples},
          {"mean_return", m.mean_return},     {"mean_length", m.mean_length},     {"flat_success", m.flat_success},
          {"episode_success", m.episode_success}, {"surrogate", m.surrogate},     {"value_loss", m.value_loss},
          {"entropy", m.entropy},             {"clip_fraction", m.clip_fraction}, {"approx_kl", m.approx_kl},
          {"epochs_run", m.epochs_run},       {"early_stopped", m.early_stopped}};
}

inline void validate(const RunConfig& c) {
  validate(c.highway);
  validate(c.train);
  if (c.eval.episodes < 1) throw ConfigError("invalid eval config: episodes must be >= 1");
  if (c.eval.seeds.empty()) throw ConfigError("invalid eval config: seeds must be nonempty");
}

}  // namespace v2v
