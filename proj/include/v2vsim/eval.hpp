#pragma once

// Multi-seed evaluation and the results table.

#include <nlohmann/json.hpp>

#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "rollout.hpp"
#include "sim.hpp"

namespace v2v {

enum class Condition { sunny, foggy, mixed };

constexpr std::string_view to_string(Condition c) {
  switch (c) {
    case Condition::sunny: return "sunny";
    case Condition::foggy: return "foggy";
    case Condition::mixed: return "mixed";
  }
  return "?";
}

inline Condition parse_condition(std::string_view s) {
  for (Condition c : {Condition::sunny, Condition::foggy, Condition::mixed})
    if (to_string(c) == s) return c;
  throw ConfigError("unknown condition '" + std::string(s) + "' (expected sunny, foggy or mixed)");
}

inline const std::vector<std::uint64_t>& default_eval_seeds() {
  static const std::vector<std::uint64_t> seeds = {1001, 2002, 3003};
  return seeds;
}

inline constexpr int kDefaultEvalEpisodes = 500;

struct EvalMetrics {
  Condition condition = Condition::mixed;
  int n_episodes = 0;
  int n_success = 0;
  int n_fail = 0;
  int n_episode_success = 0;
  int n_foggy = 0;
  double flat_success = 0.0;
  double episode_success = 0.0;
  std::optional<double> mean_len_success;
  std::optional<double> mean_len_fail;
  double mean_return = 0.0;  // per car
};

struct EvalReport {
  std::vector<std::uint64_t> seeds;
  std::vector<EvalMetrics> per_seed;
  EvalMetrics mean;
};

inline HighwayConfig apply_condition(HighwayConfig env, Condition c) {
  if (c == Condition::sunny) env.fog_probability = 0.0;
  if (c == Condition::foggy) env.fog_probability = 1.0;
  return env;
}

inline EvalMetrics summarize(const std::vector<EpisodeResult>& episodes, Condition c) {
  EvalMetrics m;
  m.condition = c;
  m.n_episodes = static_cast<int>(episodes.size());
  double len_ok = 0.0, len_fail = 0.0, ret = 0.0;
  for (const EpisodeResult& e : episodes) {
    bool all_ok = true;
    for (const VehicleEpisode& v : e.vehicles) {
      const auto T = static_cast<double>(v.length());
      ret += v.total_return();
      if (v.terminal == CarStatus::exited) {
        ++m.n_success;
        len_ok += T;
      } else {
        ++m.n_fail;
        len_fail += T;
        all_ok = false;
      }
    }
    m.n_episode_success += all_ok;
    m.n_foggy += e.fog;
  }
  const int cars = m.n_success + m.n_fail;
  if (cars > 0) {
    m.flat_success = static_cast<double>(m.n_success) / cars;
    m.mean_return = ret / cars;
  }
  if (m.n_episodes > 0) m.episode_success = static_cast<double>(m.n_episode_success) / m.n_episodes;
  if (m.n_success > 0) m.mean_len_success = len_ok / m.n_success;
  if (m.n_fail > 0) m.mean_len_fail = len_fail / m.n_fail;
  return m;
}

inline EvalMetrics average(const std::vector<EvalMetrics>& runs) {
  EvalMetrics m;
  if (runs.empty()) return m;
  m.condition = runs.front().condition;
  int with_ok = 0, with_fail = 0;
  double ok = 0.0, fail = 0.0;
  for (const EvalMetrics& r : runs) {
    m.n_episodes += r.n_episodes;
    m.n_success += r.n_success;
    m.n_fail += r.n_fail;
    m.n_episode_success += r.n_episode_success;
    m.n_foggy += r.n_foggy;
    m.flat_success += r.flat_success / static_cast<double>(runs.size());
    m.episode_success += r.episode_success / static_cast<double>(runs.size());
    m.mean_return += r.mean_return / static_cast<double>(runs.size());
    if (r.mean_len_success) ok += *r.mean_len_success, ++with_ok;
    if (r.mean_len_fail) fail += *r.mean_len_fail, ++with_fail;
  }
  if (with_ok) m.mean_len_success = ok / with_ok;
  if (with_fail) m.mean_len_fail = fail / with_fail;
  return m;
}

// Greedy evaluation (Gaussian means, no message dropout) for each seed.
// Episode i of seed s uses derive_seed(s, i).
inline EvalReport evaluate(const Controller& ctl, const HighwayConfig& env, Condition condition, int n_episodes,
                           std::span<const std::uint64_t> seeds, int num_threads = 0) {
  if (ctl.agent) {
    const Architecture& a = ctl.agent->params.arch;
    if (a.uses_messages() && a.max_senders != env.num_cars - 1)
      throw LoadError("checkpoint expects " + std::to_string(a.max_senders + 1) + " cars, environment has " +
                      std::to_string(env.num_cars));
  }
  const HighwayConfig cfg = apply_condition(env, condition);
  validate(cfg);
  EpisodeOptions opt;
  opt.selection = ActionSelection::greedy;
  EvalReport rep;
  rep.seeds.assign(seeds.begin(), seeds.end());
  for (std::uint64_t s : seeds) {
    std::vector<EpisodeResult> results(static_cast<std::size_t>(n_episodes));
    parallel_for(results.size(), resolve_threads(num_threads), [&](std::size_t i) {
      results[i] = run_episode(ctl, cfg, derive_seed(s, i), opt);
    });
    rep.per_seed.push_back(summarize(results, condition));
  }
  rep.mean = average(rep.per_seed);
  return rep;
}

struct ReportRow {
  std::string model;
  std::string condition;
  EvalMetrics metrics;
};

inline const std::array<std::string, 6>& table_columns() {
  static const std::array<std::string, 6> cols = {"Model", "Eval Conditions", "Flat Success", "Episode Success",
                                                  "Mean Length Success", "Mean Length Fail"};
  return cols;
}

inline std::string display_condition(Condition c) {
  std::string s(to_string(c));
  s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s;
}

inline std::string format_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

inline std::string report_table(const std::vector<ReportRow>& rows) {
  std::string out = "|";
  for (const auto& c : table_columns()) out += " " + c + " |";
  out += "\n|";
  for (std::size_t i = 0; i < table_columns().size(); ++i) out += "---|";
  out += "\n";
  const auto opt = [](const std::optional<double>& v) { return v ? format_fixed(*v, 1) : std::string("-"); };
  for (const ReportRow& r : rows) {
    out += "| " + r.model + " | " + r.condition + " | " + format_fixed(r.metrics.flat_success, 4) + " | " +
           format_fixed(r.metrics.episode_success, 4) + " | " + opt(r.metrics.mean_len_success) + " | " +
           opt(r.metrics.mean_len_fail) + " |\n";
  }
  return out;
}

inline nlohmann::json to_json(const EvalMetrics& m) {
  const auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"condition", std::string(to_string(m.condition))},
          {"n_episodes", m.n_episodes},
          {"n_success", m.n_success},
          {"n_fail", m.n_fail},
          {"n_episode_success", m.n_episode_success},
          {"n_foggy", m.n_foggy},
          {"flat_success", m.flat_success},
          {"episode_success", m.episode_success},
          {"mean_len_success", opt(m.mean_len_success)},
          {"mean_len_fail", opt(m.mean_len_fail)},
          {"mean_return", m.mean_return}};
}

inline nlohmann::json report_json(const std::vector<ReportRow>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const ReportRow& r : rows) {
    nlohmann::json j = to_json(r.metrics);
    j["model"] = r.model;
    j["eval_conditions"] = r.condition;
    arr.push_back(std::move(j));
  }
  return {{"columns", table_columns()}, {"rows", std::move(arr)}};
}

// Rows for one evaluation: one per seed, then the mean.
inline std::vector<ReportRow> report_rows(const std::string& model, const EvalReport& rep) {
  std::vector<ReportRow> rows;
  const std::string cond = display_condition(rep.mean.condition);
  for (std::size_t i = 0; i < rep.per_seed.size(); ++i)
    rows.push_back({model + " (seed " + std::to_string(rep.seeds[i]) + ")", cond, rep.per_seed[i]});
  rows.push_back({model + " (mean of " + std::to_string(rep.per_seed.size()) + ")", cond, rep.mean});
  return rows;
}

}  // namespace v2v
