#include <gtest/gtest.h>

#include "v2vsim/v2vsim.hpp"

using namespace v2v;

namespace {

ScriptedPolicy brake_policy() {
  return [](const CarState&, const WorldState&, CounterRng&) { return Action{0.0, 0.0, 1.0}; };
}

VehicleEpisode vehicle(std::size_t len, CarStatus end) {
  VehicleEpisode v;
  v.rewards.assign(len, -0.5);
  v.terminal = end;
  return v;
}

}  // namespace

TEST(Eval, BrakingCarsNeverSucceed) {
  HighwayConfig env;
  env.num_cars = 3;  // stopping distance is under the row spacing
  env.max_steps = 20;
  const std::vector<std::uint64_t> seeds{1, 2};
  const EvalReport rep = evaluate(Controller{nullptr, brake_policy()}, env, Condition::mixed, 5, seeds, 1);
  ASSERT_EQ(rep.per_seed.size(), 2u);
  for (const auto& m : rep.per_seed) {
    EXPECT_EQ(m.n_success, 0);
    EXPECT_EQ(m.n_fail, 15);
    EXPECT_EQ(m.flat_success, 0.0);
    EXPECT_EQ(m.episode_success, 0.0);
    EXPECT_FALSE(m.mean_len_success.has_value());
    EXPECT_EQ(m.mean_len_fail, 20.0);
  }
  EXPECT_EQ(rep.mean.flat_success, 0.0);
  EXPECT_EQ(rep.mean.n_episodes, 10);
}

TEST(Eval, SummarizeHandExample) {
  EpisodeResult a, b;
  a.vehicles = {vehicle(10, CarStatus::exited), vehicle(20, CarStatus::exited)};
  b.vehicles = {vehicle(30, CarStatus::exited), vehicle(5, CarStatus::crashed)};
  b.fog = true;
  const EvalMetrics m = summarize({a, b}, Condition::foggy);
  EXPECT_EQ(m.n_success, 3);
  EXPECT_EQ(m.n_fail, 1);
  EXPECT_EQ(m.flat_success, 0.75);
  EXPECT_EQ(m.episode_success, 0.5);
  EXPECT_EQ(m.n_foggy, 1);
  EXPECT_EQ(m.mean_len_success, 20.0);
  EXPECT_EQ(m.mean_len_fail, 5.0);
  EXPECT_EQ(m.mean_return, -0.5 * 65 / 4);
}

TEST(Eval, AverageSkipsAbsentLengths) {
  EvalMetrics x, y;
  x.flat_success = 1.0;
  x.mean_len_success = 40.0;
  y.flat_success = 0.5;
  y.mean_len_success = 60.0;
  y.mean_len_fail = 7.0;
  const EvalMetrics m = average({x, y});
  EXPECT_EQ(m.flat_success, 0.75);
  EXPECT_EQ(m.mean_len_success, 50.0);
  EXPECT_EQ(m.mean_len_fail, 7.0);
}

TEST(Eval, ConditionControlsFog) {
  HighwayConfig env;
  env.num_cars = 1;
  env.max_steps = 1;
  const std::vector<std::uint64_t> seed{7};
  const Controller ctl{nullptr, brake_policy()};
  EXPECT_EQ(evaluate(ctl, env, Condition::sunny, 200, seed, 1).mean.n_foggy, 0);
  EXPECT_EQ(evaluate(ctl, env, Condition::foggy, 200, seed, 1).mean.n_foggy, 200);
  const EvalMetrics mixed = evaluate(ctl, env, Condition::mixed, 10000, seed, 1).mean;
  EXPECT_NEAR(mixed.n_foggy / 10000.0, env.fog_probability, 0.02);
}

TEST(Eval, DeterministicAndThreadIndependent) {
  HighwayConfig env;
  env.num_cars = 4;
  env.max_steps = 40;
  const Agent agent = Agent::create(CounterRng(3), Architecture::for_mode(ModelMode::v2v, 4));
  const std::vector<std::uint64_t> seeds{11};
  const EvalReport a = evaluate(Controller{&agent, {}}, env, Condition::mixed, 6, seeds, 1);
  const EvalReport b = evaluate(Controller{&agent, {}}, env, Condition::mixed, 6, seeds, 3);
  EXPECT_EQ(to_json(a.mean), to_json(b.mean));
}

TEST(Eval, MismatchedCarCountIsLoadError) {
  HighwayConfig env;
  env.num_cars = 3;
  const Agent agent = Agent::create(CounterRng(3), Architecture::for_mode(ModelMode::v2v, 4));
  const std::vector<std::uint64_t> seeds{1};
  EXPECT_THROW(evaluate(Controller{&agent, {}}, env, Condition::sunny, 1, seeds, 1), LoadError);
}

TEST(Table, HeaderAndFormatting) {
  EvalMetrics m;
  m.flat_success = 0.93017;
  m.episode_success = 0.5;
  m.mean_len_success = 123.456;
  const std::string t = report_table({{"V2V", "Mixed", m}});
  const std::string header =
      "| Model | Eval Conditions | Flat Success | Episode Success | Mean Length Success | Mean Length Fail |\n";
  ASSERT_EQ(t.substr(0, header.size()), header);
  EXPECT_NE(t.find("| V2V | Mixed | 0.9302 | 0.5000 | 123.5 | - |\n"), std::string::npos) << t;
}

TEST(Table, EmptyHasHeaderOnly) {
  const std::string t = report_table({});
  EXPECT_EQ(std::count(t.begin(), t.end(), '\n'), 2);
}

TEST(Table, ReportRowsPerSeedPlusMean) {
  EvalReport rep;
  rep.seeds = {1001, 2002, 3003};
  rep.per_seed.resize(3);
  rep.mean.condition = Condition::foggy;
  const auto rows = report_rows("Baseline", rep);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].model, "Baseline (seed 1001)");
  EXPECT_EQ(rows[3].model, "Baseline (mean of 3)");
  EXPECT_EQ(rows[3].condition, "Foggy");
  const auto j = report_json(rows);
  EXPECT_EQ(j["rows"].size(), 4u);
  EXPECT_TRUE(j["rows"][0]["mean_len_success"].is_null());
}

TEST(Table, ConditionParsing) {
  EXPECT_EQ(parse_condition("sunny"), Condition::sunny);
  EXPECT_EQ(parse_condition("mixed"), Condition::mixed);
  EXPECT_THROW(parse_condition("rainy"), ConfigError);
}
