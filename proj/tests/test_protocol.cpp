#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "support.hpp"

using namespace v2v;

namespace {

// Random world: reset, then a few ticks of random driving.
WorldState random_world(CounterRng& r, int cars = 12) {
  HighwayConfig cfg;
  cfg.num_cars = cars;
  WorldState w = reset_world(cfg, r());
  const int steps = static_cast<int>(r.below(40));
  for (int t = 0; t < steps && !w.done(); ++t) {
    std::vector<Action> a;
    for (std::size_t i = 0; i < w.active_ids().size(); ++i) a.push_back({r.uniform(-1, 1), r.uniform(-1, 1), 0.0});
    v2v::advance(w, a);
  }
  return w;
}

}  // namespace

TEST(Observation, WidthIsForty) {
  EXPECT_EQ(PersonalObservation{}.to_array().size(), 40u);
  std::vector<double> short_vec(39);
  EXPECT_THROW(PersonalObservation::from_span(short_vec), ContractError);
  std::vector<double> ok(40);
  EXPECT_NO_THROW(PersonalObservation::from_span(ok));
}

TEST(Observation, RoundTripsThroughArray) {
  CounterRng r(3);
  WorldState w = random_world(r);
  for (const auto& c : w.cars) {
    if (!c.active()) continue;
    const PersonalObservation o = build_personal_observation(c, w);
    const auto arr = o.to_array();
    EXPECT_EQ(PersonalObservation::from_span(arr), o);
  }
}

TEST(Observation, FieldsAtReset) {
  HighwayConfig cfg;
  const WorldState w = reset_world(cfg, 17);
  const CarState& c = w.cars[3];
  const auto v = build_personal_observation(c, w).to_array();
  EXPECT_EQ(v[0], w.geometry.exits[c.assigned_exit].target.x);
  EXPECT_EQ(v[1], w.geometry.exits[c.assigned_exit].target.y);
  EXPECT_EQ(v[2], c.max_speed);
  EXPECT_EQ(v[5], c.position.x);
  EXPECT_EQ(v[8], c.length);
  EXPECT_EQ(v[11], 0.0);
  for (int k = 12; k < 22; ++k) EXPECT_EQ(v[k], 0.0);
}

TEST(Observation, StationaryCarSeesWallsFromOracle) {
  HighwayConfig cfg;
  cfg.num_cars = 1;
  WorldState w = reset_world(cfg, 2);
  CarState& c = w.cars[0];
  c.position = w.geometry.to_world(100, 2);
  c.heading = w.geometry.angle;
  c.speed = 0;
  const auto v = build_personal_observation(c, w).to_array();
  EXPECT_EQ(v[3], 0.0);
  EXPECT_EQ(v[4], 0.0);
  const auto want = oracle::lidar(c, w, w.effective_lidar_range());
  for (std::size_t k = 0; k < kLidarRays; ++k) EXPECT_NEAR(v[22 + k], want[k], 1e-9);
  // Ray 0 runs down the corridor; rays 4 and 14 (80 and 280 degrees) reach
  // the left wall 6 m away and the right wall 10 m away.
  EXPECT_NEAR(v[22], 40.0, 1e-9);
  EXPECT_NEAR(v[22 + 4] * std::sin(80 * M_PI / 180), 6.0, 1e-9);
  EXPECT_NEAR(v[22 + 14] * std::sin(80 * M_PI / 180), 10.0, 1e-9);
}

TEST(Message, WidthIsTwentyOne) {
  EXPECT_EQ(V2VMessage{}.to_array().size(), 21u);
  EXPECT_EQ(message_labels().size(), 21u);
  std::vector<double> long_vec(22);
  EXPECT_THROW(V2VMessage::from_span(long_vec), ContractError);
}

TEST(Message, HardBrakeThreshold) {
  CarState c;
  MessageCounter counter;
  c.brake = 0.0;
  EXPECT_EQ(build_v2v_message(c, 0, counter).hard_brake_indicator, 0.0);
  c.brake = 0.5;
  EXPECT_EQ(build_v2v_message(c, 0, counter).hard_brake_indicator, 0.0);
  c.brake = 0.51;
  EXPECT_EQ(build_v2v_message(c, 0, counter).hard_brake_indicator, 1.0);
}

TEST(Message, IdsIncrease) {
  CarState a, b;
  b.car_id = 4;
  MessageCounter counter;
  const auto m1 = build_v2v_message(a, 0, counter);
  const auto m2 = build_v2v_message(b, 0, counter);
  EXPECT_GT(m2.global_message_id, m1.global_message_id);
}

TEST(Gather, UnlimitedGivesElevenOthers) {
  const WorldState w = reset_world(HighwayConfig{}, 1);
  WorldState stepped = w;
  v2v::advance(stepped, std::vector<Action>(12));
  const auto got = gather_messages(stepped.cars[0], stepped.inbox, std::nullopt);
  EXPECT_EQ(got.size(), 11u);
  for (const auto& m : got) EXPECT_NE(m.car_id, 0.0);
}

TEST(Gather, ZeroRangeIsEmpty) {
  const WorldState w = reset_world(HighwayConfig{}, 1);
  EXPECT_TRUE(gather_messages(w.cars[0], w.inbox, 0.0).empty());
}

TEST(Gather, MatchesBruteForceFilter) {
  CounterRng r(5);
  for (int trial = 0; trial < 200; ++trial) {
    WorldState w = random_world(r);
    const double range = r.uniform(0.5, 40.0);
    for (const auto& recv : w.cars) {
      const auto got = gather_messages(recv, w.inbox, range);
      std::vector<std::pair<double, int>> want;
      for (const auto& m : w.inbox) {
        const double dx = m.pos_x - recv.position.x, dy = m.pos_y - recv.position.y;
        const double d = std::sqrt(dx * dx + dy * dy);
        if (static_cast<int>(m.car_id) != recv.car_id && d <= range) want.push_back({d, static_cast<int>(m.car_id)});
      }
      std::sort(want.begin(), want.end());
      ASSERT_EQ(got.size(), want.size());
      for (std::size_t i = 0; i < got.size(); ++i) ASSERT_EQ(static_cast<int>(got[i].car_id), want[i].second);
    }
  }
}

TEST(Gather, ExcludesInactiveSenders) {
  HighwayConfig cfg;
  cfg.num_cars = 3;
  WorldState w = reset_world(cfg, 8);
  w.cars[1].position = w.geometry.to_world(20, 0.5 * w.geometry.width - 0.2);
  v2v::advance(w, std::vector<Action>(3));
  v2v::advance(w, std::vector<Action>(2));
  const auto got = gather_messages(w.cars[0], w);
  ASSERT_EQ(got.size(), 1u);
  EXPECT_EQ(got[0].car_id, 2.0);
}

TEST(Gather, PermutationInvariant) {
  CounterRng r(6);
  WorldState w = random_world(r);
  std::vector<V2VMessage> shuffled = w.inbox;
  for (std::size_t i = shuffled.size(); i > 1; --i) std::swap(shuffled[i - 1], shuffled[r.below(i)]);
  for (const auto& c : w.cars) EXPECT_EQ(gather_messages(c, w.inbox, 25.0), gather_messages(c, shuffled, 25.0));
}

TEST(Dropout, ExtremesAndRate) {
  CounterRng r(7);
  std::vector<int> msgs(100000);
  std::iota(msgs.begin(), msgs.end(), 0);
  EXPECT_EQ(drop_messages(msgs, 0.0, DropoutVariant::per_message, r), msgs);
  EXPECT_TRUE(drop_messages(msgs, 1.0, DropoutVariant::per_message, r).empty());
  const auto kept = drop_messages(msgs, 0.1, DropoutVariant::per_message, r);
  const double dropped = 1.0 - static_cast<double>(kept.size()) / msgs.size();
  EXPECT_NEAR(dropped, 0.1, 0.005);
  EXPECT_THROW(drop_messages(msgs, 1.2, DropoutVariant::per_message, r), ContractError);
}

TEST(Dropout, GlobalStepIsAllOrNothing) {
  CounterRng r(8);
  const std::vector<int> msgs{1, 2, 3, 4, 5};
  int cleared = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto out = drop_messages(msgs, 0.1, DropoutVariant::global_step, r);
    ASSERT_TRUE(out.empty() || out == msgs);
    cleared += out.empty();
  }
  EXPECT_NEAR(cleared / 10000.0, 0.1, 0.015);
}

TEST(FieldMask, Examples) {
  V2VMessage m;
  auto arr = m.to_array();
  for (std::size_t i = 0; i < arr.size(); ++i) arr[i] = static_cast<double>(i + 1);
  m = V2VMessage::from_span(arr);

  EXPECT_EQ(apply_field_mask(m, kAllFields), m);

  FieldMask none{};
  for (double v : apply_field_mask(m, none).to_array()) EXPECT_EQ(v, 0.0);

  FieldMask path_only{};
  path_only[8] = true;
  const auto out = apply_field_mask(m, path_only).to_array();
  ASSERT_EQ(out.size(), 21u);
  for (std::size_t i = 0; i < 21; ++i) EXPECT_EQ(out[i], (i >= 8 && i < 18) ? arr[i] : 0.0) << i;
}

TEST(FieldMask, SpansTileTheMessage) {
  std::vector<int> cover(21, 0);
  for (std::size_t f = 0; f < kMessageFields; ++f) {
    const auto [lo, hi] = field_span(f);
    for (std::size_t i = lo; i < hi; ++i) ++cover[i];
  }
  for (int c : cover) EXPECT_EQ(c, 1);
}
