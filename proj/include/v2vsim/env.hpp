#pragma once

// Gym-style facade over the world: reset/step return observations for the
// cars that are still driving, in ascending car_id order.

#include <span>
#include <utility>
#include <vector>

#include "protocol.hpp"
#include "sim.hpp"

namespace v2v {

struct Transition {
  std::vector<PersonalObservation> observations;  // active cars after the step
  std::vector<double> rewards;                    // indexed by car_id
  std::vector<StepEvent> events;
  bool done = false;
};

inline std::vector<PersonalObservation> observe(const WorldState& w) {
  std::vector<PersonalObservation> obs;
  for (const CarState& c : w.cars)
    if (c.active()) obs.push_back(build_personal_observation(c, w));
  return obs;
}

inline std::pair<WorldState, std::vector<PersonalObservation>> reset(const HighwayConfig& cfg,
                                                                     std::uint64_t episode_seed) {
  WorldState w = reset_world(cfg, episode_seed);
  auto obs = observe(w);
  return {std::move(w), std::move(obs)};
}

inline Transition step(WorldState& w, std::span<const Action> actions) {
  StepOutcome o = advance(w, actions);
  return {observe(w), std::move(o.rewards), std::move(o.events), o.done};
}

}  // namespace v2v
