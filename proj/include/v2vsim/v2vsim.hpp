#pragma once

#include "checkpoint.hpp"
#include "config.hpp"
#include "env.hpp"
#include "errors.hpp"
#include "eval.hpp"
#include "geometry.hpp"
#include "message.hpp"
#include "normalizer.hpp"
#include "policy.hpp"
#include "ppo.hpp"
#include "protocol.hpp"
#include "render.hpp"
#include "rng.hpp"
#include "rollout.hpp"
#include "sim.hpp"
#include "snapshot.hpp"
#include "vehicle.hpp"
#include "wire.hpp"
