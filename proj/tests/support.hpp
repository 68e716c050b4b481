#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. None of these call into the code they check.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "v2vsim/v2vsim.hpp"

namespace v2v::oracle {

// Corner list of a rectangle built from scratch (rotation matrix applied to
// the four local corners), front-right first and counter-clockwise.
inline std::array<Vec2, 4> corners(const OrientedRect& r) {
  const double c = std::cos(r.heading), s = std::sin(r.heading);
  std::array<Vec2, 4> out;
  const double lx[4] = {r.half_length, r.half_length, -r.half_length, -r.half_length};
  const double ly[4] = {-r.half_width, r.half_width, r.half_width, -r.half_width};
  for (int i = 0; i < 4; ++i) out[i] = {r.center.x + c * lx[i] - s * ly[i], r.center.y + s * lx[i] + c * ly[i]};
  return out;
}

// Separating-axis test over all eight edge normals, projecting every corner.
// Touching intervals count as separated.
inline bool sat_overlap(const OrientedRect& a, const OrientedRect& b) {
  const auto ca = corners(a), cb = corners(b);
  std::vector<Vec2> axes;
  for (const auto* poly : {&ca, &cb})
    for (int i = 0; i < 4; ++i) {
      const Vec2 e = (*poly)[(i + 1) % 4] - (*poly)[i];
      axes.push_back({-e.y, e.x});
    }
  for (const Vec2& ax : axes) {
    double amin = std::numeric_limits<double>::infinity(), amax = -amin, bmin = amin, bmax = -amin;
    for (const Vec2& p : ca) {
      const double d = p.x * ax.x + p.y * ax.y;
      amin = std::min(amin, d), amax = std::max(amax, d);
    }
    for (const Vec2& p : cb) {
      const double d = p.x * ax.x + p.y * ax.y;
      bmin = std::min(bmin, d), bmax = std::max(bmax, d);
    }
    if (amax <= bmin || bmax <= amin) return false;
  }
  return true;
}

// Distance along a ray to a segment, computed in the ray's own frame: rotate
// so the ray points along +x, then intersect with the x axis.
inline double ray_segment(Vec2 origin, double bearing, Vec2 p, Vec2 q) {
  const double c = std::cos(bearing), s = std::sin(bearing);
  const auto local = [&](Vec2 v) {
    const double dx = v.x - origin.x, dy = v.y - origin.y;
    return Vec2{c * dx + s * dy, -s * dx + c * dy};
  };
  const Vec2 a = local(p), b = local(q);
  if ((a.y > 0 && b.y > 0) || (a.y < 0 && b.y < 0) || a.y == b.y) return std::numeric_limits<double>::infinity();
  const double x = a.x + (b.x - a.x) * (-a.y) / (b.y - a.y);
  return x >= 0 ? x : std::numeric_limits<double>::infinity();
}

// Lidar by brute force: every wall and every edge of every other active car.
inline std::array<double, kLidarRays> lidar(const CarState& car, const WorldState& w, double max_range) {
  std::array<double, kLidarRays> out{};
  for (std::size_t k = 0; k < kLidarRays; ++k) {
    const double bearing = car.heading + k * (2.0 * M_PI / 18.0);
    double best = max_range;
    for (const Segment& s : w.geometry.walls) best = std::min(best, ray_segment(car.position, bearing, s.a, s.b));
    for (const CarState& o : w.cars) {
      if (o.car_id == car.car_id || o.status != CarStatus::active) continue;
      const auto cs = corners(o.body());
      for (int i = 0; i < 4; ++i) best = std::min(best, ray_segment(car.position, bearing, cs[i], cs[(i + 1) % 4]));
    }
    out[k] = best;
  }
  return out;
}

// GAE straight from the definition: A_t = sum_l (gamma*lambda)^l delta_{t+l}.
inline std::vector<double> gae(const std::vector<double>& r, const std::vector<double>& v, double bootstrap, double gamma,
                               double lambda) {
  const std::size_t T = r.size();
  std::vector<double> delta(T), adv(T, 0.0);
  for (std::size_t t = 0; t < T; ++t) delta[t] = r[t] + gamma * (t + 1 < T ? v[t + 1] : bootstrap) - v[t];
  for (std::size_t t = 0; t < T; ++t) {
    double w = 1.0;
    for (std::size_t l = t; l < T; ++l) {
      adv[t] += w * delta[l];
      w *= gamma * lambda;
    }
  }
  return adv;
}

// Loss evaluated from scratch for a minibatch: own Gaussian/Bernoulli
// densities, own clipping.
inline double ppo_loss(const PolicyParams& p, const Minibatch& mb, const LossWeights& w) {
  const int G = p.arch.gaussian_dims(), S = p.arch.select_dims();
  double sur = 0, vl = 0, ent = 0;
  const auto n = static_cast<double>(mb.size());
  for (Eigen::Index i = 0; i < mb.size(); ++i) {
    std::vector<double> obs(40);
    for (int k = 0; k < 40; ++k) obs[k] = mb.obs(i, k);
    std::vector<double> code;
    if (p.arch.uses_messages()) {
      const Eigen::VectorXd c = encode_slots(p, mb.slots.row(i).transpose());
      code.assign(c.data(), c.data() + c.size());
    }
    const PolicyOutput out = p.arch.uses_messages() ? forward(p, obs, std::span<const double>(code)) : forward(p, obs);
    double lp = 0, h = 0;
    for (int k = 0; k < G; ++k) {
      const double ls = std::clamp(p[kLogStd](0, k), -5.0, 2.0);
      const double sd = std::exp(ls);
      const double z = (mb.actions(i, k) - out.mean[k]) / sd;
      lp += -0.5 * z * z - std::log(sd) - 0.5 * std::log(2 * M_PI);
      h += 0.5 + 0.5 * std::log(2 * M_PI) + ls;
    }
    for (int k = 0; k < S; ++k) {
      const double q = 1.0 / (1.0 + std::exp(-out.logits[k]));
      lp += mb.bits(i, k) > 0.5 ? std::log(q) : std::log(1 - q);
      h += -q * std::log(q) - (1 - q) * std::log(1 - q);
    }
    const double ratio = std::exp(lp - mb.old_log_probs[i]);
    const double A = mb.advantages[i];
    const double clipped = std::min(std::max(ratio, 1 - w.clip_eps), 1 + w.clip_eps);
    sur += -std::min(ratio * A, clipped * A) / n;
    vl += (out.value - mb.returns[i]) * (out.value - mb.returns[i]) / n;
    ent += h / n;
  }
  return sur + w.value_coef * vl - w.entropy_coef * ent;
}

}  // namespace v2v::oracle

namespace v2v::testing {

// Minibatch of random inputs with consistent shapes for an architecture.
inline Minibatch random_minibatch(const Architecture& arch, int n, CounterRng r) {
  Minibatch mb;
  mb.obs = Eigen::MatrixXd::NullaryExpr(n, 40, [&] { return r.normal(); });
  mb.slots = Eigen::MatrixXd::NullaryExpr(n, arch.slot_width(), [&] { return r.normal(); });
  mb.actions = Eigen::MatrixXd::NullaryExpr(n, arch.gaussian_dims(), [&] { return r.normal(); });
  mb.bits = Eigen::MatrixXd::NullaryExpr(n, arch.select_dims(), [&] { return r.bernoulli(0.5) ? 1.0 : 0.0; });
  mb.old_log_probs = Eigen::VectorXd::NullaryExpr(n, [&] { return -4.0 + 0.3 * r.normal(); });
  mb.advantages = Eigen::VectorXd::NullaryExpr(n, [&] { return r.normal(); });
  mb.returns = Eigen::VectorXd::NullaryExpr(n, [&] { return r.normal(); });
  return mb;
}

// Parameters moved off the initial point so every tensor has a nonzero gradient.
inline PolicyParams perturbed_params(const Architecture& arch, std::uint64_t seed, double scale = 0.1) {
  PolicyParams p = init_params(CounterRng(seed), arch);
  CounterRng r(seed + 1);
  for (auto& t : p.t)
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] += scale * r.normal();
  return p;
}

struct GradCheck {
  double max_rel = 0.0;
  int coords = 0;
};

// Central differences of `loss` against the analytic gradient `g` on
// `per_tensor` sampled coordinates of each tensor.
template <typename Loss>
GradCheck check_gradient(const PolicyParams& p, const PolicyParams& g, Loss&& loss, int per_tensor, CounterRng pick,
                         double h = 1e-5) {
  GradCheck out;
  for (std::size_t k = 0; k < kNumTensors; ++k) {
    const Eigen::Index size = p.t[k].size();
    if (size == 0) continue;
    for (int j = 0; j < per_tensor; ++j) {
      const auto i = static_cast<Eigen::Index>(pick.below(static_cast<std::uint64_t>(size)));
      PolicyParams a = p, b = p;
      a.t[k].data()[i] += h;
      b.t[k].data()[i] -= h;
      const double fd = (loss(a) - loss(b)) / (2 * h);
      const double an = g.t[k].data()[i];
      const double rel = std::abs(fd - an) / std::max(1e-6, std::abs(fd) + std::abs(an));
      out.max_rel = std::max(out.max_rel, rel);
      ++out.coords;
    }
  }
  return out;
}

// Gradient of sum_i (cp*logp_i + cv*V_i + ce*H_i) by the analytic backward.
inline PolicyParams component_grad(const PolicyParams& p, const Minibatch& mb, double cp, double cv, double ce) {
  const ForwardPass f = forward_batch(p, mb.obs, mb.slots);
  LossGrad up;
  up.d_log_prob = Eigen::VectorXd::Constant(mb.size(), cp);
  up.d_value = Eigen::VectorXd::Constant(mb.size(), cv);
  up.d_entropy = Eigen::VectorXd::Constant(mb.size(), ce);
  return backward(p, mb.slots, f, mb.actions, mb.bits, up);
}

inline double component_value(const PolicyParams& p, const Minibatch& mb, double cp, double cv, double ce) {
  const ForwardPass f = forward_batch(p, mb.obs, mb.slots);
  const auto [lp, ent] = batch_log_prob_entropy(p, f, mb.actions, mb.bits);
  return cp * lp.sum() + cv * f.value.sum() + ce * ent.sum();
}

}  // namespace v2v::testing
