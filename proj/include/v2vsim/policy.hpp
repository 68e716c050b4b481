#pragma once

// Shared policy/value networks with a hand-derived backward pass.
//
//   slots (max_senders*21) --tanh--> code (32)
//   input = [obs (40), code]            (obs only in the baseline)
//   policy: input -> 200 tanh -> 100 tanh -> head (Gaussian means [, select logits])
//   value:  input -> 200 tanh -> 100 tanh -> scalar
//
// Weight matrices are stored (in x out) so a column holds the incoming
// weights of one unit; batches are row-major (one sample per row).

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"
#include "message.hpp"
#include "protocol.hpp"
#include "rng.hpp"

namespace v2v {

inline constexpr int kCodeWidth = 32;
inline constexpr int kHidden1 = 200;
inline constexpr int kHidden2 = 100;
inline constexpr int kControlDims = 3;
inline constexpr int kEmergentMessageDims = 8;
inline constexpr int kSelectLogits = static_cast<int>(kMessageFields);
inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;
inline constexpr double kHiddenInitScale = 1.0;
inline constexpr double kHeadInitScale = 0.01;
// Brake-mean prior: a zero-mean brake is engaged half the time and cars never leave the start.
inline constexpr double kBrakeBiasInit = -1.0;

enum class ModelMode { baseline, v2v, emergent_continuous, emergent_select };

constexpr std::string_view to_string(ModelMode m) {
  switch (m) {
    case ModelMode::baseline: return "baseline";
    case ModelMode::v2v: return "v2v";
    case ModelMode::emergent_continuous: return "emergent_continuous";
    case ModelMode::emergent_select: return "emergent_select";
  }
  return "?";
}

inline ModelMode parse_mode(std::string_view s) {
  for (ModelMode m : {ModelMode::baseline, ModelMode::v2v, ModelMode::emergent_continuous, ModelMode::emergent_select})
    if (to_string(m) == s) return m;
  throw ConfigError("unknown model mode '" + std::string(s) +
                    "' (expected baseline, v2v, emergent_continuous or emergent_select)");
}

struct Architecture {
  ModelMode mode = ModelMode::baseline;
  int max_senders = 11;

  static Architecture for_mode(ModelMode mode, int num_cars) { return {mode, std::max(0, num_cars - 1)}; }

  [[nodiscard]] bool uses_messages() const { return mode != ModelMode::baseline; }
  [[nodiscard]] int slot_width() const { return uses_messages() ? max_senders * static_cast<int>(kMessageWidth) : 0; }
  [[nodiscard]] int input_width() const {
    return static_cast<int>(kObservationWidth) + (uses_messages() ? kCodeWidth : 0);
  }
  [[nodiscard]] int gaussian_dims() const {
    return kControlDims + (mode == ModelMode::emergent_continuous ? kEmergentMessageDims : 0);
  }
  [[nodiscard]] int select_dims() const { return mode == ModelMode::emergent_select ? kSelectLogits : 0; }
  [[nodiscard]] int head_width() const { return gaussian_dims() + select_dims(); }

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

enum TensorId : std::size_t {
  kEncW, kEncB,
  kPi1W, kPi1B, kPi2W, kPi2B, kPiOutW, kPiOutB,
  kLogStd,
  kV1W, kV1B, kV2W, kV2B, kVOutW, kVOutB,
  kNumTensors
};

inline constexpr std::array<std::string_view, kNumTensors> kTensorNames = {
    "enc_w", "enc_b", "pi1_w", "pi1_b", "pi2_w", "pi2_b", "pi_out_w", "pi_out_b",
    "log_std", "v1_w", "v1_b", "v2_w", "v2_b", "v_out_w", "v_out_b"};

struct PolicyParams {
  Architecture arch;
  std::array<Eigen::MatrixXd, kNumTensors> t;

  Eigen::MatrixXd& operator[](TensorId id) { return t[id]; }
  const Eigen::MatrixXd& operator[](TensorId id) const { return t[id]; }

  [[nodiscard]] PolicyParams zeros_like() const {
    PolicyParams z{arch, {}};
    for (std::size_t i = 0; i < kNumTensors; ++i) z.t[i] = Eigen::MatrixXd::Zero(t[i].rows(), t[i].cols());
    return z;
  }

  [[nodiscard]] Eigen::Index size() const {
    Eigen::Index n = 0;
    for (const auto& m : t) n += m.size();
    return n;
  }

  [[nodiscard]] bool all_finite() const {
    for (const auto& m : t)
      if (!m.allFinite()) return false;
    return true;
  }

  friend bool operator==(const PolicyParams& a, const PolicyParams& b) {
    if (!(a.arch == b.arch)) return false;
    for (std::size_t i = 0; i < kNumTensors; ++i)
      if (a.t[i].rows() != b.t[i].rows() || a.t[i].cols() != b.t[i].cols() || a.t[i] != b.t[i]) return false;
    return true;
  }
};

// Tensor shapes (rows, cols) for an architecture.
inline std::array<std::pair<Eigen::Index, Eigen::Index>, kNumTensors> tensor_shapes(const Architecture& a) {
  const Eigen::Index code = a.uses_messages() ? kCodeWidth : 0;
  const Eigen::Index in = a.input_width();
  return {{{a.slot_width(), code}, {1, code},
           {in, kHidden1}, {1, kHidden1}, {kHidden1, kHidden2}, {1, kHidden2},
           {kHidden2, a.head_width()}, {1, a.head_width()},
           {1, a.gaussian_dims()},
           {in, kHidden1}, {1, kHidden1}, {kHidden1, kHidden2}, {1, kHidden2},
           {kHidden2, 1}, {1, 1}}};
}

// Column-norm init: each column ~ N(0, I), rescaled to norm `scale`.
inline Eigen::MatrixXd column_norm_init(Eigen::Index rows, Eigen::Index cols, double scale, CounterRng rng) {
  Eigen::MatrixXd w(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) w(r, c) = rng.normal();
    const double n = w.col(c).norm();
    if (n > 0.0) w.col(c) *= scale / n;
  }
  return w;
}

inline PolicyParams init_params(const CounterRng& rng, const Architecture& arch) {
  PolicyParams p{arch, {}};
  const auto shapes = tensor_shapes(arch);
  for (std::size_t i = 0; i < kNumTensors; ++i) {
    const auto [r, c] = shapes[i];
    const bool weight = kTensorNames[i].ends_with("_w");
    if (!weight) {
      p.t[i] = Eigen::MatrixXd::Zero(r, c);
      continue;
    }
    const bool head = i == kPiOutW || i == kVOutW;
    p.t[i] = column_norm_init(r, c, head ? kHeadInitScale : kHiddenInitScale, rng.split(kTensorNames[i]));
  }
  p[kPiOutB](0, 2) = kBrakeBiasInit;
  return p;
}

inline PolicyParams init_params(const CounterRng& rng, bool with_comm, int num_cars = 12) {
  return init_params(rng, Architecture::for_mode(with_comm ? ModelMode::v2v : ModelMode::baseline, num_cars));
}

inline Eigen::VectorXd effective_log_std(const PolicyParams& p) {
  return p[kLogStd].row(0).transpose().cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
}

namespace detail {
inline Eigen::MatrixXd affine(const Eigen::MatrixXd& x, const Eigen::MatrixXd& w, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd z = x * w;
  z.rowwise() += b.row(0);
  return z;
}
inline Eigen::MatrixXd tanh_layer(const Eigen::MatrixXd& x, const Eigen::MatrixXd& w, const Eigen::MatrixXd& b) {
  return affine(x, w, b).array().tanh().matrix();
}
}  // namespace detail

// Lays canonically ordered messages into fixed slots, zero-filling absent ones.
inline Eigen::VectorXd build_slots(std::span<const std::array<double, kMessageWidth>> messages, int max_senders) {
  if (static_cast<int>(messages.size()) > max_senders)
    throw ContractError("at most " + std::to_string(max_senders) + " messages fit the encoder, got " +
                        std::to_string(messages.size()));
  Eigen::VectorXd slots = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(max_senders) * kMessageWidth);
  for (std::size_t i = 0; i < messages.size(); ++i)
    for (std::size_t k = 0; k < kMessageWidth; ++k) slots[static_cast<Eigen::Index>(i * kMessageWidth + k)] = messages[i][k];
  return slots;
}

inline Eigen::VectorXd encode_slots(const PolicyParams& p, const Eigen::VectorXd& slots) {
  if (!p.arch.uses_messages()) throw ContractError("baseline architecture has no message encoder");
  if (slots.size() != p.arch.slot_width())
    throw ContractError("slot vector width " + std::to_string(slots.size()) + " != " +
                        std::to_string(p.arch.slot_width()));
  return detail::tanh_layer(slots.transpose(), p[kEncW], p[kEncB]).row(0).transpose();
}

inline Eigen::VectorXd encode_messages(const PolicyParams& p, std::span<const V2VMessage> messages) {
  std::vector<std::array<double, kMessageWidth>> raw;
  for (const auto& m : messages) raw.push_back(m.to_array());
  return encode_slots(p, build_slots(raw, p.arch.max_senders));
}

struct ForwardPass {
  Eigen::MatrixXd code;   // N x 32, empty in the baseline
  Eigen::MatrixXd input;  // N x input_width
  Eigen::MatrixXd h1, h2, head;
  Eigen::MatrixXd g1, g2;
  Eigen::VectorXd value;

  [[nodiscard]] Eigen::MatrixXd means(const Architecture& a) const { return head.leftCols(a.gaussian_dims()); }
  [[nodiscard]] Eigen::MatrixXd logits(const Architecture& a) const { return head.rightCols(a.select_dims()); }
};

// obs: N x 40 (already normalized); slots: N x slot_width (ignored in the baseline).
inline ForwardPass forward_batch(const PolicyParams& p, const Eigen::MatrixXd& obs, const Eigen::MatrixXd& slots) {
  if (obs.cols() != static_cast<Eigen::Index>(kObservationWidth))
    throw ContractError("observation width must be 40, got " + std::to_string(obs.cols()));
  ForwardPass f;
  if (p.arch.uses_messages()) {
    if (slots.cols() != p.arch.slot_width() || slots.rows() != obs.rows())
      throw ContractError("slot batch shape does not match the architecture");
    f.code = detail::tanh_layer(slots, p[kEncW], p[kEncB]);
    f.input.resize(obs.rows(), p.arch.input_width());
    f.input << obs, f.code;
  } else {
    f.input = obs;
  }
  f.h1 = detail::tanh_layer(f.input, p[kPi1W], p[kPi1B]);
  f.h2 = detail::tanh_layer(f.h1, p[kPi2W], p[kPi2B]);
  f.head = detail::affine(f.h2, p[kPiOutW], p[kPiOutB]);
  f.g1 = detail::tanh_layer(f.input, p[kV1W], p[kV1B]);
  f.g2 = detail::tanh_layer(f.g1, p[kV2W], p[kV2B]);
  f.value = detail::affine(f.g2, p[kVOutW], p[kVOutB]).col(0);
  return f;
}

struct PolicyOutput {
  Eigen::VectorXd mean;    // Gaussian means
  Eigen::VectorXd logits;  // select-mode Bernoulli logits, empty otherwise
  double value = 0.0;
};

// Single sample given a precomputed message code.
inline PolicyOutput forward(const PolicyParams& p, std::span<const double> obs,
                            std::optional<std::span<const double>> code = std::nullopt) {
  if (obs.size() != kObservationWidth)
    throw ContractError("observation width must be 40, got " + std::to_string(obs.size()));
  if (p.arch.uses_messages() != code.has_value())
    throw ContractError(p.arch.uses_messages() ? "message code required" : "baseline takes no message code");
  if (code && code->size() != static_cast<std::size_t>(kCodeWidth))
    throw ContractError("message code width must be 32, got " + std::to_string(code->size()));
  Eigen::MatrixXd x(1, p.arch.input_width());
  for (std::size_t i = 0; i < obs.size(); ++i) x(0, static_cast<Eigen::Index>(i)) = obs[i];
  if (code)
    for (std::size_t i = 0; i < code->size(); ++i) x(0, static_cast<Eigen::Index>(kObservationWidth + i)) = (*code)[i];
  const Eigen::MatrixXd h2 = detail::tanh_layer(detail::tanh_layer(x, p[kPi1W], p[kPi1B]), p[kPi2W], p[kPi2B]);
  const Eigen::MatrixXd head = detail::affine(h2, p[kPiOutW], p[kPiOutB]);
  const Eigen::MatrixXd g2 = detail::tanh_layer(detail::tanh_layer(x, p[kV1W], p[kV1B]), p[kV2W], p[kV2B]);
  PolicyOutput out;
  out.mean = head.row(0).head(p.arch.gaussian_dims()).transpose();
  out.logits = head.row(0).tail(p.arch.select_dims()).transpose();
  out.value = detail::affine(g2, p[kVOutW], p[kVOutB])(0, 0);
  return out;
}

// ---- distributions ---------------------------------------------------------

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;  // log(2*pi)

inline double gaussian_log_prob(const Eigen::VectorXd& a, const Eigen::VectorXd& mean, const Eigen::VectorXd& log_std) {
  double lp = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double z = (a[i] - mean[i]) * std::exp(-log_std[i]);
    lp += -0.5 * z * z - log_std[i] - 0.5 * kLog2Pi;
  }
  return lp;
}

inline double gaussian_entropy(const Eigen::VectorXd& log_std) {
  return log_std.size() * 0.5 * (kLog2Pi + 1.0) + log_std.sum();
}

// log sigmoid(l) evaluated without overflow.
inline double log_sigmoid(double l) { return l >= 0 ? -std::log1p(std::exp(-l)) : l - std::log1p(std::exp(l)); }
inline double sigmoid(double l) { return l >= 0 ? 1.0 / (1.0 + std::exp(-l)) : std::exp(l) / (1.0 + std::exp(l)); }

inline double bernoulli_log_prob(const Eigen::VectorXd& bits, const Eigen::VectorXd& logits) {
  double lp = 0.0;
  for (Eigen::Index i = 0; i < bits.size(); ++i) lp += bits[i] > 0.5 ? log_sigmoid(logits[i]) : log_sigmoid(-logits[i]);
  return lp;
}

inline double bernoulli_entropy(const Eigen::VectorXd& logits) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const double p = sigmoid(logits[i]);
    h -= p * log_sigmoid(logits[i]) + (1.0 - p) * log_sigmoid(-logits[i]);
  }
  return h;
}

struct SampledAction {
  Eigen::VectorXd gaussian;  // pre-clamp sample
  Eigen::VectorXd bits;      // select-mode mask bits (0/1)
  double log_prob = 0.0;
};

inline SampledAction sample_action(const Eigen::VectorXd& mean, const Eigen::VectorXd& log_std, CounterRng& rng,
                                   const Eigen::VectorXd& logits = {}) {
  SampledAction s;
  s.gaussian.resize(mean.size());
  for (Eigen::Index i = 0; i < mean.size(); ++i) s.gaussian[i] = mean[i] + std::exp(log_std[i]) * rng.normal();
  s.bits.resize(logits.size());
  for (Eigen::Index i = 0; i < logits.size(); ++i) s.bits[i] = rng.uniform() < sigmoid(logits[i]) ? 1.0 : 0.0;
  s.log_prob = gaussian_log_prob(s.gaussian, mean, log_std) + bernoulli_log_prob(s.bits, logits);
  return s;
}

// Greedy action: Gaussian means, mask bits where the logit is positive.
inline SampledAction greedy_action(const Eigen::VectorXd& mean, const Eigen::VectorXd& log_std,
                                   const Eigen::VectorXd& logits = {}) {
  SampledAction s;
  s.gaussian = mean;
  s.bits = (logits.array() > 0.0).cast<double>().matrix();
  s.log_prob = gaussian_log_prob(s.gaussian, mean, log_std) + bernoulli_log_prob(s.bits, logits);
  return s;
}

inline std::pair<double, double> log_prob_entropy(const PolicyParams& p, std::span<const double> obs,
                                                  std::optional<std::span<const double>> code,
                                                  const SampledAction& action) {
  const PolicyOutput out = forward(p, obs, code);
  const Eigen::VectorXd ls = effective_log_std(p);
  return {gaussian_log_prob(action.gaussian, out.mean, ls) + bernoulli_log_prob(action.bits, out.logits),
          gaussian_entropy(ls) + bernoulli_entropy(out.logits)};
}

// Per-sample log-prob and entropy for a batch that has been forwarded.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> batch_log_prob_entropy(const PolicyParams& p, const ForwardPass& f,
                                                                          const Eigen::MatrixXd& actions,
                                                                          const Eigen::MatrixXd& bits) {
  const Eigen::VectorXd ls = effective_log_std(p);
  const Eigen::MatrixXd mean = f.means(p.arch);
  const Eigen::MatrixXd logits = f.logits(p.arch);
  const Eigen::Index n = f.head.rows();
  Eigen::VectorXd lp(n), ent(n);
  const double h_gauss = gaussian_entropy(ls);
  for (Eigen::Index r = 0; r < n; ++r) {
    lp[r] = gaussian_log_prob(actions.row(r).transpose(), mean.row(r).transpose(), ls);
    ent[r] = h_gauss;
    if (logits.cols() > 0) {
      lp[r] += bernoulli_log_prob(bits.row(r).transpose(), logits.row(r).transpose());
      ent[r] += bernoulli_entropy(logits.row(r).transpose());
    }
  }
  return {lp, ent};
}

// ---- backward --------------------------------------------------------------

// Upstream derivatives of a scalar loss w.r.t. each sample's log-prob,
// value and entropy.
struct LossGrad {
  Eigen::VectorXd d_log_prob;
  Eigen::VectorXd d_value;
  Eigen::VectorXd d_entropy;
};

inline PolicyParams backward(const PolicyParams& p, const Eigen::MatrixXd& slots, const ForwardPass& f,
                             const Eigen::MatrixXd& actions, const Eigen::MatrixXd& bits, const LossGrad& up) {
  const Architecture& a = p.arch;
  const Eigen::Index n = f.head.rows();
  const int G = a.gaussian_dims();
  const int S = a.select_dims();
  if (n == 0) throw ContractError("backward needs a nonempty batch");
  PolicyParams g = p.zeros_like();

  const Eigen::VectorXd raw_ls = p[kLogStd].row(0).transpose();
  const Eigen::VectorXd ls = effective_log_std(p);
  const Eigen::ArrayXd inv_var = (-2.0 * ls).array().exp();

  Eigen::MatrixXd d_head(n, a.head_width());
  Eigen::VectorXd d_ls = Eigen::VectorXd::Zero(G);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (int i = 0; i < G; ++i) {
      const double diff = actions(r, i) - f.head(r, i);
      d_head(r, i) = up.d_log_prob[r] * diff * inv_var[i];
      d_ls[i] += up.d_log_prob[r] * (diff * diff * inv_var[i] - 1.0) + up.d_entropy[r];
    }
    for (int k = 0; k < S; ++k) {
      const double l = f.head(r, G + k);
      const double q = sigmoid(l);
      d_head(r, G + k) = up.d_log_prob[r] * (bits(r, k) - q) - up.d_entropy[r] * l * q * (1.0 - q);
    }
  }
  for (int i = 0; i < G; ++i)
    g[kLogStd](0, i) = (raw_ls[i] > kLogStdMin && raw_ls[i] < kLogStdMax) ? d_ls[i] : 0.0;

  // policy trunk
  g[kPiOutW] = f.h2.transpose() * d_head;
  g[kPiOutB] = d_head.colwise().sum();
  Eigen::MatrixXd dz2 = ((d_head * p[kPiOutW].transpose()).array() * (1.0 - f.h2.array().square())).matrix();
  g[kPi2W] = f.h1.transpose() * dz2;
  g[kPi2B] = dz2.colwise().sum();
  Eigen::MatrixXd dz1 = ((dz2 * p[kPi2W].transpose()).array() * (1.0 - f.h1.array().square())).matrix();
  g[kPi1W] = f.input.transpose() * dz1;
  g[kPi1B] = dz1.colwise().sum();
  Eigen::MatrixXd d_input = dz1 * p[kPi1W].transpose();

  // value trunk
  const Eigen::MatrixXd d_v = up.d_value;
  g[kVOutW] = f.g2.transpose() * d_v;
  g[kVOutB] = d_v.colwise().sum();
  Eigen::MatrixXd dy2 = ((d_v * p[kVOutW].transpose()).array() * (1.0 - f.g2.array().square())).matrix();
  g[kV2W] = f.g1.transpose() * dy2;
  g[kV2B] = dy2.colwise().sum();
  Eigen::MatrixXd dy1 = ((dy2 * p[kV2W].transpose()).array() * (1.0 - f.g1.array().square())).matrix();
  g[kV1W] = f.input.transpose() * dy1;
  g[kV1B] = dy1.colwise().sum();
  d_input += dy1 * p[kV1W].transpose();

  if (a.uses_messages()) {
    const Eigen::MatrixXd d_code = d_input.rightCols(kCodeWidth);
    const Eigen::MatrixXd dzc = (d_code.array() * (1.0 - f.code.array().square())).matrix();
    g[kEncW] = slots.transpose() * dzc;
    g[kEncB] = dzc.colwise().sum();
  }
  return g;
}

}  // namespace v2v
