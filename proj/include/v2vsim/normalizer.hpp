#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <span>

namespace v2v {

// Running per-feature mean/variance (Welford, Chan merge). Frozen while a
// batch of episodes is collected; merged afterwards in a fixed order.
class RunningNorm {
 public:
  RunningNorm() = default;
  explicit RunningNorm(Eigen::Index dim) : mean_(Eigen::VectorXd::Zero(dim)), m2_(Eigen::VectorXd::Zero(dim)) {}

  [[nodiscard]] Eigen::Index dim() const { return mean_.size(); }
  [[nodiscard]] double count() const { return count_; }
  [[nodiscard]] const Eigen::VectorXd& mean() const { return mean_; }
  [[nodiscard]] const Eigen::VectorXd& m2() const { return m2_; }

  void restore(double count, Eigen::VectorXd mean, Eigen::VectorXd m2) {
    count_ = count;
    mean_ = std::move(mean);
    m2_ = std::move(m2);
  }

  void observe(std::span<const double> x) {
    const Eigen::Map<const Eigen::VectorXd> v(x.data(), static_cast<Eigen::Index>(x.size()));
    count_ += 1.0;
    const Eigen::VectorXd delta = v - mean_;
    mean_ += delta / count_;
    m2_.array() += delta.array() * (v - mean_).array();
  }

  void merge(const RunningNorm& o) {
    if (o.count_ == 0.0) return;
    if (count_ == 0.0) {
      *this = o;
      return;
    }
    const double n = count_ + o.count_;
    const Eigen::VectorXd delta = o.mean_ - mean_;
    mean_ += delta * (o.count_ / n);
    m2_ += o.m2_ + delta.cwiseProduct(delta) * (count_ * o.count_ / n);
    count_ = n;
  }

  [[nodiscard]] Eigen::VectorXd variance() const {
    if (count_ < 2.0) return Eigen::VectorXd::Ones(mean_.size());
    return m2_ / count_;
  }

  // (x - mean) / sqrt(var + eps), clipped to [-clip, clip]. Identity before
  // any data has been seen.
  void apply(std::span<const double> x, std::span<double> out) const {
    if (count_ < 2.0) {
      std::copy(x.begin(), x.end(), out.begin());
      return;
    }
    const Eigen::VectorXd var = variance();
    for (Eigen::Index i = 0; i < mean_.size(); ++i)
      out[i] = std::clamp((x[i] - mean_[i]) / std::sqrt(var[i] + kEps), -kClip, kClip);
  }

  friend bool operator==(const RunningNorm& a, const RunningNorm& b) {
    return a.count_ == b.count_ && a.mean_ == b.mean_ && a.m2_ == b.m2_;
  }

  static constexpr double kEps = 1e-8;
  static constexpr double kClip = 10.0;

 private:
  double count_ = 0.0;
  Eigen::VectorXd mean_;
  Eigen::VectorXd m2_;
};

}  // namespace v2v
