#include <gtest/gtest.h>

#include "support.hpp"

using namespace v2v;
using v2v::testing::check_gradient;
using v2v::testing::component_grad;
using v2v::testing::component_value;
using v2v::testing::perturbed_params;
using v2v::testing::random_minibatch;

namespace {

const ModelMode kModes[] = {ModelMode::baseline, ModelMode::v2v, ModelMode::emergent_continuous,
                            ModelMode::emergent_select};

bool is_head(std::size_t t) { return t == kPiOutW || t == kVOutW; }

}  // namespace

TEST(PolicyInit, Shapes) {
  const auto base = init_params(CounterRng(1), false);
  EXPECT_EQ(base[kPi1W].rows(), 40);
  EXPECT_EQ(base[kPi1W].cols(), 200);
  EXPECT_EQ(base[kPi2W].rows(), 200);
  EXPECT_EQ(base[kPi2W].cols(), 100);
  EXPECT_EQ(base[kPiOutW].cols(), 3);
  EXPECT_EQ(base[kVOutW].cols(), 1);
  EXPECT_EQ(base[kEncW].size(), 0);

  const auto comm = init_params(CounterRng(1), true);
  EXPECT_EQ(comm[kEncW].rows(), 11 * 21);
  EXPECT_EQ(comm[kEncW].cols(), 32);
  EXPECT_EQ(comm[kPi1W].rows(), 72);
  EXPECT_EQ(comm[kV1W].rows(), 72);
  EXPECT_EQ(comm[kLogStd].cols(), 3);

  const auto cont = init_params(CounterRng(1), Architecture::for_mode(ModelMode::emergent_continuous, 12));
  EXPECT_EQ(cont[kPiOutW].cols(), 3 + 8);
  EXPECT_EQ(cont[kLogStd].cols(), 11);
  const auto sel = init_params(CounterRng(1), Architecture::for_mode(ModelMode::emergent_select, 12));
  EXPECT_EQ(sel[kPiOutW].cols(), 3 + 12);
  EXPECT_EQ(sel[kLogStd].cols(), 3);
}

TEST(PolicyInit, ColumnNormsAndBiases) {
  for (ModelMode mode : kModes) {
    const PolicyParams p = init_params(CounterRng(4), Architecture::for_mode(mode, 12));
    for (std::size_t t : {kEncW, kPi1W, kPi2W, kPiOutW, kV1W, kV2W, kVOutW}) {
      const double want = is_head(t) ? 0.01 : 1.0;
      for (Eigen::Index c = 0; c < p.t[t].cols(); ++c) EXPECT_NEAR(p.t[t].col(c).norm(), want, 1e-12);
    }
    for (std::size_t t : {kEncB, kPi1B, kPi2B, kV1B, kV2B, kVOutB}) EXPECT_TRUE(p.t[t].isZero(0.0));
    for (Eigen::Index c = 0; c < p[kPiOutB].cols(); ++c)
      EXPECT_EQ(p[kPiOutB](0, c), c == 2 ? kBrakeBiasInit : 0.0);
    EXPECT_TRUE(p[kLogStd].isZero(0.0));
  }
}

TEST(PolicyInit, DeterministicFromRng) {
  EXPECT_EQ(init_params(CounterRng(5), true), init_params(CounterRng(5), true));
  EXPECT_FALSE(init_params(CounterRng(5), true) == init_params(CounterRng(6), true));
}

TEST(Encoder, AllZeroSlotsGiveTanhOfBias) {
  PolicyParams p = init_params(CounterRng(2), true);
  CounterRng r(3);
  for (Eigen::Index i = 0; i < p[kEncB].size(); ++i) p[kEncB](0, i) = r.uniform(-2, 2);
  const Eigen::VectorXd code = encode_messages(p, {});
  ASSERT_EQ(code.size(), 32);
  for (Eigen::Index i = 0; i < 32; ++i) EXPECT_DOUBLE_EQ(code[i], std::tanh(p[kEncB](0, i)));
}

TEST(Encoder, RejectsTooManyMessages) {
  const PolicyParams p = init_params(CounterRng(2), true, 3);
  std::vector<V2VMessage> msgs(3);
  EXPECT_THROW(encode_messages(p, msgs), ContractError);
}

TEST(Forward, CodeContract) {
  const PolicyParams base = init_params(CounterRng(2), false);
  const PolicyParams comm = init_params(CounterRng(2), true);
  std::vector<double> obs(40, 0.1), code(32, 0.0), short_obs(39);
  EXPECT_NO_THROW(forward(base, obs));
  EXPECT_THROW(forward(base, obs, std::span<const double>(code)), ContractError);
  EXPECT_THROW(forward(comm, obs), ContractError);
  EXPECT_NO_THROW(forward(comm, obs, std::span<const double>(code)));
  EXPECT_THROW(forward(base, short_obs), ContractError);
}

TEST(Forward, BatchedMatchesPerSample) {
  for (ModelMode mode : kModes) {
    const Architecture arch = Architecture::for_mode(mode, 5);
    const PolicyParams p = perturbed_params(arch, 8);
    const Minibatch mb = random_minibatch(arch, 16, CounterRng(9));
    const ForwardPass f = forward_batch(p, mb.obs, mb.slots);
    for (Eigen::Index i = 0; i < mb.size(); ++i) {
      std::vector<double> obs(mb.obs.row(i).begin(), mb.obs.row(i).end());
      PolicyOutput out;
      if (arch.uses_messages()) {
        const Eigen::VectorXd c = encode_slots(p, mb.slots.row(i).transpose());
        std::vector<double> code(c.data(), c.data() + c.size());
        out = forward(p, obs, std::span<const double>(code));
      } else {
        out = forward(p, obs);
      }
      for (Eigen::Index k = 0; k < out.mean.size(); ++k) EXPECT_NEAR(out.mean[k], f.head(i, k), 1e-12);
      for (Eigen::Index k = 0; k < out.logits.size(); ++k)
        EXPECT_NEAR(out.logits[k], f.head(i, arch.gaussian_dims() + k), 1e-12);
      EXPECT_NEAR(out.value, f.value[i], 1e-12);
    }
  }
}

TEST(Distributions, GaussianClosedForm) {
  Eigen::VectorXd a(3), mu(3), ls(3);
  a << 0.5, -1.0, 0.0;
  mu << 0.0, 0.0, 0.0;
  ls << 0.0, std::log(2.0), -1.0;
  // sum of -z^2/2 - log sigma - log(2 pi)/2, evaluated offline.
  EXPECT_NEAR(gaussian_log_prob(a, mu, ls), -2.6999627801739634, 1e-14);
  // 3/2 (1 + log 2 pi) + sum log sigma
  EXPECT_NEAR(gaussian_entropy(ls), 4.2568155996140185 + std::log(2.0) - 1.0, 1e-14);
  EXPECT_NEAR(gaussian_entropy(Eigen::VectorXd::Zero(3)), 4.2568155996140185, 1e-14);
}

TEST(Distributions, BernoulliClosedForm) {
  Eigen::VectorXd logits(2), bits(2);
  logits << 0.0, 2.0;
  bits << 1.0, 0.0;
  const double q = 1.0 / (1.0 + std::exp(-2.0));
  EXPECT_NEAR(bernoulli_log_prob(bits, logits), std::log(0.5) + std::log(1 - q), 1e-14);
  EXPECT_NEAR(bernoulli_entropy(logits), std::log(2.0) - q * std::log(q) - (1 - q) * std::log(1 - q), 1e-14);
  Eigen::VectorXd big(1), one(1);
  big << 800.0;
  one << 0.0;
  EXPECT_TRUE(std::isfinite(bernoulli_log_prob(one, big)));
  EXPECT_TRUE(std::isfinite(bernoulli_entropy(big)));
}

TEST(Distributions, LogStdIsClamped) {
  PolicyParams p = init_params(CounterRng(1), false);
  p[kLogStd] << 3.0, -7.0, 0.5;
  const Eigen::VectorXd ls = effective_log_std(p);
  EXPECT_EQ(ls[0], 2.0);
  EXPECT_EQ(ls[1], -5.0);
  EXPECT_EQ(ls[2], 0.5);
  const Minibatch mb = random_minibatch(p.arch, 4, CounterRng(2));
  const PolicyParams g = component_grad(p, mb, 1.0, 0.0, 1.0);
  EXPECT_EQ(g[kLogStd](0, 0), 0.0);
  EXPECT_EQ(g[kLogStd](0, 1), 0.0);
  EXPECT_NE(g[kLogStd](0, 2), 0.0);
}

TEST(Distributions, SampleMomentsAndGreedy) {
  Eigen::VectorXd mu(3), ls(3);
  mu << 0.3, -0.2, 1.0;
  ls << 0.0, std::log(0.5), std::log(2.0);
  CounterRng r(5);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(3), sq = Eigen::VectorXd::Zero(3);
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const SampledAction s = sample_action(mu, ls, r);
    ASSERT_NEAR(s.log_prob, gaussian_log_prob(s.gaussian, mu, ls), 1e-12);
    sum += s.gaussian;
    sq += s.gaussian.cwiseProduct(s.gaussian);
  }
  const Eigen::VectorXd mean = sum / n;
  const Eigen::VectorXd var = sq / n - mean.cwiseProduct(mean);
  for (int k = 0; k < 3; ++k) {
    EXPECT_NEAR(mean[k], mu[k], 0.02);
    EXPECT_NEAR(std::sqrt(var[k]), std::exp(ls[k]), 0.02);
  }
  EXPECT_EQ(greedy_action(mu, ls).gaussian, mu);
}

TEST(Backward, LogStdGradientAtTheMean) {
  // With a = mean, log p = sum(-log sigma - log(2 pi)/2), so d/d log_std = -1 per sample.
  const Architecture arch = Architecture::for_mode(ModelMode::baseline, 1);
  const PolicyParams p = perturbed_params(arch, 3);
  Minibatch mb = random_minibatch(arch, 6, CounterRng(4));
  mb.actions = forward_batch(p, mb.obs, mb.slots).means(arch);
  const PolicyParams g = component_grad(p, mb, 1.0, 0.0, 0.0);
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(g[kLogStd](0, k), -6.0, 1e-12);
  EXPECT_TRUE(g[kPiOutW].isZero(1e-12));
}

class GradientTest : public ::testing::TestWithParam<ModelMode> {};

TEST_P(GradientTest, PolicyValueEntropyMatchFiniteDifferences) {
  const Architecture arch = Architecture::for_mode(GetParam(), 4);
  const PolicyParams p = perturbed_params(arch, 11);
  const Minibatch mb = random_minibatch(arch, 8, CounterRng(12));
  struct Part {
    const char* name;
    double cp, cv, ce;
  };
  for (const Part& part : {Part{"log_prob", 1, 0, 0}, Part{"value", 0, 1, 0}, Part{"entropy", 0, 0, 1}}) {
    const PolicyParams g = component_grad(p, mb, part.cp, part.cv, part.ce);
    const auto res = check_gradient(
        p, g, [&](const PolicyParams& q) { return component_value(q, mb, part.cp, part.cv, part.ce); }, 16,
        CounterRng(13));
    EXPECT_GE(res.coords, 200) << part.name;
    EXPECT_LT(res.max_rel, 1e-4) << part.name;
  }
}

TEST_P(GradientTest, PpoLossMatchesFiniteDifferences) {
  const Architecture arch = Architecture::for_mode(GetParam(), 4);
  const PolicyParams p = perturbed_params(arch, 21);
  const Minibatch mb = random_minibatch(arch, 8, CounterRng(22));
  const LossWeights w;
  const LossTerms lt = ppo_loss(p, mb, w);
  const PolicyParams g = backward(p, mb.slots, lt.forward, mb.actions, mb.bits, lt.grad);
  const auto res =
      check_gradient(p, g, [&](const PolicyParams& q) { return ppo_loss(q, mb, w).loss; }, 16, CounterRng(23));
  EXPECT_LT(res.max_rel, 1e-4);
}

INSTANTIATE_TEST_SUITE_P(AllModes, GradientTest,
                         ::testing::Values(ModelMode::baseline, ModelMode::v2v, ModelMode::emergent_continuous,
                                           ModelMode::emergent_select),
                         [](const auto& info) { return std::string(to_string(info.param)); });
