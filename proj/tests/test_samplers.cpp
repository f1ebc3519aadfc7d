#include <gtest/gtest.h>

#include <cmath>

#include "adasamp/problems.hpp"
#include "adasamp/samplers.hpp"
#include "adasamp/verify.hpp"

using namespace adasamp;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

// f_1 = 1/2 x^2 (a = 1), f_2 = 1/2 (3x)^2 with zero labels.
LeastSquaresProblem two_scales() {
  DenseDataset ds;
  ds.features.resize(2, 1);
  ds.features << 1.0, 3.0;
  ds.labels = Vector::Zero(2);
  return LeastSquaresProblem(ds);
}

}  // namespace

TEST(FixedDistributions, Uniform) {
  const auto u = uniform_dist(4);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(u[i], 0.25);
  EXPECT_TRUE(u.feasible());
  EXPECT_THROW(uniform_dist(0), Fault);
}

TEST(FixedDistributions, ImportanceProportionalToSmoothness) {
  const auto p = importance_dist(vec({1.0, 3.0}));
  EXPECT_DOUBLE_EQ(p[0], 0.25);
  EXPECT_DOUBLE_EQ(p[1], 0.75);
  const auto q = importance_dist(vec({0.0, 5.0}));
  EXPECT_DOUBLE_EQ(q[0], 0.0);
  EXPECT_DOUBLE_EQ(q[1], 1.0);
  EXPECT_THROW(importance_dist(vec({0.0, 0.0})), Fault);
  EXPECT_THROW(importance_dist(vec({-1.0, 2.0})), Fault);
}

TEST(Oracle, EqualPointsFallBackToUniform) {
  const auto p = two_scales();
  const auto d = oracle_dist(p, vec({2.0}), vec({2.0}));
  EXPECT_DOUBLE_EQ(d[0], 0.5);
  EXPECT_DOUBLE_EQ(d[1], 0.5);
}

TEST(Oracle, ProportionalToDifferenceNorms) {
  // |grad f_i(x) - grad f_i(w)| = a_i^2 |x - w| = (1, 9) * 1.
  const auto p = two_scales();
  const auto d = oracle_dist(p, vec({1.0}), vec({0.0}));
  EXPECT_DOUBLE_EQ(d[0], 0.1);
  EXPECT_DOUBLE_EQ(d[1], 0.9);
  const auto plain = oracle_dist(p, vec({1.0}));
  EXPECT_DOUBLE_EQ(plain[1], 0.9);
}

TEST(ExpertGrid, CountMatchesClosedForm) {
  const auto g = expert_rate_grid(100.0, 1000, 0.4, 2.0);
  const double spread = 1.0 + 4.0 * std::log(100.0 / 0.4) * 999.0 / std::log(100.0);
  EXPECT_EQ(g.count, static_cast<std::size_t>(std::floor(0.5 * std::log2(spread))) + 1);
  EXPECT_EQ(g.count, 7u);
  // n = e, T = 2, alpha = 1: 1/2 log2(5) = 1.16.
  EXPECT_EQ(expert_rate_grid(std::exp(1.0), 2, 1.0, 1.0).count, 2u);
}

TEST(ExpertGrid, RatesDoubleAndStartAtBase) {
  const auto g = expert_rate_grid(50.0, 500, 0.3, 4.0);
  const double base = std::pow(0.3, 3) / (std::pow(50.0, 3) * 4.0) * std::sqrt(std::log(50.0) / 1000.0);
  EXPECT_NEAR(g.rates[0], base, 1e-15 * base);
  for (std::size_t e = 1; e < g.rates.size(); ++e) EXPECT_EQ(g.rates[e] / g.rates[e - 1], 2.0);
}

TEST(ExpertGrid, Faults) {
  EXPECT_THROW(expert_rate_grid(1.0, 10, 0.4, 1.0), Fault);
  EXPECT_THROW(expert_rate_grid(10.0, 1, 0.4, 1.0), Fault);
  EXPECT_THROW(expert_rate_grid(10.0, 10, 0.0, 1.0), Fault);
  EXPECT_THROW(expert_rate_grid(10.0, 10, 1.5, 1.0), Fault);
  EXPECT_THROW(expert_rate_grid(10.0, 10, 0.4, 0.0), Fault);
}

TEST(AdaOsmd, PriorWeights) {
  // n = e and T = 2 gives E = 2: weights (1 + 1/2) * (1/2, 1/6).
  AdaOsmdState s = adaosmd_init(3, 2, 1.0, 1.0);
  ASSERT_EQ(s.experts.size(), 2u);
  EXPECT_DOUBLE_EQ(s.meta_weights[0], 0.75);
  EXPECT_DOUBLE_EQ(s.meta_weights[1], 0.25);
  for (std::size_t n : {5u, 50u, 500u}) {
    const AdaOsmdState t = adaosmd_init(n, 10000, 0.4, 3.0);
    EXPECT_NEAR(t.meta_weights.sum(), 1.0, 1e-14);
    EXPECT_DOUBLE_EQ(t.meta_rate, 0.4 / static_cast<double>(n) * std::sqrt(8.0 / (10000.0 * 3.0)));
    for (const auto& e : t.experts) EXPECT_DOUBLE_EQ(e.dist[0], 1.0 / static_cast<double>(n));
  }
}

TEST(AdaOsmd, MixtureIsWeightedAverage) {
  AdaOsmdState s = adaosmd_init(3, 2, 1.0, 1.0);
  ASSERT_EQ(s.experts.size(), 2u);
  for (auto& e : s.experts) e.dist.probs.resize(2);
  s.meta_weights = vec({0.75, 0.25});
  s.experts[0].dist.probs = vec({0.6, 0.4});
  s.experts[1].dist.probs = vec({0.2, 0.8});
  const auto mix = adaosmd_current(s);
  EXPECT_DOUBLE_EQ(mix[0], 0.75 * 0.6 + 0.25 * 0.2);
  EXPECT_DOUBLE_EQ(mix[1], 0.75 * 0.4 + 0.25 * 0.8);
  s.experts[0].dist.probs = vec({0.8, 0.2});
  const auto mix2 = adaosmd_current(s);
  EXPECT_DOUBLE_EQ(mix2[0], 0.65);
  EXPECT_DOUBLE_EQ(mix2[1], 0.35);
}

TEST(Projection, KnownTraces) {
  const Vector a = project_floored_simplex(vec({9.0, 1.0}), 0.4);
  EXPECT_EQ(a[0], 0.8);
  EXPECT_EQ(a[1], 0.2);
  const Vector b = project_floored_simplex(vec({1.11277, 0.5}), 0.4);
  EXPECT_NEAR(b[0], 1.11277 / 1.61277, 1e-12);
  EXPECT_NEAR(b[0], 0.6900, 5e-5);
  EXPECT_NEAR(b[1], 0.3100, 5e-5);
}

TEST(Projection, FeasiblePointIsFixed) {
  const Vector p = vec({0.3, 0.5, 0.2});
  const Vector q = project_floored_simplex(p, 0.3);
  for (Eigen::Index i = 0; i < 3; ++i) EXPECT_NEAR(q[i], p[i], 1e-15);
}

TEST(Projection, OutputIsFeasibleAndOrderPreserving) {
  Rng rng(21);
  for (int c = 0; c < 500; ++c) {
    const std::size_t n = 2 + rng.index(30);
    const double alpha = 0.05 + 0.95 * rng.uniform();
    Vector t(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < t.size(); ++i) t[i] = std::exp(3.0 * rng.normal());
    const Vector p = project_floored_simplex(t, alpha);
    EXPECT_NEAR(p.sum(), 1.0, 1e-12);
    EXPECT_GE(p.minCoeff(), alpha / static_cast<double>(n) * (1.0 - 1e-12));
    for (Eigen::Index i = 0; i < t.size(); ++i)
      for (Eigen::Index j = 0; j < t.size(); ++j)
        if (t[i] < t[j]) {
          EXPECT_LE(p[i], p[j] + 1e-15);
        }
  }
}

TEST(Projection, MatchesGridSearch) {
  const auto r = verify::projection(77, 25);
  EXPECT_TRUE(r.passed) << r.detail;
}

TEST(Projection, AlphaOneIsUniform) {
  const Vector p = project_floored_simplex(vec({5.0, 1.0, 1.0}), 1.0);
  for (Eigen::Index i = 0; i < 3; ++i) EXPECT_NEAR(p[i], 1.0 / 3.0, 1e-15);
}

TEST(Projection, Faults) {
  EXPECT_THROW(project_floored_simplex(vec({1.0, 0.0}), 0.4), Fault);
  EXPECT_THROW(project_floored_simplex(Vector(), 0.4), Fault);
}

TEST(AdaOsmd, ZeroFeedbackLeavesStateUnchanged) {
  const AdaOsmdState s = adaosmd_init(10, 100, 0.4, 1.0);
  const AdaOsmdState t = adaosmd_update(s, {3, 0.1, 0.0});
  for (std::size_t e = 0; e < s.experts.size(); ++e)
    EXPECT_TRUE(t.experts[e].dist.probs.isApprox(s.experts[e].dist.probs, 1e-15));
  EXPECT_TRUE(t.meta_weights.isApprox(s.meta_weights, 1e-15));
}

TEST(AdaOsmd, SingleExpertKeepsUnitWeight) {
  AdaOsmdState s = adaosmd_init(10, 100, 0.4, 1.0);
  s.experts.resize(1);
  s.meta_weights = vec({1.0});
  const AdaOsmdState t = adaosmd_update(s, {2, 0.1, 5.0});
  EXPECT_DOUBLE_EQ(t.meta_weights[0], 1.0);
}

TEST(AdaOsmd, EqualLossesKeepWeightRatio) {
  AdaOsmdState s = adaosmd_init(4, 100, 0.4, 1.0);
  s.experts.resize(2);
  s.experts[1] = s.experts[0];
  s.meta_weights = vec({0.7, 0.3});
  const AdaOsmdState t = adaosmd_update(s, {1, 0.25, 3.0});
  EXPECT_NEAR(t.meta_weights[0] / t.meta_weights[1], 0.7 / 0.3, 1e-12);
}

TEST(AdaOsmd, SampledCoordinateGainsMass) {
  AdaOsmdState s = adaosmd_init(5, 50, 0.4, 1.0);
  for (auto& e : s.experts) e.rate = 0.01;
  double prev = 0.0;
  for (double a : {0.5, 1.0, 2.0, 4.0}) {
    const AdaOsmdState t = adaosmd_update(s, {2, 0.2, a});
    const double p = adaosmd_current(t)[2];
    EXPECT_GT(p, 0.2);
    EXPECT_GT(p, prev);
    EXPECT_TRUE(adaosmd_current(t).feasible());
    prev = p;
  }
}

TEST(AdaOsmd, SaturationIsCounted) {
  AdaOsmdState s = adaosmd_init(5, 50, 0.4, 1.0);
  for (auto& e : s.experts) e.rate = 1e6;
  const AdaOsmdState t = adaosmd_update(s, {0, 0.2, 1e6});
  EXPECT_EQ(t.saturations, s.experts.size());
  EXPECT_TRUE(adaosmd_current(t).feasible());
}

TEST(AdaOsmd, RejectsProbabilityBelowFloor) {
  const AdaOsmdState s = adaosmd_init(10, 100, 0.4, 1.0);
  EXPECT_THROW(adaosmd_update(s, {0, 0.01, 1.0}), Fault);
  EXPECT_THROW(adaosmd_update(s, {10, 0.1, 1.0}), Fault);
  EXPECT_THROW(adaosmd_update(s, {0, 0.1, -1.0}), Fault);
}

TEST(AdaOsmd, LossEstimateIsUnbiased) {
  // Sum over draws i ~ q of a_i / (n^2 q_i p_i) equals sum_i a_i / (n^2 p_i).
  const ExpertState expert{{vec({0.1, 0.2, 0.3, 0.4}), 0.1}, 0.0};
  const Vector q = vec({0.4, 0.3, 0.2, 0.1});
  const Vector a = vec({1.0, 4.0, 0.5, 2.0});
  double expectation = 0.0, truth = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    expectation += q[k] * sampling_loss_estimate(expert, {i, q[k], a[k]}, q[k]);
    truth += a[k] / (16.0 * expert.dist.probs[k]);
  }
  EXPECT_NEAR(expectation, truth, 1e-12 * truth);
}

TEST(Draw, EmpiricalFrequency) {
  SimplexDistribution d{vec({0.25, 0.75}), 0.0};
  Rng rng(123);
  std::size_t hits = 0;
  const std::size_t draws = 1000000;
  for (std::size_t k = 0; k < draws; ++k) hits += draw(d, rng).index == 1;
  EXPECT_NEAR(static_cast<double>(hits) / draws, 0.75, 0.005);
}

TEST(Draw, NeverPicksZeroProbability) {
  SimplexDistribution d{vec({0.0, 1.0, 0.0}), 0.0};
  Rng rng(1);
  for (int k = 0; k < 1000; ++k) {
    const Draw x = draw(d, rng);
    EXPECT_EQ(x.index, 1u);
    EXPECT_EQ(x.prob, 1.0);
  }
}
