#include "gcdiff/diffusion_process.hpp"
#include "gcdiff/oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>

using namespace gcdiff;

namespace {

RowMatrixXd one_hot_row(int k, int cls) {
  RowMatrixXd m = RowMatrixXd::Zero(1, k);
  m(0, cls) = 1.0;
  return m;
}

JointSample z1(double x, int y) { return {Eigen::VectorXd::Constant(1, x), {y}}; }

}  // namespace

TEST(QMarginal, QuarterAlphabar) {
  // alphabar 0.25 from a single beta of 0.75.
  const NoiseSchedule s({0.75}, {0.5});
  const FactorizedGCParams p = q_marginal_params(z1(1.0, 0), 1, s, 2);
  EXPECT_NEAR(p.mean(0), 0.5, 1e-15);
  EXPECT_NEAR(p.var(0), 0.75, 1e-15);
  EXPECT_NEAR(p.theta(0, 0), 0.75, 1e-15);
  EXPECT_NEAR(p.theta(0, 1), 0.25, 1e-15);
}

TEST(QStep, HalfBetaKeepsLabelWithThreeQuarters) {
  const NoiseSchedule s({0.1}, {0.5});
  Rng rng(1);
  const int n = 100000;
  int kept = 0;
  for (int i = 0; i < n; ++i) kept += q_step(z1(0.0, 0), 1, s, 2, rng).y[0] == 0;
  const double sd = std::sqrt(n * 0.75 * 0.25);
  EXPECT_LE(std::abs(kept - 0.75 * n), 3.0 * sd);
}

TEST(QStep, TinyBetaIsNearlyIdentity) {
  const NoiseSchedule s({1e-14}, {1e-14});
  Rng rng(2);
  const JointSample z{Eigen::Vector3d(0.1, -0.4, 0.9), {0, 2, 1}};
  for (int i = 0; i < 200; ++i) {
    const JointSample o = q_step(z, 1, s, 3, rng);
    EXPECT_LT((o.x - z.x).cwiseAbs().maxCoeff(), 1e-5);
    EXPECT_EQ(o.y, z.y);
  }
}

TEST(QStep, RejectsBadTimestep) {
  const NoiseSchedule s({0.1, 0.2}, {0.1, 0.2});
  Rng rng(0);
  EXPECT_THROW(q_step(z1(0.0, 0), 0, s, 2, rng), ValidationError);
  EXPECT_THROW(q_step(z1(0.0, 0), 3, s, 2, rng), ValidationError);
}

// Labels 0-based: y_t = 1, y_0 = 0 is the K = 3 hand example.
TEST(Posterior, HandExampleThreeClasses) {
  const NoiseSchedule s({0.1, 0.1}, {0.5, 0.1});
  ASSERT_NEAR(s.alpha_cat(2), 0.9, 1e-15);
  ASSERT_NEAR(s.alphabar_cat(1), 0.5, 1e-15);
  const PosteriorParams p = posterior_params(Eigen::VectorXd::Zero(1), one_hot_row(3, 0), z1(0.0, 1), 2, s);
  EXPECT_NEAR(p.params.theta(0, 0), 4.0 / 33.0, 1e-12);
  EXPECT_NEAR(p.params.theta(0, 1), 28.0 / 33.0, 1e-12);
  EXPECT_NEAR(p.params.theta(0, 2), 1.0 / 33.0, 1e-12);
  EXPECT_NEAR(p.params.theta(0, 0), 0.121212, 1e-6);
  EXPECT_NEAR(p.params.theta(0, 1), 0.848485, 1e-6);
  EXPECT_NEAR(p.params.theta(0, 2), 0.030303, 1e-6);
}

TEST(Posterior, ZeroGaussianBetaCollapsesOntoXt) {
  // beta_2 tiny: alphabar_2 ~ alphabar_1, x0 coefficient vanishes.
  const NoiseSchedule s({0.3, 1e-13}, {0.3, 0.3});
  const PosteriorParams p = posterior_params(Eigen::VectorXd::Constant(1, 0.8), one_hot_row(2, 0), z1(-0.4, 1), 2, s);
  EXPECT_NEAR(p.params.mean(0), -0.4, 1e-12);
  EXPECT_LE(p.params.var(0), std::max(kVarianceFloor, 1e-13 * (1.0 + 1e-9)));
}

TEST(Posterior, NoCategoricalNoiseYetRecoversY0) {
  // alphabar_cat(1) ~ 1 when beta_cat(1) is tiny.
  const NoiseSchedule s({0.1, 0.2}, {1e-13, 0.4});
  const PosteriorParams p = posterior_params(Eigen::VectorXd::Zero(1), one_hot_row(4, 2), z1(0.0, 0), 2, s);
  for (int j = 0; j < 4; ++j) EXPECT_NEAR(p.params.theta(0, j), j == 2 ? 1.0 : 0.0, 1e-12);
}

TEST(Posterior, RowsArePmfsForRandomInputs) {
  Rng rng(3);
  for (int c = 0; c < 300; ++c) {
    const int big_t = 2 + c % 20;
    const int k = 2 + c % 5;
    const NoiseSchedule s(oracle::random_betas(big_t, rng), oracle::random_betas(big_t, rng));
    const int t = std::uniform_int_distribution<int>(2, big_t)(rng);
    RowMatrixXd theta0(3, k);
    for (Eigen::Index i = 0; i < 3; ++i) {
      for (int j = 0; j < k; ++j) theta0(i, j) = uniform01(rng);
      theta0.row(i) /= theta0.row(i).sum();
    }
    const JointSample zt{Eigen::Vector2d(standard_normal(rng), standard_normal(rng)),
                         {0, k - 1, std::uniform_int_distribution<int>(0, k - 1)(rng)}};
    const PosteriorParams p = posterior_params(Eigen::Vector2d(0.1, 0.2), theta0, zt, t, s);
    for (Eigen::Index i = 0; i < 3; ++i) {
      EXPECT_NEAR(p.params.theta.row(i).sum(), 1.0, 1e-12);
      EXPECT_GE(p.params.theta.row(i).minCoeff(), 0.0);
    }
  }
}

TEST(Posterior, PredictedPmfEntersLinearly) {
  const NoiseSchedule s = make_cosine_schedule(50);
  Rng rng(4);
  const int k = 4;
  RowMatrixXd theta0(1, k);
  theta0 << 0.1, 0.2, 0.3, 0.4;
  const JointSample zt = z1(0.3, 2);
  const int t = 17;
  const PosteriorParams p = posterior_params(Eigen::VectorXd::Zero(1), theta0, zt, t, s);
  // Unnormalized rows are linear in theta0: sum over y0 of theta0 times the enumerated chain.
  Eigen::VectorXd mix = Eigen::VectorXd::Zero(k);
  for (int y0 = 0; y0 < k; ++y0) {
    const Eigen::MatrixXd to_s = oracle::transition_product(s.betas_cat(), 0, t - 1, k);
    const Eigen::MatrixXd step = oracle::transition_product(s.betas_cat(), t - 1, t, k);
    for (int j = 0; j < k; ++j) mix(j) += theta0(0, y0) * to_s(y0, j) * step(j, 2);
  }
  mix /= mix.sum();
  for (int j = 0; j < k; ++j) EXPECT_NEAR(p.params.theta(0, j), mix(j), 1e-12);
}

TEST(Posterior, RejectsShapeAndTimestepErrors) {
  const NoiseSchedule s = make_cosine_schedule(10);
  EXPECT_THROW(posterior_params(Eigen::VectorXd::Zero(1), one_hot_row(2, 0), z1(0.0, 0), 1, s), ValidationError);
  EXPECT_THROW(posterior_params(Eigen::VectorXd::Zero(1), one_hot_row(2, 0), z1(0.0, 0), 11, s), ValidationError);
  EXPECT_THROW(posterior_params(Eigen::VectorXd::Zero(2), one_hot_row(2, 0), z1(0.0, 0), 5, s), ValidationError);
}

TEST(Posterior, FullStrideMatchesOneStepBitExact) {
  const NoiseSchedule s = make_cosine_schedule(100, 2.0);
  const RowMatrixXd th = one_hot_row(3, 1);
  for (int t = 2; t <= 100; ++t) {
    const PosteriorParams a = posterior_params(Eigen::VectorXd::Constant(1, 0.5), th, z1(0.2, 0), t, s);
    const PosteriorParams b = posterior_between(Eigen::VectorXd::Constant(1, 0.5), th, z1(0.2, 0), t, t - 1, s);
    EXPECT_EQ(a.params.mean, b.params.mean);
    EXPECT_EQ(a.params.var, b.params.var);
    EXPECT_EQ(a.params.theta, b.params.theta);
  }
}

TEST(Oracle, PosteriorMatchesBayesEnumeration) {
  const oracle::CheckResult r = oracle::check_posterior(1000, 11);
  EXPECT_TRUE(r.passed) << r.line();
}

TEST(Oracle, StridedPosteriorMatchesBayesEnumeration) {
  const oracle::CheckResult r = oracle::check_strided_posterior(300, 12);
  EXPECT_TRUE(r.passed) << r.line();
}

TEST(Oracle, CategoricalMarginalMatchesTransitionProduct) {
  const oracle::CheckResult r = oracle::check_categorical_marginal(300, 13);
  EXPECT_TRUE(r.passed) << r.line();
}

TEST(Oracle, StridedKernelMatchesTransitionProduct) {
  const oracle::CheckResult r = oracle::check_stride_kernel(300, 14);
  EXPECT_TRUE(r.passed) << r.line();
}

TEST(Oracle, ComposedChainMatchesMarginalMonteCarlo) {
  const oracle::CheckResult r = oracle::check_chain_montecarlo(20000, 15);
  EXPECT_TRUE(r.passed) << r.line();
}

TEST(ForwardJump, DeterministicPerSeed) {
  const NoiseSchedule s = make_cosine_schedule(30);
  const JointSample z{Eigen::Vector2d(0.3, -0.2), {1, 0}};
  Rng a(9), b(9);
  EXPECT_EQ(forward_jump(z, 3, 20, s, 3, a), forward_jump(z, 3, 20, s, 3, b));
}
