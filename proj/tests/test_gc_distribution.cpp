#include "gcdiff/gc_distribution.hpp"
#include "gcdiff/oracles.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace gcdiff;

namespace {

FactorizedGCParams one_d(double mu, double var, std::vector<double> theta) {
  RowMatrixXd th(1, static_cast<Eigen::Index>(theta.size()));
  for (std::size_t k = 0; k < theta.size(); ++k) th(0, static_cast<Eigen::Index>(k)) = theta[k];
  return make_gc_params(Eigen::VectorXd::Constant(1, mu), Eigen::VectorXd::Constant(1, var), th);
}

JointSample z1(double x, int y) { return {Eigen::VectorXd::Constant(1, x), {y}}; }

}  // namespace

TEST(LogPdf, HalfHalfAtOrigin) {
  EXPECT_NEAR(log_pdf(one_d(0.0, 1.0, {0.5, 0.5}), z1(0.0, 0)), -1.612086, 1e-6);
  EXPECT_NEAR(log_pdf(one_d(0.0, 1.0, {0.5, 0.5}), z1(0.0, 0)), std::log(0.5) - 0.5 * std::log(2 * std::numbers::pi),
              1e-15);
}

TEST(LogPdf, OneHotAtMean) {
  FactorizedGCParams p;
  p.mean = Eigen::Vector3d(0.3, -1.0, 2.0);
  p.var = Eigen::Vector3d::Ones();
  p.theta = RowMatrixXd::Zero(2, 3);
  p.theta(0, 2) = 1.0;
  p.theta(1, 0) = 1.0;
  EXPECT_NEAR(log_pdf(p, JointSample{p.mean, {2, 0}}), -1.5 * std::log(2 * std::numbers::pi), 1e-14);
}

TEST(LogPdf, ZeroProbabilityClassIsMinusInfinity) {
  EXPECT_EQ(log_pdf(one_d(0.0, 1.0, {1.0, 0.0}), z1(0.0, 1)), -std::numeric_limits<double>::infinity());
}

TEST(LogPdf, RejectsShapeMismatchAndNonFinite) {
  const FactorizedGCParams p = one_d(0.0, 1.0, {0.5, 0.5});
  EXPECT_THROW(log_pdf(p, JointSample{Eigen::Vector2d(0, 0), {0}}), ValidationError);
  EXPECT_THROW(log_pdf(p, z1(std::nan(""), 0)), ValidationError);
  EXPECT_THROW(log_pdf(p, z1(0.0, 2)), ValidationError);
}

TEST(Params, RenormalizesSmallDriftRejectsLarge) {
  EXPECT_NO_THROW(one_d(0.0, 1.0, {0.5 + 4e-7, 0.5}));
  EXPECT_THROW(one_d(0.0, 1.0, {0.5 + 1e-4, 0.5}), ValidationError);
  EXPECT_THROW(one_d(0.0, -1.0, {0.5, 0.5}), ValidationError);
  EXPECT_THROW(one_d(0.0, 1.0, {1.1, -0.1}), ValidationError);
  const FactorizedGCParams p = one_d(0.0, 0.0, {0.5, 0.5});
  EXPECT_EQ(p.var(0), kVarianceFloor);
}

TEST(Sample, FlooredVarianceReturnsMean) {
  const FactorizedGCParams p = one_d(0.25, 0.0, {0.5, 0.5});
  Rng rng(3);
  for (int i = 0; i < 100; ++i) EXPECT_NEAR(sample(p, rng).x(0), 0.25, 1e-5);
}

TEST(Sample, OneHotAlwaysThatClass) {
  const FactorizedGCParams p = one_d(0.0, 1.0, {0.0, 0.0, 1.0});
  Rng rng(4);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(sample(p, rng).y[0], 2);
}

TEST(Sample, UniformFrequenciesWithinThreeSigma) {
  const FactorizedGCParams p = one_d(0.0, 1.0, {1.0 / 3, 1.0 / 3, 1.0 / 3});
  Rng rng(6);
  const int n = 30000;
  std::vector<int> counts(3, 0);
  for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(sample(p, rng).y[0])];
  const double sd = std::sqrt(n * (1.0 / 3) * (2.0 / 3));
  for (int c : counts) EXPECT_LE(std::abs(c - n / 3.0), 3.0 * sd);
}

TEST(Sample, UniformChiSquareAcrossSeeds) {
  const FactorizedGCParams p = one_d(0.0, 1.0, {1.0 / 3, 1.0 / 3, 1.0 / 3});
  const int seeds = 200, n = 30000;
  double chi = 0.0;
  for (int seed = 0; seed < seeds; ++seed) {
    Rng rng(static_cast<std::uint64_t>(1000 + seed));
    std::vector<double> counts(3, 0.0);
    for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(sample(p, rng).y[0])];
    for (double c : counts) chi += (c - n / 3.0) * (c - n / 3.0) / (n / 3.0);
  }
  // sum of 200 chi2(2): mean 400, sd 20
  EXPECT_LT(chi, 400.0 + 5.0 * 20.0);
  EXPECT_GT(chi, 400.0 - 5.0 * 20.0);
}

TEST(Sample, DeterministicPerSeed) {
  const FactorizedGCParams p = one_d(0.0, 2.0, {0.2, 0.3, 0.5});
  Rng a(11), b(11);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sample(p, a), sample(p, b));
}

TEST(Kl, IdentityIsZero) {
  Rng rng(6);
  for (int i = 0; i < 100; ++i) {
    const FactorizedGCParams p = oracle::random_gc_1d(4, rng);
    EXPECT_NEAR(kl_divergence(p, p), 0.0, 1e-12);
  }
}

TEST(Kl, UnitShiftedGaussian) {
  EXPECT_NEAR(kl_divergence(one_d(1.0, 1.0, {0.5, 0.5}), one_d(0.0, 1.0, {0.5, 0.5})), 0.5, 1e-15);
}

TEST(Kl, OneHotAgainstUniformIsLogTwo) {
  EXPECT_NEAR(kl_divergence(one_d(0.0, 1.0, {1.0, 0.0}), one_d(0.0, 1.0, {0.5, 0.5})), std::log(2.0), 1e-15);
  EXPECT_NEAR(std::log(2.0), 0.693147, 1e-6);
}

TEST(Kl, InfiniteWhenSupportMissing) {
  EXPECT_EQ(kl_divergence(one_d(0.0, 1.0, {0.5, 0.5}), one_d(0.0, 1.0, {1.0, 0.0})),
            std::numeric_limits<double>::infinity());
}

TEST(Kl, NonNegativeOnRandomParams) {
  Rng rng(7);
  for (int i = 0; i < 500; ++i) {
    const int k = 2 + i % 4;
    EXPECT_GE(kl_divergence(oracle::random_gc_1d(k, rng), oracle::random_gc_1d(k, rng)), 0.0);
  }
}

TEST(Kl, MatchesQuadratureDecomposition) {
  const oracle::CheckResult r = oracle::check_kl_decomposition(60, 8);
  EXPECT_TRUE(r.passed) << r.line();
}

TEST(LogPdf, IntegratesToOne) {
  const oracle::CheckResult r = oracle::check_pdf_normalization(30, 9);
  EXPECT_TRUE(r.passed) << r.line();
}

TEST(Entropy, MatchesSelfSampleLogLikelihood) {
  FactorizedGCParams p;
  p.mean = Eigen::Vector2d(0.5, -1.0);
  p.var = Eigen::Vector2d(0.3, 2.0);
  p.theta.resize(2, 3);
  p.theta << 0.2, 0.3, 0.5, 0.7, 0.2, 0.1;
  Rng rng(10);
  const int n = 100000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double lp = log_pdf(p, sample(p, rng));
    sum += lp;
    sum2 += lp * lp;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sum2 / n - mean * mean) / n);
  EXPECT_LE(std::abs(-mean - entropy(p)), 3.0 * se);
}
