#include "gcdiff/toy_scenes.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

using namespace gcdiff;

TEST(Scenes, NoiselessPixelsSitOnPalette) {
  SceneConfig cfg;
  cfg.sigma_data = 0.0;
  const auto lv = cfg.levels();
  for (const SceneSample& s : generate(cfg, 200)) {
    for (std::size_t p = 0; p < s.z.y.size(); ++p) {
      EXPECT_EQ(s.z.x(static_cast<Eigen::Index>(p)), lv[static_cast<std::size_t>(s.z.y[p])]);
    }
  }
}

TEST(Scenes, SameSeedSameData) {
  SceneConfig cfg;
  cfg.seed = 77;
  const auto a = generate(cfg, 50);
  const auto b = generate(cfg, 50);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].z, b[i].z);
    EXPECT_EQ(a[i].cond, b[i].cond);
  }
  cfg.seed = 78;
  EXPECT_FALSE(generate(cfg, 1)[0].z == a[0].z);
}

TEST(Scenes, SceneTypeFrequencyWithinBinomialBound) {
  SceneConfig cfg;
  cfg.seed = 5;
  const int n = 10000;
  int blobs = 0;
  for (const SceneSample& s : generate(cfg, n)) blobs += s.type == SceneType::horizon_blob;
  EXPECT_LE(std::abs(blobs - 0.5 * n), 3.0 * std::sqrt(n * 0.25));
}

TEST(Scenes, ConditionMatchesLayoutAndRangesHold) {
  SceneConfig cfg;
  cfg.channels = 2;
  for (const SceneSample& s : generate(cfg, 500)) {
    EXPECT_EQ(s.cond, condition_of(s.z.y));
    EXPECT_EQ(static_cast<int>(classes_in_condition(s.cond, 4).size()), s.type == SceneType::horizon ? 2 : 3);
    EXPECT_EQ(s.z.x.size(), 128);
    EXPECT_LE(s.z.x.maxCoeff(), 1.0);
    EXPECT_GE(s.z.x.minCoeff(), -1.0);
  }
}

TEST(Scenes, ValidationRejectsBadConfigs) {
  SceneConfig cfg;
  cfg.sigma_data = 0.2;  // levels 0.5 apart need sigma <= 0.125
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = {};
  cfg.n_classes = 1;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = {};
  cfg.palette = {0.0, 0.5, 1.0};
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = {};
  cfg.palette = {0.0, 0.5, 1.0, 1.5};
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = {};
  cfg.n_classes = 2;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg.p_blob = 0.0;
  EXPECT_NO_THROW(cfg.validate());
}

TEST(Segment, NoiselessImageRecoversLayout) {
  SceneConfig cfg;
  cfg.sigma_data = 0.0;
  cfg.channels = 3;
  for (const SceneSample& s : generate(cfg, 200)) EXPECT_EQ(oracle_segment(s.z.x, cfg), s.z.y);
}

TEST(Segment, MidpointTiesGoToLowerClass) {
  SceneConfig cfg;
  cfg.palette = {-0.5, 0.0, 0.5, 1.0};
  Eigen::VectorXd x(3);
  x << -0.25, 0.25, 0.75;
  EXPECT_EQ(oracle_segment(x, cfg), (std::vector<int>{0, 1, 2}));
}

// Levels 4 sigma apart put each decision boundary 2 sigma from its level, so
// every side with a neighbour errs at tail(2). Interior classes have two such
// sides, so the pooled rate is not bounded by tail(2) alone.
TEST(Segment, ErrorRateAtSeparationBound) {
  SceneConfig cfg;
  cfg.sigma_data = 0.125;  // exactly a quarter of the 0.5 level spacing
  cfg.seed = 6;
  const double tail = 0.5 * std::erfc(2.0 / std::sqrt(2.0));
  const int k = cfg.n_classes;
  std::vector<double> n(static_cast<std::size_t>(k)), up(n), down(n);
  for (const SceneSample& s : generate(cfg, 2000)) {
    const std::vector<int> seg = oracle_segment(s.z.x, cfg);
    for (std::size_t p = 0; p < seg.size(); ++p) {
      const auto c = static_cast<std::size_t>(s.z.y[p]);
      n[c] += 1;
      up[c] += seg[p] > s.z.y[p];
      down[c] += seg[p] < s.z.y[p];
    }
  }
  double wrong = 0.0, expected = 0.0, var = 0.0, total = 0.0;
  for (int c = 0; c < k; ++c) {
    const auto i = static_cast<std::size_t>(c);
    if (n[i] == 0) continue;
    const double slack = 3.0 * std::sqrt(tail * (1.0 - tail) / n[i]);
    EXPECT_LE(up[i] / n[i], (c + 1 < k ? tail : 0.0) + slack) << "class " << c;
    EXPECT_LE(down[i] / n[i], (c > 0 ? tail : 0.0) + slack) << "class " << c;
    const double pc = tail * ((c > 0) + (c + 1 < k));
    wrong += up[i] + down[i];
    expected += n[i] * pc;
    var += n[i] * pc * (1.0 - pc);
    total += n[i];
  }
  EXPECT_NEAR(wrong, expected, 3.0 * std::sqrt(var));
  EXPECT_LE(expected / total, 2.0 * tail);
}

TEST(Grammar, EnumerationIsNormalized) {
  for (double p : {0.0, 0.3, 0.5, 1.0}) {
    SceneConfig cfg;
    cfg.p_blob = p;
    double total = 0.0;
    for (const EnumeratedLayout& e : enumerate_layouts(cfg)) total += e.probability;
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Grammar, ClassProportionsMatchExpectation) {
  SceneConfig cfg;
  cfg.seed = 8;
  std::vector<double> expected(4, 0.0);
  for (const EnumeratedLayout& e : enumerate_layouts(cfg)) {
    for (int y : e.layout) expected[static_cast<std::size_t>(y)] += e.probability / 64.0;
  }
  const int n = 20000;
  std::vector<std::vector<double>> share(4);
  for (const SceneSample& s : generate(cfg, n)) {
    std::vector<double> c(4, 0.0);
    for (int y : s.z.y) c[static_cast<std::size_t>(y)] += 1.0 / 64.0;
    for (int k = 0; k < 4; ++k) share[static_cast<std::size_t>(k)].push_back(c[static_cast<std::size_t>(k)]);
  }
  for (int k = 0; k < 4; ++k) {
    const auto& v = share[static_cast<std::size_t>(k)];
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= n - 1;
    EXPECT_LE(std::abs(mean - expected[static_cast<std::size_t>(k)]), 3.0 * std::sqrt(var / n)) << "class " << k;
  }
}

TEST(Grammar, SummaryDistributionIsNormalized) {
  SceneConfig cfg;
  double total = 0.0;
  for (const auto& [k, p] : summary_distribution(cfg)) total += p;
  EXPECT_NEAR(total, 1.0, 1e-12);
}
