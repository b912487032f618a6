#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "flpl/common/rng.h"
#include "flpl/defenses/defenses.h"

namespace flpl::defenses {
namespace {

GradientVector RandomGradient(int64_t n, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(static_cast<size_t>(n));
  for (double& x : v) x = rng.Normal();
  return GradientVector(std::move(v));
}

TEST(CompressTest, ZeroesSmallMagnitudes) {
  GradientVector g({0.5, 0.01, -0.3});
  EXPECT_EQ(Compress(g, 0.1).values, (std::vector<double>{0.5, 0.0, -0.3}));
}

TEST(CompressTest, ZeroEpsilonKeepsNonZeros) {
  GradientVector g({0.5, 0.0, -1e-300});
  EXPECT_EQ(Compress(g, 0.0).values, g.values);
}

TEST(CompressTest, BoundaryIsPruned) {
  EXPECT_EQ(Compress(GradientVector({0.1, -0.1, 0.2}), 0.1).values,
            (std::vector<double>{0.0, 0.0, 0.2}));
}

TEST(CompressTest, LargeEpsilonPrunesAll) {
  GradientVector g = RandomGradient(100, 1);
  EXPECT_EQ(PruneRatio(Compress(g, 1e9)), 1.0);
}

TEST(CompressTest, PreservesLayoutAndRejectsNegativeEpsilon) {
  ParamLayout layout;
  layout.Add("w", {2, 2});
  GradientVector g(layout, {1, 2, 3, 4});
  EXPECT_EQ(Compress(g, 2.5).layout, layout);
  EXPECT_THROW(Compress(g, -1.0), DefenseError);
}

TEST(CompressTest, PropertiesOverRandomGradients) {
  for (uint64_t seed = 0; seed < 30; ++seed) {
    GradientVector g = RandomGradient(200, seed);
    double last_ratio = 0.0;
    for (double eps : {0.0, 0.1, 0.3, 0.7, 1.2, 2.0, 5.0}) {
      GradientVector c = Compress(g, eps);
      EXPECT_EQ(Compress(c, eps).values, c.values);  // idempotent
      const double ratio = PruneRatio(c);
      EXPECT_GE(ratio, last_ratio);  // monotone in eps
      last_ratio = ratio;
      for (size_t i = 0; i < g.values.size(); ++i) {
        if (c.values[i] != 0.0) EXPECT_EQ(c.values[i], g.values[i]);
        EXPECT_LE(std::abs(c.values[i] - g.values[i]), eps);
      }
    }
  }
}

TEST(PruneRatioTest, CountsExactZeros) {
  EXPECT_DOUBLE_EQ(PruneRatio(GradientVector({0.5, 0.0, -0.3})), 1.0 / 3.0);
  EXPECT_EQ(PruneRatio(GradientVector(std::vector<double>(7, 0.0))), 1.0);
  EXPECT_THROW(PruneRatio(GradientVector(std::vector<double>{})), DefenseError);
}

TEST(PruneRatioTest, KthLargestThresholdKeepsTopK) {
  GradientVector g = RandomGradient(500, 3);
  std::vector<double> mags;
  for (double v : g.values) mags.push_back(std::abs(v));
  std::sort(mags.rbegin(), mags.rend());
  for (int k : {1, 10, 250, 499}) {
    // Threshold at the k-th largest magnitude keeps the k-1 strictly larger ones.
    const double eps = mags[k - 1];
    EXPECT_DOUBLE_EQ(PruneRatio(Compress(g, eps)), (500.0 - (k - 1)) / 500.0);
    // Just below it keeps exactly k.
    EXPECT_DOUBLE_EQ(PruneRatio(Compress(g, std::nextafter(eps, 0.0))), (500.0 - k) / 500.0);
  }
}

TEST(EpsilonForRatioTest, Endpoints) {
  GradientVector g = RandomGradient(100, 4);
  EXPECT_EQ(EpsilonForRatio(g, 0.0), 0.0);
  EXPECT_EQ(PruneRatio(Compress(g, EpsilonForRatio(g, 0.0))), 0.0);
  double max_mag = 0.0;
  for (double v : g.values) max_mag = std::max(max_mag, std::abs(v));
  EXPECT_GE(EpsilonForRatio(g, 1.0), max_mag);
  EXPECT_EQ(PruneRatio(Compress(g, EpsilonForRatio(g, 1.0))), 1.0);
  EXPECT_THROW(EpsilonForRatio(g, 1.5), DefenseError);
  EXPECT_THROW(EpsilonForRatio(g, -0.1), DefenseError);
}

TEST(EpsilonForRatioTest, AchievedRatioWithinOneStepOfTarget) {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    const int64_t n = 50 + static_cast<int64_t>(seed) * 37;
    GradientVector g = RandomGradient(n, 100 + seed);
    for (double target : {0.5, 0.83, 0.87, 0.905}) {
      const double achieved = PruneRatio(Compress(g, EpsilonForRatio(g, target)));
      // Brute force: the smallest candidate threshold reaching the target.
      double best = 1.0;
      for (double cand : g.values) {
        const double r = PruneRatio(Compress(g, std::abs(cand)));
        if (r >= target) best = std::min(best, r);
      }
      EXPECT_GE(achieved, target);
      EXPECT_LE(achieved, target + 1.0 / static_cast<double>(n));
      EXPECT_EQ(achieved, best);
    }
  }
}

TEST(EpsilonForRatioTest, TiesOvershoot) {
  GradientVector g({1.0, 1.0, 1.0, 1.0, 2.0});
  EXPECT_EQ(PruneRatio(Compress(g, EpsilonForRatio(g, 0.2))), 0.8);
}

TEST(AddNoiseTest, ZeroVarianceIsIdentity) {
  GradientVector g = RandomGradient(50, 5);
  EXPECT_EQ(AddNoise(g, 0.0, 1).values, g.values);
  EXPECT_THROW(AddNoise(g, -1.0, 1), DefenseError);
}

TEST(AddNoiseTest, SameSeedIsIdentical) {
  GradientVector g = RandomGradient(50, 5);
  EXPECT_EQ(AddNoise(g, 0.01, 9).values, AddNoise(g, 0.01, 9).values);
  EXPECT_NE(AddNoise(g, 0.01, 9).values, AddNoise(g, 0.01, 10).values);
}

TEST(AddNoiseTest, SampleVarianceMatches) {
  const int64_t n = 100000;
  GradientVector g = RandomGradient(n, 6);
  for (double variance : {0.001, 0.007, 1.0}) {
    GradientVector noised = AddNoise(g, variance, 11);
    double sum = 0.0, sq = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      const double d = noised.values[i] - g.values[i];
      sum += d;
      sq += d * d;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    EXPECT_NEAR(var, variance, 3.0 * variance * std::sqrt(2.0 / n));
  }
}

TEST(AddNoiseTest, IsUnbiasedAcrossSeeds) {
  GradientVector g({0.3, -0.2, 1.5});
  std::vector<double> mean(3, 0.0);
  const int seeds = 20000;
  for (int s = 0; s < seeds; ++s) {
    GradientVector n = AddNoise(g, 0.01, static_cast<uint64_t>(s));
    for (int i = 0; i < 3; ++i) mean[i] += n.values[i] / seeds;
  }
  // Standard error 0.1 / sqrt(20000) ~ 7e-4.
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(mean[i], g.values[i], 3e-3);
}

TEST(DefenseConfigTest, ValidatesSelectedMode) {
  DefenseConfig c;
  c.mode = DefenseMode::kCompressRatio;
  c.target_ratio = 1.2;
  EXPECT_THROW(c.Validate(), DefenseError);
  c.mode = DefenseMode::kNoise;  // target_ratio is no longer read
  c.variance = 0.001;
  EXPECT_NO_THROW(c.Validate());
  c.variance = -1.0;
  EXPECT_THROW(ApplyDefense(GradientVector({1.0}), c), DefenseError);
}

TEST(DefenseConfigTest, ApplyDispatches) {
  GradientVector g({0.5, 0.01, -0.3, 0.2});
  DefenseConfig c;
  EXPECT_EQ(ApplyDefense(g, c).values, g.values);
  c.mode = DefenseMode::kCompressEpsilon;
  c.epsilon = 0.1;
  EXPECT_EQ(ApplyDefense(g, c).values, Compress(g, 0.1).values);
  c.mode = DefenseMode::kCompressRatio;
  c.target_ratio = 0.5;
  EXPECT_EQ(PruneRatio(ApplyDefense(g, c)), 0.5);
  c.mode = DefenseMode::kNoise;
  c.variance = 0.5;
  c.seed = 3;
  EXPECT_EQ(ApplyDefense(g, c).values, AddNoise(g, 0.5, 3).values);
  EXPECT_EQ(c.Label(), "noise:0.5");
}

TEST(DefenseConfigTest, ModeNamesRoundTrip) {
  for (DefenseMode m : {DefenseMode::kNone, DefenseMode::kCompressEpsilon,
                        DefenseMode::kCompressRatio, DefenseMode::kNoise}) {
    EXPECT_EQ(ParseDefenseMode(DefenseModeName(m)), m);
  }
  EXPECT_THROW(ParseDefenseMode("both"), DefenseError);
}

}  // namespace
}  // namespace flpl::defenses
