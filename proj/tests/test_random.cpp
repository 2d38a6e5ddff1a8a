#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <vector>

#include "nvforge/random.hpp"
#include "test_support.hpp"

using namespace nvforge;
using nvforge::testing::mean;
using nvforge::testing::variance;

TEST(DeriveSeed, DependsOnEveryPathElementAndItsOrder) {
  const auto a = derive_seed(42, {1, 2, 3});
  EXPECT_EQ(a, derive_seed(42, {1, 2, 3}));
  EXPECT_NE(a, derive_seed(42, {1, 3, 2}));
  EXPECT_NE(a, derive_seed(43, {1, 2, 3}));
  EXPECT_NE(a, derive_seed(42, {1, 2}));
  EXPECT_NE(derive_seed(0, {0}), derive_seed(0, {}));
}

TEST(Rng, SameSeedSameSequence) {
  Rng a(7), b(7), c(8);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next();
    EXPECT_EQ(x, b.next());
    differs = differs || x != c.next();
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, UniformRangeAndMoments) {
  Rng rng(1);
  std::vector<double> v(200000);
  for (double& x : v) {
    x = rng.uniform();
    ASSERT_GE(x, 0.0);
    ASSERT_LT(x, 1.0);
  }
  // Standard error of the mean is sqrt(1/12/n) ~ 6.5e-4.
  EXPECT_NEAR(mean(v), 0.5, 5 * 6.5e-4);
  EXPECT_NEAR(variance(v), 1.0 / 12.0, 2e-3);
}

TEST(Rng, NormalMoments) {
  Rng rng(2);
  std::vector<double> v(200000);
  for (double& x : v) x = rng.normal(3.0, 2.0);
  EXPECT_NEAR(mean(v), 3.0, 5 * 2.0 / std::sqrt(200000.0));
  EXPECT_NEAR(variance(v), 4.0, 0.05);
}

TEST(Rng, ExponentialMean) {
  Rng rng(3);
  std::vector<double> v(200000);
  for (double& x : v) x = rng.exponential(0.25);
  EXPECT_NEAR(mean(v), 4.0, 5 * 4.0 / std::sqrt(200000.0));
}

// Pearson chi-square of Poisson draws against the pmf computed here.
static double poisson_chi2(double mu, int draws, int& dof) {
  Rng rng(static_cast<std::uint64_t>(mu * 1000));
  std::map<std::uint64_t, int> hist;
  for (int i = 0; i < draws; ++i) ++hist[rng.poisson(mu)];
  const int lo = std::max(0, static_cast<int>(mu - 4 * std::sqrt(mu)));
  const int hi = static_cast<int>(mu + 4 * std::sqrt(mu)) + 1;
  double chi2 = 0.0;
  dof = 0;
  for (int k = lo; k <= hi; ++k) {
    const double pk = std::exp(k * std::log(mu) - mu - std::lgamma(k + 1.0));
    const double e = pk * draws;
    if (e < 20.0) continue;
    const double o = hist.count(k) ? hist[k] : 0;
    chi2 += (o - e) * (o - e) / e;
    ++dof;
  }
  return chi2;
}

TEST(Rng, PoissonMatchesPmfBothBranches) {
  for (double mu : {0.7, 4.0, 29.0, 31.0, 250.0}) {
    int dof = 0;
    const double chi2 = poisson_chi2(mu, 200000, dof);
    // 99.9th percentile of chi2 is below dof + 5 sqrt(2 dof) for these dofs.
    EXPECT_LT(chi2, dof + 5.0 * std::sqrt(2.0 * dof)) << "mu = " << mu;
  }
}

TEST(Rng, PoissonZeroMean) {
  Rng rng(4);
  EXPECT_EQ(rng.poisson(0.0), 0u);
  EXPECT_EQ(rng.poisson(-1.0), 0u);
}

TEST(Rng, BinomialMoments) {
  Rng rng(5);
  std::vector<double> v(100000);
  for (double& x : v) x = static_cast<double>(rng.binomial(10, 0.3));
  EXPECT_NEAR(mean(v), 3.0, 0.02);
  EXPECT_NEAR(variance(v), 2.1, 0.05);
}

TEST(Rng, CategoricalFrequencies) {
  Rng rng(6);
  const std::vector<double> cumulative{0.1, 0.1, 0.6, 1.0};  // weights .1 0 .5 .4
  std::vector<int> n(4, 0);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) ++n[rng.categorical(cumulative)];
  EXPECT_EQ(n[1], 0);
  EXPECT_NEAR(n[0] / double(draws), 0.1, 0.005);
  EXPECT_NEAR(n[2] / double(draws), 0.5, 0.007);
  EXPECT_NEAR(n[3] / double(draws), 0.4, 0.007);
}
