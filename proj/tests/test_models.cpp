#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "nvforge/models.hpp"
#include "test_support.hpp"

using namespace nvforge;
using nvforge::testing::gradient_mismatch;

constexpr double kGradTol = 1e-6;

TEST(Gradients, Linear) {
  for (double x : {-3.0, 0.0, 2.5}) EXPECT_LT(gradient_mismatch(LinearCurve{}, x, {1.2, -0.4}), kGradTol);
}

TEST(Gradients, G2Forms) {
  const std::vector<double> p{0.15, 1.6, 12.0, 180.0};
  for (double t : {-400.0, -20.0, -1.0, 0.0, 3.0, 40.0, 250.0}) {
    EXPECT_LT(gradient_mismatch(G2PrintedCurve{}, t, p), kGradTol) << t;
    EXPECT_LT(gradient_mismatch(G2RescaledCurve{}, t, p), kGradTol) << t;
  }
}

TEST(Gradients, G2BinAveraged) {
  const std::vector<double> p{0.15, 1.6, 12.0, 180.0};
  for (bool rescaled : {true, false}) {
    G2BinAveragedCurve c;
    c.rescaled = rescaled;
    for (DelayBin b : {DelayBin{-0.5, 0.5}, DelayBin{-30.5, -29.5}, DelayBin{2.0, 6.0}, DelayBin{-2.0, 0.0}})
      EXPECT_LT(gradient_mismatch(c, b, p), kGradTol) << b.lo;
  }
}

TEST(Gradients, Displacement) {
  for (double r : {5.0, 100.0, 196.0, 500.0})
    EXPECT_LT(gradient_mismatch(DisplacementCurve{}, r, {3.0, 196.0}), kGradTol);
}

TEST(Gradients, Lorentzian) {
  for (double f : {-60.0, -6.0, 0.3, 13.0, 90.0})
    EXPECT_LT(gradient_mismatch(LorentzianCurve{}, f, {0.3, 13.5, 200.0, 2.0}), kGradTol);
}

TEST(Gradients, Echo) {
  for (double tau : {2.0, 30.0, 48.0, 150.0})
    EXPECT_LT(gradient_mismatch(EchoCurve{}, tau, {0.5, 0.5, 48.0, 2.0}), kGradTol);
}

TEST(Gradients, Gaussian2D) {
  for (Vec2 x : {Vec2{1200, 1200}, Vec2{1000, 1400}, Vec2{300, 2000}})
    EXPECT_LT(gradient_mismatch(Gaussian2DCurve{}, x, {10.0, 1190.0, 1210.0, 212.0, 10.0}), kGradTol);
}

TEST(Gradients, TrplModel) {
  const auto irf = gaussian_irf(0.3, 0.025, 600, 2.0);
  const TrplModel m(irf, 600);
  Eigen::VectorXd p(2);
  p << 12.8, 1e4;
  Eigen::VectorXd f, up, down;
  Eigen::MatrixXd jac;
  m.evaluate(p, f, &jac);
  for (int k = 0; k < 2; ++k) {
    const double h = 1e-6 * p[k];
    Eigen::VectorXd q = p;
    q[k] += h;
    m.evaluate(q, up, nullptr);
    q[k] -= 2.0 * h;
    m.evaluate(q, down, nullptr);
    const Eigen::VectorXd num = (up - down) / (2.0 * h);
    EXPECT_LT((num - jac.col(k)).cwiseAbs().maxCoeff() / num.cwiseAbs().maxCoeff(), kGradTol) << k;
  }
}

TEST(Models, G2PrintedAndRescaledAgreeAtZeroFloor) {
  const std::vector<double> p{0.0, 1.6, 12.0, 180.0};
  for (double t : {0.0, 5.0, 100.0}) EXPECT_DOUBLE_EQ(G2PrintedCurve{}.value(t, p), G2RescaledCurve{}.value(t, p));
  const std::vector<double> q{0.3, 1.6, 12.0, 180.0};
  EXPECT_NEAR(G2PrintedCurve{}.value(0.0, q), 0.3, 1e-15);
  EXPECT_NEAR(G2PrintedCurve{}.value(1e6, q), 1.3, 1e-12);
  EXPECT_NEAR(G2RescaledCurve{}.value(0.0, q), 0.3, 1e-15);
  EXPECT_NEAR(G2RescaledCurve{}.value(1e6, q), 1.0, 1e-12);
}

TEST(Models, BinAverageEqualsQuadratureOfPointwiseCurve) {
  const std::vector<double> p{0.2, 1.4, 10.0, 90.0};
  for (DelayBin b : {DelayBin{-1.0, 1.0}, DelayBin{-3.0, -1.0}, DelayBin{0.0, 8.0}, DelayBin{-0.2, 5.0}}) {
    // Simpson on each side of the cusp separately.
    auto simpson = [&](double lo, double hi) {
      if (hi <= lo) return 0.0;
      const int n = 2000;
      const double h = (hi - lo) / n;
      double s = 0.0;
      for (int i = 0; i <= n; ++i) {
        const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        s += w * G2RescaledCurve{}.value(lo + i * h, p);
      }
      return s * h / 3.0;
    };
    const double integral = b.lo < 0.0 && b.hi > 0.0 ? simpson(b.lo, 0.0) + simpson(0.0, b.hi) : simpson(b.lo, b.hi);
    EXPECT_NEAR(G2BinAveragedCurve{}.value(b, p), integral / (b.hi - b.lo), 1e-10) << b.lo;
  }
}

TEST(Models, LorentzianHalfMaximumAtHalfWidth) {
  const std::vector<double> p{4.0, 13.5, 200.0, 2.0};
  EXPECT_DOUBLE_EQ(LorentzianCurve{}.value(4.0, p), 202.0);
  EXPECT_NEAR(LorentzianCurve{}.value(4.0 + 6.75, p), 102.0, 1e-12);
  EXPECT_NEAR(LorentzianCurve{}.value(4.0 - 6.75, p), 102.0, 1e-12);
}

TEST(Models, DisplacementPeakAtR0OverSqrt2) {
  const std::vector<double> p{1.0, 196.0};
  const double peak = 196.0 / std::sqrt(2.0);
  EXPECT_GT(DisplacementCurve{}.value(peak, p), DisplacementCurve{}.value(peak * 0.99, p));
  EXPECT_GT(DisplacementCurve{}.value(peak, p), DisplacementCurve{}.value(peak * 1.01, p));
}

TEST(Models, TrplKernelIsAProbabilityAndMatchesDirectForm) {
  for (double x : {1e-4, 0.002, 0.1, 1.5}) {
    double sum = 0.0;
    for (int m = 0; m < 200000; ++m) {
      double k = 0.0, dk = 0.0;
      TrplModel::kernel(m, x, k, dk);
      sum += k;
      if (m > 0 && m < 5 && x > 1e-3) {
        const double direct = std::exp(-m * x) * (std::exp(x) + std::exp(-x) - 2.0) / x;
        EXPECT_NEAR(k, direct, 1e-12);
      }
      if (k < 1e-18 && m > 0) break;
    }
    // x = 1e-4 needs more than 200000 bins to exhaust the tail.
    if (x >= 0.002) EXPECT_NEAR(sum, 1.0, 1e-9) << x;
  }
}

TEST(Models, TrplModelWithDeltaIrfIsKernel) {
  const TrplModel m(delta_irf(0.5, 100, 10), 100);
  Eigen::VectorXd p(2), f;
  p << 12.8, 1000.0;
  m.evaluate(p, f, nullptr);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(f[i], 0.0);
  double k = 0.0, dk = 0.0;
  TrplModel::kernel(3, 0.5 / 12.8, k, dk);
  EXPECT_NEAR(f[13], 1000.0 * k, 1e-9);
}
