#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "nvforge/models.hpp"
#include "nvforge/nlls.hpp"
#include "nvforge/random.hpp"

using namespace nvforge;

namespace {

// y = a + b, fully degenerate.
struct SumCurve {
  using argument_type = double;
  static constexpr int arity = 2;
  double value(double, std::span<const double> p) const { return p[0] + p[1]; }
  void gradient(double, std::span<const double>, std::span<double> g) const { g[0] = g[1] = 1.0; }
};

// y = a exp(-x / t)
struct DecayCurve {
  using argument_type = double;
  static constexpr int arity = 2;
  double value(double x, std::span<const double> p) const { return p[0] * std::exp(-x / p[1]); }
  void gradient(double x, std::span<const double> p, std::span<double> g) const {
    const double e = std::exp(-x / p[1]);
    g[0] = e;
    g[1] = p[0] * e * x / (p[1] * p[1]);
  }
};

}  // namespace

TEST(Nlls, WeightedLineMatchesNormalEquations) {
  Rng rng(1);
  std::vector<double> x, y, s;
  for (int i = 0; i < 40; ++i) {
    x.push_back(0.25 * i);
    s.push_back(0.1 + 0.02 * i);
    y.push_back(1.5 - 0.7 * x.back() + s.back() * rng.normal());
  }
  // Closed form: solve (X^T W X) beta = X^T W y.
  double s0 = 0, s1 = 0, s2 = 0, t0 = 0, t1 = 0;
  for (int i = 0; i < 40; ++i) {
    const double w = 1.0 / (s[i] * s[i]);
    s0 += w;
    s1 += w * x[i];
    s2 += w * x[i] * x[i];
    t0 += w * y[i];
    t1 += w * x[i] * y[i];
  }
  const double det = s0 * s2 - s1 * s1;
  const double a = (s2 * t0 - s1 * t1) / det, b = (s0 * t1 - s1 * t0) / det;
  const std::vector<double> init{0.0, 0.0};
  const auto r = nlls_fit(LinearCurve{}, std::span<const double>(x), y, s, init, {}, {"a", "b"});
  ASSERT_TRUE(r.converged());
  EXPECT_NEAR(r.value("a"), a, 1e-8);
  EXPECT_NEAR(r.value("b"), b, 1e-8);
  EXPECT_NEAR(r.covariance(0, 0), s2 / det, 1e-8 * s2 / det);
  EXPECT_NEAR(r.covariance(1, 1), s0 / det, 1e-8 * s0 / det);
  EXPECT_NEAR(r.covariance(0, 1), -s1 / det, 1e-8 * std::fabs(s1 / det));
  EXPECT_EQ(r.dof, 38);
  double chi2 = 0.0;
  for (int i = 0; i < 40; ++i) chi2 += std::pow((y[i] - a - b * x[i]) / s[i], 2);
  EXPECT_NEAR(r.chi2, chi2, 1e-8 * chi2);
}

TEST(Nlls, RecoversNoiseFreeDecay) {
  std::vector<double> x, y, s;
  for (int i = 0; i < 50; ++i) {
    x.push_back(0.5 * i);
    y.push_back(DecayCurve{}.value(x.back(), std::vector<double>{100.0, 7.3}));
    s.push_back(1.0);
  }
  const std::vector<double> init{10.0, 1.0};
  const Bound b[] = {Bound::at_least(0.0), Bound::at_least(0.01)};
  const auto r = nlls_fit(DecayCurve{}, std::span<const double>(x), y, s, init, b);
  ASSERT_TRUE(r.converged());
  EXPECT_NEAR(r.params[0], 100.0, 1e-6);
  EXPECT_NEAR(r.params[1], 7.3, 1e-8);
}

TEST(Nlls, BoundIsRespectedAndActive) {
  // Unconstrained optimum at b = -0.7; the bound holds b at 0.
  std::vector<double> x, y, s;
  for (int i = 0; i < 20; ++i) {
    x.push_back(i);
    y.push_back(3.0 - 0.7 * i);
    s.push_back(1.0);
  }
  const std::vector<double> init{1.0, 1.0};
  const Bound b[] = {Bound::none(), Bound::at_least(0.0)};
  const auto r = nlls_fit(LinearCurve{}, std::span<const double>(x), y, s, init, b);
  EXPECT_TRUE(r.converged());
  EXPECT_GE(r.params[1], 0.0);
  EXPECT_NEAR(r.params[1], 0.0, 1e-6);
  // With b = 0 the best a is the mean of y.
  EXPECT_NEAR(r.params[0], 3.0 - 0.7 * 9.5, 1e-4);
}

TEST(Nlls, TwoSidedBound) {
  std::vector<double> x{0, 1, 2, 3}, y{5, 5, 5, 5}, s{1, 1, 1, 1};
  const std::vector<double> init{0.5, 0.0};
  const Bound b[] = {Bound::between(0.0, 1.0), Bound::between(-1.0, 1.0)};
  const auto r = nlls_fit(LinearCurve{}, std::span<const double>(x), y, s, init, b);
  EXPECT_LE(r.params[0], 1.0);
  EXPECT_LE(r.params[1], 1.0);
  EXPECT_GE(r.params[1], -1.0);
}

TEST(Nlls, SingularJacobianFlagged) {
  std::vector<double> x{0, 1, 2}, y{1, 2, 3}, s{1, 1, 1};
  const std::vector<double> init{0.0, 0.0};
  const auto r = nlls_fit(SumCurve{}, std::span<const double>(x), y, s, init, {});
  EXPECT_EQ(r.status, FitStatus::singular_jacobian);
  EXPECT_TRUE(std::isinf(r.std_errors[0]));
  EXPECT_TRUE(std::isinf(r.std_errors[1]));
  EXPECT_NEAR(r.params[0] + r.params[1], 2.0, 1e-8);
}

TEST(Nlls, RejectsMalformedInput) {
  std::vector<double> x{0, 1, 2}, y{1, 2, 3}, s{1, 1, 1}, bad_s{1, 0, 1};
  const std::vector<double> init{0.0, 0.0}, short_init{0.0};
  const std::span<const double> xs(x);
  EXPECT_THROW(nlls_fit(LinearCurve{}, xs, y, bad_s, init, {}), InvalidArgument);
  EXPECT_THROW(nlls_fit(LinearCurve{}, xs, y, s, short_init, {}), InvalidArgument);
  const Bound b[] = {Bound::at_least(1.0), Bound::none()};
  EXPECT_THROW(nlls_fit(LinearCurve{}, xs, y, s, init, b), InvalidArgument);
  std::vector<double> y_short{1, 2};
  EXPECT_THROW(nlls_fit(LinearCurve{}, xs, y_short, s, init, {}), InvalidArgument);
}

TEST(Nlls, ScaledCovarianceUsesReducedChi2) {
  Rng rng(3);
  std::vector<double> x, y, s(30, 1.0);
  for (int i = 0; i < 30; ++i) {
    x.push_back(i);
    y.push_back(2.0 + 0.5 * i + 3.0 * rng.normal());
  }
  const std::vector<double> init{0.0, 0.0};
  FitOptions opt;
  const auto plain = nlls_fit(LinearCurve{}, std::span<const double>(x), y, s, init, {}, {}, opt);
  opt.scale_covariance = true;
  const auto scaled = nlls_fit(LinearCurve{}, std::span<const double>(x), y, s, init, {}, {}, opt);
  EXPECT_NEAR(scaled.covariance(1, 1), plain.covariance(1, 1) * plain.chi2_reduced, 1e-12);
}

TEST(Nlls, FitStatusNames) {
  EXPECT_EQ(to_string(FitStatus::converged), "converged");
  EXPECT_EQ(to_string(FitStatus::singular_jacobian), "singular_jacobian");
  EXPECT_EQ(to_string(FitStatus::no_signal), "no_signal");
}
