#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "nvforge/anneal.hpp"
#include "nvforge/fabrication.hpp"
#include "test_support.hpp"

using namespace nvforge;

TEST(Arrhenius, ActivationEnergyOfReportedDiffusivity) {
  // -kT ln(D / D0) computed here from the definitions.
  const double kt = 8.617333262e-5 * 1273.15;
  const double expected = -kt * std::log(3.7e-14 / 3.6e-6);
  EXPECT_NEAR(activation_energy_ev(3.7e-14, 3.6e-6, 1273.15), expected, 1e-12);
  EXPECT_NEAR(activation_energy_ev(3.7e-14, 3.6e-6, 1273.15), 2.0, 0.05);
}

TEST(Arrhenius, RoundTrip) {
  for (double ea : {0.5, 1.2, 2.0, 3.1}) {
    const double d = diffusivity_from_activation(ea, 3.6e-6, 1273.15);
    EXPECT_NEAR(activation_energy_ev(d, 3.6e-6, 1273.15), ea, 1e-12);
  }
  const auto r = arrhenius_from_activation(2.0, 3.6e-6, 1273.15, 3600.0);
  const auto back = arrhenius_from_diffusivity(r.diffusivity_cm2_s, 3.6e-6, 1273.15, 3600.0);
  EXPECT_NEAR(back.activation_energy_ev, 2.0, 1e-12);
  EXPECT_NEAR(back.diffusion_length_nm, r.diffusion_length_nm, 1e-9);
}

TEST(Arrhenius, RejectsNonPositiveInputs) {
  EXPECT_THROW(activation_energy_ev(0.0, 1.0, 300.0), InvalidArgument);
  EXPECT_THROW(activation_energy_ev(1.0, 1.0, 0.0), InvalidArgument);
  EXPECT_THROW(diffusivity_from_length(98.0, 0.0), InvalidArgument);
}

TEST(DiffusionLength, UnitsAndInverse) {
  // 1e-14 cm^2/s for 1e4 s: Dt = 1e-10 cm^2 = 1e4 nm^2 -> 100 nm.
  EXPECT_NEAR(diffusion_length_nm(1e-14, 1e4), 100.0, 1e-9);
  EXPECT_NEAR(diffusion_length_nm(diffusivity_from_length(98.0, 10800.0), 10800.0), 98.0, 1e-9);
}

TEST(DiffusivityConventions, ReportedValuesDisagreeByFactorFour) {
  const double fit = reference_diffusivity(DiffusivityConvention::from_fit_length);
  const double rep = reference_diffusivity(DiffusivityConvention::as_reported);
  EXPECT_NEAR(fit, 98.0 * 98.0 * 1e-14 / 10800.0, 1e-20);
  EXPECT_NEAR(rep / fit, 4.16, 0.05);
}

TEST(AnnealConfig, DefaultReproducesFitLength) {
  const AnnealConfig a;
  a.validate();
  EXPECT_NEAR(std::sqrt(a.dt_nm2()), 98.0, 1e-6);
  EXPECT_NEAR(a.temperature_k, 1273.15, 1e-12);
  EXPECT_DOUBLE_EQ(a.nv_probability(), 0.5);
}

TEST(RadialDensity, NormalisedByQuadrature) {
  for (double dt : {9604.0, 100.0, 1e5}) {
    // Simpson on [0, 12 sqrt(Dt)], beyond which the tail is < e^-36.
    const int n = 20000;
    const double hi = 12.0 * std::sqrt(dt), h = hi / n;
    double s = 0.0;
    for (int i = 0; i <= n; ++i) {
      const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
      s += w * radial_density(i * h, dt);
    }
    EXPECT_NEAR(s * h / 3.0, 1.0, 1e-6) << dt;
  }
}

TEST(RadialDensity, ModeAtSqrtTwoDt) {
  const double dt = 9604.0;
  const double mode = std::sqrt(2.0 * dt);
  EXPECT_GT(radial_density(mode, dt), radial_density(mode * 0.99, dt));
  EXPECT_GT(radial_density(mode, dt), radial_density(mode * 1.01, dt));
}

TEST(SampleDisplacements, PlanarRadiusFollowsRadialDensity) {
  const double dt = 9604.0;
  const auto d = sample_displacements(100000, dt, 17);
  // E[r^2] in the plane = 4 Dt; E[z^2] = 2 Dt.
  double r2 = 0.0, z2 = 0.0;
  for (const auto& v : d) {
    r2 += v.x * v.x + v.y * v.y;
    z2 += v.z * v.z;
  }
  EXPECT_NEAR(r2 / d.size(), 4.0 * dt, 0.02 * 4.0 * dt);
  EXPECT_NEAR(z2 / d.size(), 2.0 * dt, 0.02 * 2.0 * dt);
  // Fraction inside r0 = 2 sqrt(Dt): 1 - e^-1.
  int inside = 0;
  for (const auto& v : d) inside += v.xy().norm() < 2.0 * std::sqrt(dt);
  EXPECT_NEAR(inside / 100000.0, 1.0 - std::exp(-1.0), 0.005);
}

TEST(SampleDisplacements, ZeroDtIsNoMotion) {
  for (const auto& v : sample_displacements(10, 0.0, 1)) EXPECT_EQ(v, Vec3{});
}

TEST(AnnealCloud, NvCountNeverExceedsVacancies) {
  const YieldModelParams p;
  const AnnealConfig a;
  for (std::uint64_t s = 0; s < 500; ++s)
    for (double e : {18.7, 25.7, 32.6, 36.4, 49.0}) {
      const auto cloud = simulate_site(e, p, s);
      const auto out = anneal_cloud(cloud, a, derive_seed(s, {2}));
      EXPECT_LE(out.nvs.size(), cloud.positions_nm.size());
      EXPECT_EQ(out.vacancy_count, static_cast<int>(cloud.positions_nm.size()));
      if (cloud.damage == DamageState::graphitized) {
        EXPECT_TRUE(out.graphitized);
        EXPECT_TRUE(out.nvs.empty());
      }
    }
}

TEST(AnnealCloud, ConversionRateAndDeterminism) {
  const YieldModelParams p;
  AnnealConfig a;
  a.survival_probability = 0.6;
  a.conversion_probability = 0.5;
  std::size_t vac = 0, nv = 0;
  for (std::uint64_t s = 0; s < 3000; ++s) {
    const auto cloud = simulate_site(30.2, p, s);
    const auto out = anneal_cloud(cloud, a, s);
    EXPECT_EQ(out, anneal_cloud(cloud, a, s));
    vac += cloud.positions_nm.size();
    nv += out.nvs.size();
  }
  const double q = static_cast<double>(nv) / vac;
  EXPECT_NEAR(q, 0.3, 5.0 * std::sqrt(0.3 * 0.7 / vac));
}

TEST(AnnealCloud, ZeroProbabilitiesGiveNoNv) {
  AnnealConfig a;
  a.conversion_probability = 0.0;
  const auto cloud = simulate_site(30.2, {}, 1);
  EXPECT_TRUE(anneal_cloud(cloud, a, 1).nvs.empty());
}

TEST(AnnealConfig, Validation) {
  AnnealConfig a;
  a.survival_probability = 1.5;
  EXPECT_THROW(a.validate(), InvalidArgument);
  a = {};
  a.temperature_k = 0.0;
  EXPECT_THROW(a.validate(), InvalidArgument);
}
