#include <gtest/gtest.h>

#include <cmath>

#include "nvforge/artifacts.hpp"
#include "nvforge/calibration.hpp"
#include "nvforge/campaign.hpp"

using namespace nvforge;

static RunConfig small_config(std::uint64_t seed) {
  RunConfig c;
  c.master_seed = seed;
  c.grid.rows = 4;
  c.grid.cols = 5;
  c.grid.energies_nj = {40.0, 30.0, 25.7, 16.0};
  c.hbt.duration_s = 0.02;
  return c;
}

static std::string dump(const GridReport& r) { return report_to_json(r, "fixed").dump(); }

static std::string dump_site(const SiteRecord& s) {
  GridReport r;
  r.sites = {s};
  return report_to_json(r, "fixed")["sites"].dump();
}

TEST(Campaign, DeterministicGivenSeed) {
  const auto c = small_config(17);
  EXPECT_EQ(dump(run_campaign(c)), dump(run_campaign(c)));
  EXPECT_NE(dump(run_campaign(c)), dump(run_campaign(small_config(18))));
}

TEST(Campaign, SiteOrderDoesNotMatter) {
  const auto c = small_config(5);
  const auto ref = dump(run_campaign(c));
  for (std::uint64_t s : {1u, 2u, 3u}) EXPECT_EQ(dump(run_campaign(c, CampaignOptions{s})), ref) << s;
}

TEST(Campaign, SitesMatchTheirOwnSimulation) {
  const auto c = small_config(9);
  const auto r = run_campaign(c);
  for (const auto& s : r.sites) EXPECT_EQ(dump_site(s), dump_site(run_site(c, s.site)));
}

TEST(Campaign, ZeroEnergyGridIsEmpty) {
  auto c = small_config(3);
  c.grid.energies_nj.assign(4, 0.0);
  const auto r = run_campaign(c);
  for (const auto& s : r.sites) {
    EXPECT_TRUE(s.empty());
    EXPECT_EQ(s.damage, DamageState::none);
    EXPECT_FALSE(s.hbt.has_value());
  }
  for (const auto& row : r.rows) {
    EXPECT_EQ(row.empty, c.grid.cols);
    EXPECT_EQ(row.total, 0);
  }
  EXPECT_FALSE(r.displacement.has_value());
  EXPECT_FALSE(r.displacement_note.empty());
}

TEST(Campaign, RowBookkeeping) {
  const auto c = small_config(21);
  const auto r = run_campaign(c);
  ASSERT_EQ(r.rows.size(), 4u);
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    const auto& row = r.rows[i];
    EXPECT_EQ(row.sites, c.grid.cols);
    EXPECT_EQ(row.empty + row.singles + row.doubles + row.pairs + row.triples + row.indeterminate, row.sites);
    EXPECT_DOUBLE_EQ(row.pulse_energy_nj, c.grid.energies_nj[i]);
  }
  // Above the graphitization energy every site is graphitized; at threshold none is damaged.
  EXPECT_EQ(r.graphitized_per_row[0], c.grid.cols);
  EXPECT_EQ(r.rows[3].empty, c.grid.cols);
  for (const auto& s : r.sites) {
    if (s.damage == DamageState::graphitized) {
      EXPECT_TRUE(s.empty());
    }
    EXPECT_EQ(s.hbt.has_value(), !s.empty());
    EXPECT_LE(static_cast<int>(s.nvs.size()), s.vacancy_count);
  }
}

TEST(Campaign, StandardGridIsSane) {
  RunConfig c;
  c.master_seed = 20240517;
  const auto r = run_campaign(c);
  ASSERT_EQ(r.sites.size(), 500u);
  int singles = 0, nonempty = 0;
  for (const auto& row : r.rows) singles += row.singles;
  for (const auto& s : r.sites) nonempty += !s.empty();
  EXPECT_EQ(static_cast<int>(single_site_displacements(r).size()), singles);
  EXPECT_GT(singles, 50);
  EXPECT_GT(nonempty, singles);
  // HBT classification against the true NV count. Three emitters give
  // g2(0) = 2/3, only just above the 0.65 threshold, so they are not checked.
  int ones = 0, ones_ok = 0, twos = 0, twos_ok = 0;
  for (const auto& s : r.sites) {
    if (!s.hbt) continue;
    if (s.nvs.size() == 1) ++ones, ones_ok += s.hbt->count == EmitterCount::one;
    if (s.nvs.size() == 2) ++twos, twos_ok += s.hbt->count == EmitterCount::two;
  }
  EXPECT_GE(ones_ok, 0.95 * ones);
  EXPECT_GE(twos_ok, 0.9 * twos);
  ASSERT_TRUE(r.displacement.has_value()) << r.displacement_note;
  EXPECT_NEAR(r.displacement->r0_nm, expected_displacement_r0_nm(c), 60.0);
}

TEST(Campaign, ExpectedDisplacementAddsSpotInQuadrature) {
  RunConfig c;
  EXPECT_NEAR(expected_displacement_r0_nm(c), 2.0 * std::sqrt(98.0 * 98.0 + 0.5 * std::pow(350.0 / 2.3548200450309493, 2)),
              1e-6);
  c.yield.focal_fwhm_xy_nm = 0.0;
  EXPECT_NEAR(expected_displacement_r0_nm(c), 196.0, 1e-9);
}

TEST(Calibration, ShippedPoissonDefaultsAreTheFit) {
  const YieldModelParams fitted = calibrate_yield(poisson_yield_targets(), YieldModelParams{}, AnnealConfig{});
  EXPECT_NEAR(fitted.gamma, YieldModelParams{}.gamma, 1e-6);
  EXPECT_NEAR(fitted.scale, YieldModelParams{}.scale, 1e-6);
  // And from a distant start.
  YieldModelParams start;
  start.gamma = 3.0;
  start.scale = 0.5;
  const auto again = calibrate_yield(poisson_yield_targets(), start, AnnealConfig{});
  EXPECT_NEAR(again.gamma, fitted.gamma, 1e-6);
}

TEST(Calibration, ShippedBinomialDefaultsAreTheFit) {
  const auto shipped = two_trap_yield_params();
  auto start = shipped;
  start.gamma = 1.0;
  start.scale = 1.0;
  const auto fitted = calibrate_yield(binomial_yield_targets(), start, AnnealConfig{});
  EXPECT_NEAR(fitted.gamma, shipped.gamma, 1e-6);
  EXPECT_NEAR(fitted.scale, shipped.scale, 1e-6);
}

TEST(Calibration, RejectsUnusableTargets) {
  const std::vector<YieldTarget> one{{25.0, 1.0}};
  EXPECT_THROW(calibrate_yield(one, YieldModelParams{}, AnnealConfig{}), InvalidArgument);
  const std::vector<YieldTarget> below{{10.0, 1.0}, {25.0, 1.0}};
  EXPECT_THROW(calibrate_yield(below, YieldModelParams{}, AnnealConfig{}), InvalidArgument);
}
