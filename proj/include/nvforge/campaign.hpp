#pragma once

// End-to-end fabrication campaign: write grid -> anneal -> per-site HBT ->
// g2 classification -> row statistics -> displacement fit.
//
// Every random stream is derived from (master seed, stage, row, col, ...),
// so the result does not depend on the order sites are processed in.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "nvforge/analysis.hpp"
#include "nvforge/anneal.hpp"
#include "nvforge/config.hpp"
#include "nvforge/correlation.hpp"
#include "nvforge/fabrication.hpp"
#include "nvforge/photophysics.hpp"
#include "nvforge/random.hpp"
#include "nvforge/statistics.hpp"

namespace nvforge {

inline constexpr const char* kVersion = "0.1.0";

inline constexpr std::uint64_t kAnnealStage = 2;
inline constexpr std::uint64_t kHbtStage = 3;

/// What the HBT measurement of one site found.
struct SiteHbt {
  std::size_t detections = 0;
  double g2_0 = 0.0;
  double g2_0_stderr = 0.0;
  FitStatus status = FitStatus::max_iterations;
  EmitterCount count = EmitterCount::indeterminate;
};

struct SiteRecord {
  SiteIndex site;
  double pulse_energy_nj = 0.0;
  DamageState damage = DamageState::none;
  int vacancy_count = 0;
  std::vector<NVRecord> nvs;
  std::optional<SiteHbt> hbt;  ///< measured only where NVs are present
  /// Image-plane distance of the emission centroid from the write target.
  std::optional<double> displacement_nm;

  bool empty() const { return nvs.empty(); }
};

struct GridReport {
  RunConfig config;
  std::string config_hash;
  std::vector<SiteRecord> sites;  ///< row-major
  std::vector<RowStats> rows;
  std::vector<int> graphitized_per_row;
  std::optional<DisplacementFit> displacement;
  std::string displacement_note;  ///< why the fit is absent, if it is
};

inline AnnealedSite anneal_grid_site(const RunConfig& cfg, const VacancyCloud& cloud) {
  const auto seed = derive_seed(cfg.master_seed, {kAnnealStage, static_cast<std::uint64_t>(cloud.site.row),
                                                  static_cast<std::uint64_t>(cloud.site.col)});
  return anneal_cloud(cloud, cfg.anneal, seed);
}

/// Simulated HBT run on `nv_count` identical emitters in one confocal spot:
/// one three-level stream per emitter, background shared equally between
/// them, merged, split 50:50 and correlated.
inline CorrelationHistogram simulate_hbt(const EmitterRates& rates, std::size_t nv_count, double duration_s,
                                         double background_cps, double bin_width_ns, double window_ns,
                                         std::uint64_t seed, std::size_t* detections = nullptr) {
  require(nv_count > 0, "no emitter to measure");
  require(duration_s > 0.0, "acquisition time must be positive");
  const auto duration_ps = static_cast<std::int64_t>(std::llround(duration_s * 1e12));
  std::vector<PhotonStream> streams;
  streams.reserve(nv_count);
  for (std::size_t i = 0; i < nv_count; ++i)
    streams.push_back(simulate_photon_stream(rates, duration_ps, background_cps / nv_count, derive_seed(seed, {0, i})));
  const PhotonStream spot = merge_streams(streams);
  if (detections) *detections = spot.size();
  const auto [a, b] = beamsplit(spot, derive_seed(seed, {1}));
  return correlate(a, b, bin_width_ns, window_ns);
}

inline CorrelationHistogram simulate_site_hbt(const RunConfig& cfg, SiteIndex site, std::size_t nv_count,
                                              std::size_t* detections = nullptr) {
  const auto seed = derive_seed(cfg.master_seed, {kHbtStage, static_cast<std::uint64_t>(site.row),
                                                  static_cast<std::uint64_t>(site.col)});
  return simulate_hbt(cfg.emitter, nv_count, cfg.hbt.duration_s, cfg.hbt.background_cps, cfg.analysis.g2_bin_width_ns,
                      cfg.analysis.g2_window_ns, seed, detections);
}

inline SiteHbt characterize_site(const RunConfig& cfg, SiteIndex site, std::size_t nv_count) {
  SiteHbt out;
  G2Fit fit;
  try {
    fit = fit_g2(simulate_site_hbt(cfg, site, nv_count, &out.detections));
  } catch (const InvalidArgument&) {
    return out;  // too few detections to correlate or fit: indeterminate
  }
  out.g2_0 = fit.params.g2_0;
  out.g2_0_stderr = fit.fit.std_errors[0];
  out.status = fit.fit.status;
  out.count = fit.fit.converged() ? classify_emitter_count(out.g2_0, cfg.analysis.thresholds)
                                  : EmitterCount::indeterminate;
  return out;
}

inline SiteRecord run_site(const RunConfig& cfg, SiteIndex site) {
  const VacancyCloud cloud = simulate_grid_site(cfg.grid, cfg.yield, cfg.master_seed, site);
  const AnnealedSite annealed = anneal_grid_site(cfg, cloud);
  SiteRecord rec;
  rec.site = site;
  rec.pulse_energy_nj = cloud.pulse_energy_nj;
  rec.damage = cloud.damage;
  rec.vacancy_count = annealed.vacancy_count;
  rec.nvs = annealed.nvs;
  if (!rec.nvs.empty()) {
    rec.hbt = characterize_site(cfg, site, rec.nvs.size());
    Vec2 centroid;
    for (const auto& nv : rec.nvs) centroid = centroid + nv.image_xy_nm;
    centroid = {centroid.x / rec.nvs.size(), centroid.y / rec.nvs.size()};
    rec.displacement_nm = centroid.norm();
  }
  return rec;
}

struct CampaignOptions {
  /// When set, sites are processed in an order shuffled by this seed. The
  /// report must not change.
  std::optional<std::uint64_t> shuffle_seed;
};

inline GridReport run_campaign(const RunConfig& cfg, const CampaignOptions& opt = {}) {
  cfg.validate();
  GridReport report;
  report.config = cfg;
  report.config_hash = config_hash(cfg);
  const int n = cfg.grid.site_count();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  if (opt.shuffle_seed) {
    Rng rng(*opt.shuffle_seed);
    for (int i = n - 1; i > 0; --i) std::swap(order[i], order[static_cast<int>(rng.next() % (i + 1))]);
  }
  report.sites.resize(n);
  for (int k : order) report.sites[k] = run_site(cfg, {k / cfg.grid.cols, k % cfg.grid.cols});

  std::vector<SiteClassification> cls;
  cls.reserve(n);
  report.graphitized_per_row.assign(cfg.grid.rows, 0);
  std::vector<double> radii;
  for (const auto& s : report.sites) {
    SiteClassification c;
    c.site = s.site;
    c.empty = s.empty();
    if (s.hbt) c.count = s.hbt->count;
    for (const auto& nv : s.nvs) c.nv_image_xy_nm.push_back(nv.image_xy_nm);
    cls.push_back(std::move(c));
    if (s.damage == DamageState::graphitized) ++report.graphitized_per_row[s.site.row];
    if (s.hbt && s.hbt->count == EmitterCount::one && s.displacement_nm) radii.push_back(*s.displacement_nm);
  }
  report.rows = row_statistics(cls, cfg.grid, cfg.analysis.resolution_nm);

  if (radii.size() < 20) {
    report.displacement_note = "only " + std::to_string(radii.size()) + " single-NV sites; need 20";
  } else {
    try {
      report.displacement = fit_displacement(radii, cfg.analysis.displacement_binning_nm);
    } catch (const InvalidArgument& e) {
      report.displacement_note = e.what();
    }
  }
  return report;
}

/// Radii of the single-NV sites, in site order.
inline std::vector<double> single_site_displacements(const GridReport& r) {
  std::vector<double> out;
  for (const auto& s : r.sites)
    if (s.hbt && s.hbt->count == EmitterCount::one && s.displacement_nm) out.push_back(*s.displacement_nm);
  return out;
}

/// Ideal r0 of the singles' displacement distribution: the write spot's
/// in-plane Gaussian spread adds in quadrature to the diffusion jump.
inline double expected_displacement_r0_nm(const RunConfig& cfg) {
  const double s = fwhm_to_sigma(cfg.yield.focal_fwhm_xy_nm);
  return 2.0 * std::sqrt(cfg.anneal.dt_nm2() + 0.5 * s * s);
}

}  // namespace nvforge
