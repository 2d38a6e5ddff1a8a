#pragma once

// Synthetic characterization signals for a set of NV centres: HBT photon
// streams from a three-level emitter, PLE sweep stacks, Hahn echo curves,
// TRPL histograms and confocal spot images.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <vector>

#include "nvforge/error.hpp"
#include "nvforge/geometry.hpp"
#include "nvforge/photon_stream.hpp"
#include "nvforge/random.hpp"

namespace nvforge {

inline constexpr double kReportedT1Ns = 12.8;

/// Rate constants (1/ns) of the ground / excited / shelved chain.
struct EmitterRates {
  double k_exc = 0.0;
  double k_rad = 1.0 / kReportedT1Ns;
  double k_isc = 0.005;
  double k_deshelve = 0.005;
  double detection_efficiency = 0.05;

  void validate() const {
    require(k_exc >= 0.0 && k_isc >= 0.0 && k_deshelve >= 0.0, "rates must be non-negative");
    require(k_rad > 0.0, "radiative rate must be positive");
    require(detection_efficiency >= 0.0 && detection_efficiency <= 1.0,
            "detection efficiency must lie in [0, 1]");
  }

  /// Excitation rate at which emission reaches half its asymptotic value.
  double saturation_excitation() const {
    return (k_rad + k_isc) / (1.0 + (k_deshelve > 0.0 ? k_isc / k_deshelve : 0.0));
  }

  /// Defaults: T1 = 12.8 ns, pumped at 0.87 of saturation, shelving rates
  /// picked to give a visible bunching shoulder (tau3 >> tau2).
  static EmitterRates standard() {
    EmitterRates r;
    r.k_exc = 0.87 * r.saturation_excitation();
    return r;
  }
};

struct ThreeLevelSteadyState {
  double ground = 0.0;
  double excited = 0.0;
  double shelved = 0.0;
  double emission_rate_per_ns = 0.0;  ///< radiative decays per ns
};

inline ThreeLevelSteadyState steady_state(const EmitterRates& r) {
  r.validate();
  // Balance: k_exc pG = (k_rad + k_isc) pE, k_isc pE = k_deshelve pS.
  const double e_over_g = r.k_exc / (r.k_rad + r.k_isc);
  const double s_over_g = r.k_deshelve > 0.0 ? e_over_g * r.k_isc / r.k_deshelve : 0.0;
  ThreeLevelSteadyState s;
  if (r.k_deshelve == 0.0 && r.k_isc > 0.0 && r.k_exc > 0.0) {
    s.shelved = 1.0;  // absorbing shelf
    return s;
  }
  const double norm = 1.0 + e_over_g + s_over_g;
  s.ground = 1.0 / norm;
  s.excited = e_over_g / norm;
  s.shelved = s_over_g / norm;
  s.emission_rate_per_ns = r.k_rad * s.excited;
  return s;
}

/// Exact g2 decomposition of the three-level chain,
/// g2(t) = 1 - c exp(-|t|/tau2) + (c - 1) exp(-|t|/tau3).
struct ThreeLevelG2 {
  double c = 1.0;
  double tau2_ns = 1.0;
  double tau3_ns = 1.0;

  double operator()(double delay_ns) const {
    const double t = std::fabs(delay_ns);
    return 1.0 - c * std::exp(-t / tau2_ns) + (c - 1.0) * std::exp(-t / tau3_ns);
  }
};

inline ThreeLevelG2 three_level_g2(const EmitterRates& r) {
  r.validate();
  require(r.k_exc > 0.0 && r.k_deshelve > 0.0, "g2 needs positive excitation and deshelving rates");
  // Generator acting on column probability vectors (G, E, S).
  Eigen::Matrix3d q;
  q << -r.k_exc, r.k_rad, r.k_deshelve,
       r.k_exc, -(r.k_rad + r.k_isc), 0.0,
       0.0, r.k_isc, -r.k_deshelve;
  Eigen::EigenSolver<Eigen::Matrix3d> es(q);
  const Eigen::Vector3cd lambda = es.eigenvalues();
  const Eigen::Matrix3cd v = es.eigenvectors();
  const Eigen::Vector3cd start = Eigen::Vector3cd(1.0, 0.0, 0.0);
  const Eigen::Vector3cd coeff = v.lu().solve(start);
  const double pe = steady_state(r).excited;

  // Excited-state amplitude of each mode, normalised by the steady state.
  int zero = 0;
  for (int i = 1; i < 3; ++i)
    if (std::abs(lambda[i]) < std::abs(lambda[zero])) zero = i;
  int fast = -1, slow = -1;
  for (int i = 0; i < 3; ++i) {
    if (i == zero) continue;
    if (fast < 0) fast = i;
    else slow = i;
  }
  if (lambda[fast].real() > lambda[slow].real()) std::swap(fast, slow);
  const double a_fast = (coeff[fast] * v(1, fast)).real() / pe;
  const double lam_fast = lambda[fast].real();
  const double lam_slow = lambda[slow].real();
  return {-a_fast, -1.0 / lam_fast, -1.0 / lam_slow};
}

/// Continuous-time Markov jump simulation of one emitter. A detection is
/// recorded at each radiative decay with probability detection_efficiency;
/// uniform background events are superposed. The chain starts from its
/// stationary distribution.
inline PhotonStream simulate_photon_stream(const EmitterRates& rates, std::int64_t duration_ps,
                                           double background_cps, std::uint64_t seed,
                                           std::uint8_t channel = 0) {
  rates.validate();
  require(duration_ps > 0, "duration must be positive");
  require(background_cps >= 0.0, "background rate must be non-negative");
  PhotonStream out{channel, {}, duration_ps};
  Rng rng(derive_seed(seed, {0}));
  const double end_ns = static_cast<double>(duration_ps) * 1e-3;

  if (rates.detection_efficiency > 0.0 && rates.k_exc > 0.0) {
    const auto ss = steady_state(rates);
    out.timestamps_ps.reserve(static_cast<std::size_t>(
        ss.emission_rate_per_ns * rates.detection_efficiency * end_ns * 1.05 + 16));
    const double u0 = rng.uniform();
    int state = u0 < ss.ground ? 0 : (u0 < ss.ground + ss.excited ? 1 : 2);
    const double k_out_e = rates.k_rad + rates.k_isc;
    const double p_rad = rates.k_rad / k_out_e;
    double t = 0.0;
    std::int64_t last = -1;
    while (t < end_ns) {
      if (state == 0) {
        t += rng.exponential(rates.k_exc);
        state = 1;
      } else if (state == 1) {
        t += rng.exponential(k_out_e);
        if (rng.uniform() < p_rad) {
          state = 0;
          if (t < end_ns && rng.uniform() < rates.detection_efficiency) {
            const auto ps = static_cast<std::int64_t>(std::llround(t * 1e3));
            if (ps > last && ps <= duration_ps) {
              out.timestamps_ps.push_back(ps);
              last = ps;
            }
          }
        } else {
          state = 2;
        }
      } else {
        if (rates.k_deshelve <= 0.0) break;
        t += rng.exponential(rates.k_deshelve);
        state = 0;
      }
    }
  }

  if (background_cps > 0.0) {
    Rng bg(derive_seed(seed, {1}));
    const auto n = bg.poisson(background_cps * static_cast<double>(duration_ps) * 1e-12);
    std::vector<std::int64_t> noise(n);
    for (auto& t : noise)
      t = static_cast<std::int64_t>(bg.uniform() * static_cast<double>(duration_ps));
    PhotonStream b{channel, std::move(noise), duration_ps};
    std::sort(b.timestamps_ps.begin(), b.timestamps_ps.end());
    const PhotonStream parts[] = {std::move(out), std::move(b)};
    return merge_streams(parts);
  }
  return out;
}

// ---------------------------------------------------------------------------
// PLE sweeps

struct PLEScanConfig {
  double homogeneous_fwhm_mhz = 13.5;
  double scan_range_mhz = 200.0;
  int points_per_sweep = 401;
  int sweeps = 70;
  double jitter_sigma_mhz = 0.0;
  double jump_probability = 0.0;
  double jump_magnitude_mhz = 70.0;
  double peak_counts = 200.0;
  double background_counts = 2.0;
  std::vector<int> forced_jump_sweeps;  ///< sweeps that jump by +jump_magnitude

  void validate() const {
    require(homogeneous_fwhm_mhz > 0.0 && scan_range_mhz > 0.0, "widths and ranges must be positive");
    require(points_per_sweep >= 3 && sweeps >= 1, "need at least 3 points and 1 sweep");
    require(jitter_sigma_mhz >= 0.0 && jump_magnitude_mhz >= 0.0, "jitter and jumps must be non-negative");
    require(jump_probability >= 0.0 && jump_probability <= 1.0, "jump probability must lie in [0, 1]");
    require(peak_counts > 0.0 && background_counts >= 0.0, "counts must be positive");
  }
};

struct PLEStack {
  std::vector<double> frequency_mhz;        ///< common detuning grid
  std::vector<std::vector<double>> counts;  ///< one row per sweep
  std::vector<double> centres_mhz;          ///< true line centre per sweep
};

/// Unit-peak Lorentzian.
inline double lorentzian_shape(double detuning, double fwhm) {
  const double h = 0.5 * fwhm;
  return h * h / (detuning * detuning + h * h);
}

inline PLEStack simulate_ple_stack(const PLEScanConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  PLEStack stack;
  const int n = cfg.points_per_sweep;
  stack.frequency_mhz.resize(n);
  for (int i = 0; i < n; ++i)
    stack.frequency_mhz[i] = -0.5 * cfg.scan_range_mhz + cfg.scan_range_mhz * i / (n - 1);

  Rng centre_rng(derive_seed(seed, {0}));
  double offset = 0.0;
  for (int s = 0; s < cfg.sweeps; ++s) {
    // Draw every variate for every sweep so forced jumps do not shift the
    // random sequence of later sweeps.
    const double jitter = centre_rng.normal() * cfg.jitter_sigma_mhz;
    const bool jump = centre_rng.uniform() < cfg.jump_probability;
    const double sign = centre_rng.uniform() < 0.5 ? -1.0 : 1.0;
    if (jump) offset += sign * cfg.jump_magnitude_mhz;
    if (std::find(cfg.forced_jump_sweeps.begin(), cfg.forced_jump_sweeps.end(), s) !=
        cfg.forced_jump_sweeps.end())
      offset += cfg.jump_magnitude_mhz;
    stack.centres_mhz.push_back(offset + jitter);
  }

  stack.counts.resize(cfg.sweeps);
  for (int s = 0; s < cfg.sweeps; ++s) {
    Rng rng(derive_seed(seed, {1, static_cast<std::uint64_t>(s)}));
    auto& row = stack.counts[s];
    row.resize(n);
    for (int i = 0; i < n; ++i) {
      const double mean = cfg.background_counts +
                          cfg.peak_counts * lorentzian_shape(stack.frequency_mhz[i] - stack.centres_mhz[s],
                                                             cfg.homogeneous_fwhm_mhz);
      row[i] = static_cast<double>(rng.poisson(mean));
    }
  }
  return stack;
}

/// Lorentzian (FWHM lorentz_fwhm) convolved with a Gaussian (std gauss_sigma)
/// at the given detuning, by Simpson quadrature.
inline double voigt_profile(double detuning, double lorentz_fwhm, double gauss_sigma) {
  if (gauss_sigma <= 0.0) return lorentzian_shape(detuning, lorentz_fwhm);
  const int n = 4000;
  const double lo = -10.0 * gauss_sigma, hi = 10.0 * gauss_sigma, h = (hi - lo) / n;
  double sum = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double g = lo + i * h;
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    sum += w * lorentzian_shape(detuning - g, lorentz_fwhm) * std::exp(-0.5 * g * g / (gauss_sigma * gauss_sigma));
  }
  return sum * h / 3.0 / (gauss_sigma * std::sqrt(2.0 * std::numbers::pi));
}

/// Full width at half maximum of the Voigt profile, found numerically.
inline double voigt_fwhm(double lorentz_fwhm, double gauss_sigma) {
  require(lorentz_fwhm > 0.0 && gauss_sigma >= 0.0, "invalid Voigt widths");
  const double half = 0.5 * voigt_profile(0.0, lorentz_fwhm, gauss_sigma);
  double lo = 0.0, hi = lorentz_fwhm + 4.0 * gauss_sigma;
  for (int i = 0; i < 80; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (voigt_profile(mid, lorentz_fwhm, gauss_sigma) > half) lo = mid;
    else hi = mid;
  }
  return lo + hi;  // twice the half width
}

/// Gaussian centre-jitter std that broadens a homogeneous line to the
/// target inhomogeneous FWHM (bisection on voigt_fwhm).
inline double jitter_sigma_for_width(double homogeneous_fwhm, double target_fwhm) {
  require(target_fwhm >= homogeneous_fwhm, "target width below homogeneous width");
  double lo = 0.0, hi = target_fwhm;
  for (int i = 0; i < 60; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (voigt_fwhm(homogeneous_fwhm, mid) < target_fwhm) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------------------
// Hahn echo

struct EchoConfig {
  double t2_us = 48.0;
  double exponent = 2.0;
  double y0 = 0.5;
  double y1 = 0.5;
  std::vector<double> tau_grid_us;
  double counts_per_point = 3500.0;

  void validate() const {
    require(t2_us > 0.0 && exponent > 0.0, "T2 and exponent must be positive");
    require(!tau_grid_us.empty(), "tau grid is empty");
    for (std::size_t i = 0; i < tau_grid_us.size(); ++i) {
      require(tau_grid_us[i] > 0.0, "tau grid must be positive");
      require(i == 0 || tau_grid_us[i] > tau_grid_us[i - 1], "tau grid must be increasing");
    }
    require(counts_per_point > 0.0, "counts per point must be positive");
  }

  /// 2 .. 150 us in 4 us steps.
  static EchoConfig standard() {
    EchoConfig cfg;
    for (double t = 2.0; t <= 150.0; t += 4.0) cfg.tau_grid_us.push_back(t);
    return cfg;
  }
};

inline double echo_intensity(double tau_us, double t2_us, double exponent, double y0, double y1) {
  return y1 * std::exp(-std::pow(tau_us / t2_us, exponent)) + y0;
}

struct EchoPoint {
  double tau_us = 0.0;
  double intensity = 0.0;
  double sigma = 0.0;
};

/// Model curve with shot noise: counts ~ Poisson(I * counts_per_point).
inline std::vector<EchoPoint> simulate_echo_curve(const EchoConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  std::vector<EchoPoint> out;
  out.reserve(cfg.tau_grid_us.size());
  for (double tau : cfg.tau_grid_us) {
    const double mean = echo_intensity(tau, cfg.t2_us, cfg.exponent, cfg.y0, cfg.y1);
    const double counts = static_cast<double>(rng.poisson(std::max(mean, 0.0) * cfg.counts_per_point));
    out.push_back({tau, counts / cfg.counts_per_point,
                   std::sqrt(std::max(counts, 1.0)) / cfg.counts_per_point});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Time-resolved PL

/// Instrument response sampled on the histogram's time bins; sums to one.
struct SampledIrf {
  double bin_width_ns = 0.025;
  std::vector<double> weights;

  void validate() const {
    require(bin_width_ns > 0.0 && !weights.empty(), "IRF needs a positive bin width and samples");
    double sum = 0.0;
    for (double w : weights) {
      require(w >= 0.0, "IRF must be non-negative");
      sum += w;
    }
    require(std::fabs(sum - 1.0) < 1e-9, "IRF must be normalised");
  }
};

inline SampledIrf normalized_irf(double bin_width_ns, std::vector<double> weights) {
  double sum = 0.0;
  for (double w : weights) sum += w;
  require(sum > 0.0, "IRF has no weight");
  for (double& w : weights) w /= sum;
  return {bin_width_ns, std::move(weights)};
}

inline SampledIrf gaussian_irf(double fwhm_ns, double bin_width_ns, int bins, double centre_ns) {
  require(fwhm_ns > 0.0 && bins > 0, "invalid IRF shape");
  const double sigma = fwhm_to_sigma(fwhm_ns);
  std::vector<double> w(bins);
  for (int i = 0; i < bins; ++i) {
    // Bin-integrated Gaussian.
    const double a = (i * bin_width_ns - centre_ns) / (sigma * std::numbers::sqrt2);
    const double b = ((i + 1) * bin_width_ns - centre_ns) / (sigma * std::numbers::sqrt2);
    w[i] = 0.5 * (std::erf(b) - std::erf(a));
  }
  return normalized_irf(bin_width_ns, std::move(w));
}

inline SampledIrf delta_irf(double bin_width_ns, int bins, int at_bin) {
  require(at_bin >= 0 && at_bin < bins, "delta position outside the IRF");
  std::vector<double> w(bins, 0.0);
  w[at_bin] = 1.0;
  return {bin_width_ns, std::move(w)};
}

struct DecayHistogram {
  double bin_width_ns = 0.025;
  std::vector<double> counts;
};

/// Each photon: IRF delay (bin drawn from the IRF, uniform inside the bin)
/// plus an exponential delay; the number of photons is Poisson(total_counts),
/// which makes every bin Poisson. Photons beyond the last bin are lost.
inline DecayHistogram simulate_trpl(double t1_ns, const SampledIrf& irf, double total_counts,
                                    std::uint64_t seed) {
  require(t1_ns > 0.0, "T1 must be positive");
  require(total_counts >= 0.0, "total counts must be non-negative");
  irf.validate();
  const std::size_t bins = irf.weights.size();
  std::vector<double> cumulative(bins);
  double acc = 0.0;
  for (std::size_t i = 0; i < bins; ++i) cumulative[i] = (acc += irf.weights[i]);

  DecayHistogram h{irf.bin_width_ns, std::vector<double>(bins, 0.0)};
  Rng rng(seed);
  const auto n = rng.poisson(total_counts);
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::size_t j = rng.categorical(cumulative);
    const double t = (static_cast<double>(j) + rng.uniform()) * irf.bin_width_ns + rng.exponential(1.0 / t1_ns);
    const auto k = static_cast<std::size_t>(t / irf.bin_width_ns);
    if (k < bins) h.counts[k] += 1.0;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Confocal spot images

struct SpotImageConfig {
  int rows = 25;
  int cols = 25;
  double pixel_nm = 100.0;
  double spot_fwhm_nm = 500.0;
  double peak_counts = 10.0;
  double background_counts = 10.0;
  Vec2 centre_nm{1200.0, 1200.0};  ///< pixel (r, c) sits at (c * pixel, r * pixel)
};

/// Expected counts of a symmetric Gaussian spot on a constant background.
inline Eigen::MatrixXd spot_image_mean(const SpotImageConfig& cfg) {
  require(cfg.rows > 0 && cfg.cols > 0 && cfg.pixel_nm > 0.0 && cfg.spot_fwhm_nm > 0.0,
          "invalid image geometry");
  const double s = fwhm_to_sigma(cfg.spot_fwhm_nm);
  Eigen::MatrixXd img(cfg.rows, cfg.cols);
  for (int r = 0; r < cfg.rows; ++r)
    for (int c = 0; c < cfg.cols; ++c) {
      const double dx = c * cfg.pixel_nm - cfg.centre_nm.x;
      const double dy = r * cfg.pixel_nm - cfg.centre_nm.y;
      img(r, c) = cfg.background_counts + cfg.peak_counts * std::exp(-(dx * dx + dy * dy) / (2.0 * s * s));
    }
  return img;
}

inline Eigen::MatrixXd simulate_spot_image(const SpotImageConfig& cfg, std::uint64_t seed) {
  Eigen::MatrixXd img = spot_image_mean(cfg);
  Rng rng(seed);
  for (int r = 0; r < img.rows(); ++r)
    for (int c = 0; c < img.cols(); ++c) img(r, c) = static_cast<double>(rng.poisson(img(r, c)));
  return img;
}

}  // namespace nvforge
