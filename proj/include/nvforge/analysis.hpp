#pragma once

// Fits of every measured quantity: g2 autocorrelation, displacement
// distribution, PLE lines, Hahn echo, TRPL lifetime and 2D localisation.

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <span>
#include <string_view>
#include <vector>

#include "nvforge/correlation.hpp"
#include "nvforge/error.hpp"
#include "nvforge/models.hpp"
#include "nvforge/nlls.hpp"
#include "nvforge/photophysics.hpp"

namespace nvforge {

// ---------------------------------------------------------------------------
// g2

struct G2Params {
  double g2_0 = 0.0;
  double c = 1.0;
  double tau2_ns = 10.0;
  double tau3_ns = 100.0;
};

/// The published three-level model, verbatim. Note its large-delay limit is
/// g2_0 + 1, not 1.
inline double g2_model(double delay_ns, const G2Params& p) {
  const std::array<double, 4> v{p.g2_0, p.c, p.tau2_ns, p.tau3_ns};
  return G2PrintedCurve{}.value(delay_ns, v);
}

/// Unit-baseline variant used for fitting normalised histograms.
inline double g2_model_rescaled(double delay_ns, const G2Params& p) {
  const std::array<double, 4> v{p.g2_0, p.c, p.tau2_ns, p.tau3_ns};
  return G2RescaledCurve{}.value(delay_ns, v);
}

enum class G2Form {
  rescaled,  ///< g2_0 + (1 - g2_0) * shape: baseline 1, value g2_0 at zero delay
  published, ///< verbatim model, baseline g2_0 + 1
};

struct G2Fit {
  FitResult fit;
  G2Params params;
};

/// Heuristic start: g2_0 from the central bins, tau2 from the half-recovery
/// delay, c from the bunching maximum.
inline G2Params g2_initial_guess(const CorrelationHistogram& h) {
  const auto x = h.centres_ns();
  const auto y = h.normalized_values();
  const std::size_t mid = y.size() / 2;
  double centre = 0.0;
  int n = 0;
  for (std::size_t i = mid > 0 ? mid - 1 : 0; i <= std::min(mid + 1, y.size() - 1); ++i, ++n) centre += y[i];
  centre /= n;
  G2Params p;
  p.g2_0 = std::clamp(centre, 0.0, 0.95);
  // Smoothed positive-delay branch.
  std::vector<double> sm;
  std::vector<double> t;
  for (std::size_t i = mid; i < y.size(); ++i) {
    double s = 0.0;
    int m = 0;
    for (std::size_t j = (i >= 2 ? i - 2 : 0); j <= std::min(i + 2, y.size() - 1); ++j, ++m) s += y[j] + y[y.size() - 1 - j];
    sm.push_back(s / (2 * m));
    t.push_back(x[i]);
  }
  const double half = 0.5 * (p.g2_0 + 1.0);
  double t_half = t.size() > 1 ? t[1] : 1.0;
  for (std::size_t i = 0; i < sm.size(); ++i)
    if (sm[i] >= half) {
      t_half = std::max(t[i], 1e-3);
      break;
    }
  p.tau2_ns = std::max(t_half / std::numbers::ln2, 0.1);
  const double peak = *std::max_element(sm.begin(), sm.end());
  p.c = 1.0 + std::max(peak - 1.0, 0.05) / std::max(1.0 - p.g2_0, 0.05);
  p.tau3_ns = 10.0 * p.tau2_ns;
  return p;
}

/// Upper bound on the bunching factor c. Real three-level emitters sit well
/// below it; without the cap, sparse histograms let the fit escape along the
/// valley tau2 = tau3, c -> infinity, where the dip shape stays fixed.
inline constexpr double kMaxBunching = 10.0;

/// Weighted fit of the normalised histogram, sigma = sqrt(max(counts, 1)) /
/// normalization, with the model averaged over each bin.
inline G2Fit fit_g2(const CorrelationHistogram& h, const G2Params& init, G2Form form = G2Form::rescaled,
                    const FitOptions& opt = {}) {
  h.validate();
  if (h.size() < 8) throw InvalidArgument("g2 fit needs at least 8 bins spanning dip and shoulder");
  std::vector<DelayBin> x(h.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = {h.bin_edges_ns[i], h.bin_edges_ns[i + 1]};
  const auto y = h.normalized_values();
  const auto s = h.normalized_sigma();
  const double span_ns = h.bin_edges_ns.back() - h.bin_edges_ns.front();
  const std::array<Bound, 4> bounds{Bound::between(0.0, form == G2Form::rescaled ? 1.5 : 3.0),
                                    Bound::between(0.0, kMaxBunching), Bound::between(1e-3, span_ns),
                                    Bound::between(1e-3, 1e3 * span_ns)};
  const std::array<double, 4> p0{std::clamp(init.g2_0, 0.0, bounds[0].upper), std::clamp(init.c, 0.0, kMaxBunching),
                                 std::clamp(init.tau2_ns, 1e-3, span_ns),
                                 std::clamp(init.tau3_ns, 1e-3, 1e3 * span_ns)};
  std::vector<std::string> names{"g2_0", "c", "tau2_ns", "tau3_ns"};
  const G2BinAveragedCurve curve{form == G2Form::rescaled};
  FitResult r = nlls_fit(curve, std::span<const DelayBin>(x), y, s, p0, bounds, names, opt);
  G2Fit out{r, {r.params[0], r.params[1], r.params[2], r.params[3]}};
  return out;
}

inline G2Fit fit_g2(const CorrelationHistogram& h, G2Form form = G2Form::rescaled) {
  return fit_g2(h, g2_initial_guess(h), form);
}

enum class EmitterCount { one, two, three, indeterminate };

inline std::string_view to_string(EmitterCount c) {
  switch (c) {
    case EmitterCount::one: return "one";
    case EmitterCount::two: return "two";
    case EmitterCount::three: return "three";
    case EmitterCount::indeterminate: return "indeterminate";
  }
  return "indeterminate";
}

inline int emitter_number(EmitterCount c) {
  switch (c) {
    case EmitterCount::one: return 1;
    case EmitterCount::two: return 2;
    case EmitterCount::three: return 3;
    default: return 0;
  }
}

struct ClassificationThresholds {
  double one_two = 0.32;
  double two_three = 0.65;
  double upper = 0.9;
};

/// Half-open classes: [0, 0.32) one, [0.32, 0.65) two, [0.65, 0.9) three.
inline EmitterCount classify_emitter_count(double g2_0, const ClassificationThresholds& t = {}) {
  require(g2_0 >= 0.0, "g2(0) must be non-negative");
  if (g2_0 < t.one_two) return EmitterCount::one;
  if (g2_0 < t.two_three) return EmitterCount::two;
  if (g2_0 < t.upper) return EmitterCount::three;
  return EmitterCount::indeterminate;
}

// ---------------------------------------------------------------------------
// Displacement distribution

struct DisplacementFit {
  FitResult fit;
  double amplitude = 0.0;
  double r0_nm = 0.0;
  double r0_stderr_nm = 0.0;
  double sqrt_dt_nm = 0.0;  ///< r0 / 2
  double sqrt_dt_stderr_nm = 0.0;
  std::vector<double> bin_centres_nm;
  std::vector<double> counts;
};

/// Histograms the radii and fits A r exp(-r^2/r0^2) at the bin centres.
/// The first pass weights bins by sqrt(max(counts, 1)); later passes reweight
/// by the fitted model (Poisson variance) until r0 settles, which removes the
/// low bias count-based weights cause on sparse histograms.
inline DisplacementFit fit_displacement(std::span<const double> radii_nm, double binning_nm) {
  require(binning_nm > 0.0, "binning must be positive");
  if (radii_nm.size() < 20) throw InvalidArgument("displacement fit needs at least 20 samples");
  double rmax = 0.0;
  for (double r : radii_nm) {
    require(r >= 0.0 && std::isfinite(r), "radii must be finite and non-negative");
    rmax = std::max(rmax, r);
  }
  if (rmax <= 0.0) throw InvalidArgument("degenerate input: all displacements are zero");

  // Empty bins out to twice the largest radius: under the Poisson weights a
  // zero-count bin costs its expected count, which pins the tail. Without them
  // nothing penalises model mass beyond the data, biasing r0 high and letting
  // some fits run off to r0 -> infinity.
  const auto nbins = static_cast<std::size_t>(std::floor(2.0 * rmax / binning_nm)) + 1;
  DisplacementFit out;
  out.counts.assign(nbins, 0.0);
  out.bin_centres_nm.resize(nbins);
  for (std::size_t i = 0; i < nbins; ++i) out.bin_centres_nm[i] = (i + 0.5) * binning_nm;
  for (double r : radii_nm) out.counts[std::min(static_cast<std::size_t>(r / binning_nm), nbins - 1)] += 1.0;

  const auto mode = static_cast<std::size_t>(std::max_element(out.counts.begin(), out.counts.end()) - out.counts.begin());
  const double r0_init = std::max(out.bin_centres_nm[mode] * std::numbers::sqrt2, binning_nm);
  const double n = static_cast<double>(radii_nm.size());
  std::array<double, 2> p{2.0 * n * binning_nm / (r0_init * r0_init), r0_init};
  const std::array<Bound, 2> bounds{Bound::at_least(0.0), Bound::at_least(1e-6)};
  const std::vector<std::string> names{"A", "r0_nm"};
  const std::span<const double> xs(out.bin_centres_nm);

  std::vector<double> sigma = poisson_sigma(out.counts);
  FitResult r = nlls_fit(DisplacementCurve{}, xs, out.counts, sigma, p, bounds, names);
  for (int pass = 0; pass < 50 && r.converged(); ++pass) {
    const double prev = r.params[1];
    p = {r.params[0], r.params[1]};
    for (std::size_t i = 0; i < nbins; ++i)
      sigma[i] = std::sqrt(std::max(DisplacementCurve{}.value(xs[i], p), 1e-3));
    r = nlls_fit(DisplacementCurve{}, xs, out.counts, sigma, p, bounds, names);
    if (std::fabs(r.params[1] - prev) <= 1e-10 * prev) break;
  }

  out.fit = r;
  out.amplitude = r.params[0];
  out.r0_nm = r.params[1];
  out.r0_stderr_nm = r.std_errors[1];
  out.sqrt_dt_nm = 0.5 * out.r0_nm;
  out.sqrt_dt_stderr_nm = 0.5 * out.r0_stderr_nm;
  return out;
}

// ---------------------------------------------------------------------------
// PLE lines

struct LorentzianFit {
  FitResult fit;
  double centre_mhz = 0.0;
  double fwhm_mhz = 0.0;
  double amplitude = 0.0;
  double offset = 0.0;
};

/// Lorentzian plus constant. Reports no_signal when the fitted peak is not
/// significant or lies outside the scanned range.
inline LorentzianFit fit_lorentzian(std::span<const double> freq_mhz, std::span<const double> counts) {
  if (freq_mhz.size() != counts.size()) throw InvalidArgument("frequency and count sizes differ");
  if (freq_mhz.size() < 5) throw InvalidArgument("Lorentzian fit needs at least 5 points");
  const std::size_t n = counts.size();
  const double fmin = *std::min_element(freq_mhz.begin(), freq_mhz.end());
  const double fmax = *std::max_element(freq_mhz.begin(), freq_mhz.end());
  const double range = fmax - fmin;
  require(range > 0.0, "frequency grid has zero span");

  std::vector<double> sorted(counts.begin(), counts.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t q = std::max<std::size_t>(n / 10, 1);
  const double offset0 = std::accumulate(sorted.begin(), sorted.begin() + q, 0.0) / q;
  std::size_t peak = 0;
  double best = -1e300;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    int m = 0;
    for (std::size_t j = (i >= 1 ? i - 1 : 0); j <= std::min(i + 1, n - 1); ++j, ++m) s += counts[j];
    if (s / m > best) {
      best = s / m;
      peak = i;
    }
  }
  const double amp0 = std::max(best - offset0, 1e-6);
  std::size_t above = 0;
  for (std::size_t i = 0; i < n; ++i) above += counts[i] > offset0 + 0.5 * amp0 ? 1 : 0;
  const double step = range / static_cast<double>(n - 1);
  const double fwhm0 = std::clamp(static_cast<double>(above) * step, 2.0 * step, range);

  const std::array<double, 4> p0{freq_mhz[peak], fwhm0, amp0, offset0};
  const std::array<Bound, 4> bounds{Bound::between(fmin - range, fmax + range), Bound::between(1e-3 * step, 10.0 * range),
                                    Bound::at_least(0.0), Bound::none()};
  // Reweighted by the fitted model, as for the other counting histograms.
  std::vector<double> sigma = poisson_sigma(counts);
  const std::vector<std::string> names{"centre_mhz", "fwhm_mhz", "amplitude", "offset"};
  FitResult r = nlls_fit(LorentzianCurve{}, freq_mhz, counts, sigma, p0, bounds, names);
  for (int pass = 0; pass < 50 && r.converged(); ++pass) {
    const double prev = r.params[1];
    const std::array<double, 4> p{r.params[0], r.params[1], r.params[2], r.params[3]};
    for (std::size_t i = 0; i < n; ++i) sigma[i] = std::sqrt(std::max(LorentzianCurve{}.value(freq_mhz[i], p), 1e-3));
    r = nlls_fit(LorentzianCurve{}, freq_mhz, counts, sigma, p, bounds, names);
    if (std::fabs(r.params[1] - prev) <= 1e-10 * prev) break;
  }
  LorentzianFit out{r, r.params[0], r.params[1], r.params[2], r.params[3]};
  const bool significant = std::isfinite(r.std_errors[2]) && r.params[2] > 3.0 * r.std_errors[2];
  const bool inside = r.params[0] >= fmin && r.params[0] <= fmax && r.params[1] < range;
  if ((r.status == FitStatus::converged || r.status == FitStatus::singular_jacobian) && !(significant && inside))
    out.fit.status = FitStatus::no_signal;
  return out;
}

struct ScanSweep {
  std::vector<double> frequency_mhz;
  std::vector<double> counts;
};

struct AggregateScan {
  std::vector<double> frequency_mhz;
  std::vector<double> summed;
  LorentzianFit fit;
  bool poor_fit = false;  ///< reduced chi^2 above poor_fit_chi2
};

inline constexpr double kPoorFitChi2 = 1.5;

inline AggregateScan aggregate_scans(const PLEStack& stack) {
  if (stack.counts.size() < 2) throw InvalidArgument("aggregation needs at least 2 sweeps");
  AggregateScan out;
  out.frequency_mhz = stack.frequency_mhz;
  out.summed.assign(stack.frequency_mhz.size(), 0.0);
  for (std::size_t s = 0; s < stack.counts.size(); ++s) {
    if (stack.counts[s].size() != stack.frequency_mhz.size())
      throw InvalidArgument("sweep " + std::to_string(s) + " is not on the common frequency grid");
    for (std::size_t i = 0; i < out.summed.size(); ++i) out.summed[i] += stack.counts[s][i];
  }
  out.fit = fit_lorentzian(out.frequency_mhz, out.summed);
  out.poor_fit = out.fit.fit.chi2_reduced > kPoorFitChi2;
  return out;
}

inline AggregateScan aggregate_scans(std::span<const ScanSweep> sweeps) {
  if (sweeps.size() < 2) throw InvalidArgument("aggregation needs at least 2 sweeps");
  PLEStack stack;
  stack.frequency_mhz = sweeps.front().frequency_mhz;
  for (std::size_t s = 0; s < sweeps.size(); ++s) {
    if (sweeps[s].frequency_mhz != stack.frequency_mhz || sweeps[s].counts.size() != stack.frequency_mhz.size())
      throw InvalidArgument("sweep " + std::to_string(s) + " is not on the common frequency grid");
    stack.counts.push_back(sweeps[s].counts);
  }
  return aggregate_scans(stack);
}

/// Lorentzian-fit width of the noise-free aggregate of a jittered stack: the
/// sum of `sweeps` Voigt profiles on the scan grid.
inline double expected_aggregate_fwhm(const PLEScanConfig& cfg, double jitter_sigma_mhz) {
  cfg.validate();
  std::vector<double> f(cfg.points_per_sweep), y(cfg.points_per_sweep);
  for (int i = 0; i < cfg.points_per_sweep; ++i) {
    f[i] = -0.5 * cfg.scan_range_mhz + cfg.scan_range_mhz * i / (cfg.points_per_sweep - 1);
    y[i] = cfg.sweeps * (cfg.background_counts +
                         cfg.peak_counts * voigt_profile(f[i], cfg.homogeneous_fwhm_mhz, jitter_sigma_mhz));
  }
  return fit_lorentzian(f, y).fwhm_mhz;
}

/// Jitter that makes the aggregate's fitted Lorentzian width equal the
/// target. A Lorentzian fitted to a Voigt line comes out narrower than the
/// Voigt FWHM (16.1 MHz Voigt fits as ~14.8 MHz at 13.5 MHz homogeneous),
/// so this searches on the fitted width rather than on voigt_fwhm.
inline double jitter_sigma_for_aggregate_width(const PLEScanConfig& cfg, double target_fwhm) {
  require(target_fwhm >= cfg.homogeneous_fwhm_mhz, "target width below homogeneous width");
  double lo = 0.0, hi = 2.0 * target_fwhm;
  for (int i = 0; i < 50; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (expected_aggregate_fwhm(cfg, mid) < target_fwhm) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

/// Transform-limited linewidth 1 / (2 pi T1), MHz for T1 in ns.
inline double fourier_limit_linewidth(double t1_ns) {
  require(t1_ns > 0.0, "T1 must be positive");
  return 1e3 / (2.0 * std::numbers::pi * t1_ns);
}

// ---------------------------------------------------------------------------
// Hahn echo

struct EchoFit {
  FitResult fit;
  double y0 = 0.0;
  double y1 = 0.0;
  double t2_us = 0.0;
  double exponent = 0.0;
};

/// Stretched-exponential fit with the exponent free. Points with sigma <= 0
/// mean "unknown": all points are then weighted equally and the covariance
/// is scaled by the reduced chi^2.
inline EchoFit fit_echo(std::span<const EchoPoint> points) {
  if (points.size() < 6) throw InvalidArgument("echo fit needs at least 6 points");
  std::vector<double> tau, y, s;
  bool known_sigma = true;
  for (const auto& pt : points) {
    require(pt.tau_us >= 0.0, "tau must be non-negative");
    tau.push_back(pt.tau_us);
    y.push_back(pt.intensity);
    known_sigma = known_sigma && pt.sigma > 0.0;
  }
  for (const auto& pt : points) s.push_back(known_sigma ? pt.sigma : 1.0);

  // Start: baseline from the tail, amplitude from the head, T2 at the 1/e
  // crossing.
  const std::size_t n = y.size();
  const std::size_t tail = std::max<std::size_t>(n / 6, 1);
  double y0 = 0.0, head = 0.0;
  for (std::size_t i = n - tail; i < n; ++i) y0 += y[i];
  for (std::size_t i = 0; i < tail; ++i) head += y[i];
  y0 /= tail;
  head /= tail;
  const double y1 = head - y0;
  double t2 = tau[n / 2];
  for (std::size_t i = 0; i < n; ++i)
    if ((y[i] - y0) <= y1 / std::numbers::e) {
      t2 = std::max(tau[i], 1e-6);
      break;
    }
  const double tmax = tau.back();
  const std::array<double, 4> p0{y0, y1, std::clamp(t2, 1e-3 * tmax, 10.0 * tmax), 1.5};
  const std::array<Bound, 4> bounds{Bound::none(), Bound::none(), Bound::between(1e-6 * tmax, 1e3 * tmax),
                                    Bound::between(0.1, 10.0)};
  FitOptions opt;
  opt.scale_covariance = !known_sigma;
  FitResult r = nlls_fit(EchoCurve{}, std::span<const double>(tau), y, s, p0, bounds, {"y0", "y1", "T2_us", "n"}, opt);
  return {r, r.params[0], r.params[1], r.params[2], r.params[3]};
}

// ---------------------------------------------------------------------------
// TRPL

struct TrplFit {
  FitResult fit;
  double t1_ns = 0.0;
  double t1_stderr_ns = 0.0;
  double amplitude = 0.0;
};

/// Bin-wise difference of a signal and a background histogram.
inline DecayHistogram subtract_background(const DecayHistogram& signal, const DecayHistogram& background) {
  if (signal.counts.size() != background.counts.size() || signal.bin_width_ns != background.bin_width_ns)
    throw InvalidArgument("background histogram does not match the signal");
  DecayHistogram out = signal;
  for (std::size_t i = 0; i < out.counts.size(); ++i) out.counts[i] -= background.counts[i];
  return out;
}

/// Fits amplitude * (IRF (*) exponential(T1)) to a background-subtracted
/// decay histogram on the IRF's time bins.
inline TrplFit fit_trpl(const DecayHistogram& hist, const SampledIrf& irf) {
  irf.validate();
  if (std::fabs(hist.bin_width_ns - irf.bin_width_ns) > 1e-12 * irf.bin_width_ns)
    throw InvalidArgument("IRF and histogram bin widths differ");
  const int bins = static_cast<int>(hist.counts.size());
  if (bins < 4) throw InvalidArgument("decay histogram is too short");
  const double total = std::accumulate(hist.counts.begin(), hist.counts.end(), 0.0);
  require(total > 0.0, "decay histogram has no counts");

  // Start T1 from a log-linear regression of the tail.
  const auto peak = static_cast<int>(std::max_element(hist.counts.begin(), hist.counts.end()) - hist.counts.begin());
  const double cmax = hist.counts[peak];
  double sw = 0, st = 0, sl = 0, stt = 0, stl = 0;
  for (int i = peak; i < bins; ++i) {
    const double c = hist.counts[i];
    if (c < 0.05 * cmax || c <= 0.0) {
      if (i > peak + 2) break;
      continue;
    }
    const double t = i * hist.bin_width_ns, l = std::log(c);
    sw += c;
    st += c * t;
    sl += c * l;
    stt += c * t * t;
    stl += c * t * l;
  }
  double t1_0 = 0.25 * bins * hist.bin_width_ns;
  const double den = sw * stt - st * st;
  if (sw > 0.0 && den > 0.0) {
    const double slope = (sw * stl - st * sl) / den;
    if (slope < 0.0) t1_0 = -1.0 / slope;
  }
  const double tspan = bins * hist.bin_width_ns;
  t1_0 = std::clamp(t1_0, 0.5 * hist.bin_width_ns, 10.0 * tspan);

  TrplModel model(irf, bins);
  const std::array<double, 2> p0{t1_0, total};
  const std::array<Bound, 2> bounds{Bound::between(0.01 * hist.bin_width_ns, 100.0 * tspan), Bound::at_least(0.0)};
  // Count-based weights bias T1 low on the sparse tail; reweighting by the
  // fitted model until T1 settles reaches the Poisson likelihood optimum.
  std::vector<double> sigma = poisson_sigma(hist.counts);
  const std::vector<std::string> names{"T1_ns", "amplitude"};
  FitResult r = nlls_fit(model, hist.counts, sigma, p0, bounds, names);
  Eigen::VectorXd mean;
  for (int pass = 0; pass < 50 && r.converged(); ++pass) {
    const double prev = r.params[0];
    model.evaluate(r.params, mean, nullptr);
    for (int i = 0; i < bins; ++i) sigma[i] = std::sqrt(std::max(mean[i], 1e-3));
    r = nlls_fit(model, hist.counts, sigma, std::array<double, 2>{r.params[0], r.params[1]}, bounds, names);
    if (std::fabs(r.params[0] - prev) <= 1e-10 * prev) break;
  }
  return {r, r.params[0], r.std_errors[0], r.params[1]};
}

// ---------------------------------------------------------------------------
// Localisation

struct LocalizeOptions {
  double saturation_counts = 65535.0;
};

struct Localization {
  FitResult fit;
  double x_nm = 0.0;
  double y_nm = 0.0;
  double stderr_x_nm = 0.0;
  double stderr_y_nm = 0.0;
};

/// Symmetric 2D Gaussian plus offset. Pixel (row r, col c) sits at
/// (c * pixel, r * pixel).
inline Localization localize_emitter(const Eigen::MatrixXd& image, double pixel_nm, const LocalizeOptions& opt = {}) {
  require(pixel_nm > 0.0, "pixel size must be positive");
  if (image.rows() < 3 || image.cols() < 3) throw InvalidArgument("image must be at least 3x3 pixels");
  if (!(image.sum() > 0.0)) throw InvalidArgument("image is empty");
  if (image.maxCoeff() >= opt.saturation_counts) throw InvalidArgument("image is saturated");
  if (image.minCoeff() < 0.0) throw InvalidArgument("image has negative counts");

  const Eigen::Index rows = image.rows(), cols = image.cols();
  std::vector<Vec2> xy;
  std::vector<double> z;
  xy.reserve(rows * cols);
  z.reserve(rows * cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) {
      xy.push_back({c * pixel_nm, r * pixel_nm});
      z.push_back(image(r, c));
    }

  // Start: offset from the border median, centre from the background-
  // subtracted centroid around the brightest pixel, width from its second
  // moment.
  std::vector<double> border;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      if (r == 0 || c == 0 || r == rows - 1 || c == cols - 1) border.push_back(image(r, c));
  std::nth_element(border.begin(), border.begin() + border.size() / 2, border.end());
  const double offset0 = border[border.size() / 2];
  Eigen::Index pr = 0, pc = 0;
  const double peak = image.maxCoeff(&pr, &pc);
  double sw = 0.0, sx = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double w = std::max(z[i] - offset0, 0.0);
    sw += w;
    sx += w * xy[i].x;
    sy += w * xy[i].y;
  }
  Vec2 c0{pc * pixel_nm, pr * pixel_nm};
  if (sw > 0.0) c0 = {sx / sw, sy / sw};
  double m2 = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double w = std::max(z[i] - offset0, 0.0);
    const double dx = xy[i].x - c0.x, dy = xy[i].y - c0.y;
    m2 += w * (dx * dx + dy * dy);
  }
  const double extent = std::max(rows, cols) * pixel_nm;
  const double sigma0 = std::clamp(sw > 0.0 ? std::sqrt(m2 / (2.0 * sw)) : 2.0 * pixel_nm, pixel_nm, 0.5 * extent);

  const std::array<double, 5> p0{std::max(peak - offset0, 1e-6), c0.x, c0.y, sigma0, offset0};
  const std::array<Bound, 5> bounds{Bound::at_least(0.0), Bound::between(-extent, 2.0 * extent),
                                    Bound::between(-extent, 2.0 * extent), Bound::between(0.1 * pixel_nm, 2.0 * extent),
                                    Bound::none()};
  const auto sigma = poisson_sigma(z);
  FitResult r = nlls_fit(Gaussian2DCurve{}, std::span<const Vec2>(xy), z, sigma, p0, bounds,
                         {"amplitude", "x_nm", "y_nm", "sigma_nm", "offset"});
  return {r, r.params[1], r.params[2], r.std_errors[1], r.std_errors[2]};
}

}  // namespace nvforge
