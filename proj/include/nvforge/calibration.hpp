#pragma once

// Least-squares calibration of the vacancy-yield law against a per-row
// NV-count trend.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "nvforge/anneal.hpp"
#include "nvforge/error.hpp"
#include "nvforge/fabrication.hpp"
#include "nvforge/nlls.hpp"

namespace nvforge {

struct YieldTarget {
  double energy_nj = 0.0;
  double mean_nv_per_site = 0.0;
};

/// Trend used for the shipped Poisson defaults: mean NV count per site rising
/// from the threshold row to the graphitization threshold, anchored at one NV
/// per site at 25.7 nJ.
inline const std::vector<YieldTarget>& poisson_yield_targets() {
  static const std::vector<YieldTarget> t{{19.6, 0.25}, {22.5, 0.55}, {25.7, 1.0},
                                          {29.0, 1.6},  {32.6, 2.3},  {36.4, 3.0}};
  return t;
}

/// Trend for the binomial (two-trap) preset. Values stay below the
/// saturation of n_traps * survival * conversion so every target constrains
/// the fit.
inline const std::vector<YieldTarget>& binomial_yield_targets() {
  static const std::vector<YieldTarget> t{{19.6, 0.15}, {22.5, 0.4}, {25.7, 0.7}, {29.0, 0.9}};
  return t;
}

/// Expected NV count per site implied by the yield law and anneal survival,
/// below graphitization.
inline double expected_nv_per_site(double energy_nj, const YieldModelParams& p, const AnnealConfig& a) {
  return expected_vacancy_count(energy_nj, p) * a.nv_probability();
}

/// Expected NV count per site as a function of energy; parameters gamma, scale.
struct YieldTrendCurve {
  using argument_type = double;
  static constexpr int arity = 2;
  double threshold, q, cap;
  double value(double en, std::span<const double> p) const {
    return std::min(p[1] * std::pow((en - threshold) / threshold, p[0]), cap) * q;
  }
  void gradient(double en, std::span<const double> p, std::span<double> g) const {
    const double u = (en - threshold) / threshold;
    const double m = p[1] * std::pow(u, p[0]);
    if (m >= cap) {
      g[0] = g[1] = 0.0;
      return;
    }
    g[0] = m * std::log(u) * q;
    g[1] = std::pow(u, p[0]) * q;
  }
};

/// Fits gamma and scale so expected_nv_per_site matches the targets. The
/// scale is only determined jointly with the anneal's NV probability, which
/// is held fixed here.
inline YieldModelParams calibrate_yield(std::span<const YieldTarget> targets, YieldModelParams params,
                                        const AnnealConfig& anneal) {
  params.validate();
  anneal.validate();
  if (targets.size() < 2) throw InvalidArgument("calibration needs at least 2 targets");
  const double q = anneal.nv_probability();
  require(q > 0.0, "anneal NV probability is zero; yield cannot be calibrated");
  std::vector<double> e, y, s;
  for (const auto& t : targets) {
    require(t.energy_nj > params.threshold_nj, "calibration energies must exceed the threshold");
    require(t.mean_nv_per_site > 0.0, "calibration targets must be positive");
    e.push_back(t.energy_nj);
    y.push_back(t.mean_nv_per_site);
    s.push_back(1.0);
  }

  const double cap = params.count_model == CountModel::binomial ? static_cast<double>(params.n_traps)
                                                                 : std::numeric_limits<double>::infinity();
  const YieldTrendCurve trend{params.threshold_nj, q, cap};
  const std::array<double, 2> p0{params.gamma, params.scale};
  const std::array<Bound, 2> bounds{Bound::between(0.05, 20.0), Bound::at_least(1e-9)};
  FitOptions opt;
  opt.scale_covariance = true;
  const FitResult r = nlls_fit(trend, std::span<const double>(e), y, s, p0, bounds, {"gamma", "scale"}, opt);
  if (!r.converged()) throw FitError("yield calibration did not converge");
  params.gamma = r.params[0];
  params.scale = r.params[1];
  return params;
}

/// Two-trap binomial preset, calibrated on binomial_yield_targets() with the
/// default anneal. Unlike any Poisson law it can put more than e^-1 of the
/// sites at exactly one NV.
inline YieldModelParams two_trap_yield_params() {
  YieldModelParams p;
  p.count_model = CountModel::binomial;
  p.n_traps = 2;
  p.gamma = 1.224741978;
  p.scale = 2.394215432;
  return p;
}

}  // namespace nvforge
