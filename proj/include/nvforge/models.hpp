#pragma once

// Parametric curves fitted by the analysis routines. Each curve has an
// analytic gradient; the test suite checks every one against central finite
// differences.

#include <Eigen/Dense>
#include <cmath>
#include <span>
#include <vector>

#include "nvforge/geometry.hpp"
#include "nvforge/photophysics.hpp"

namespace nvforge {

/// y = a + b x
struct LinearCurve {
  using argument_type = double;
  static constexpr int arity = 2;
  double value(double x, std::span<const double> p) const { return p[0] + p[1] * x; }
  void gradient(double x, std::span<const double>, std::span<double> g) const {
    g[0] = 1.0;
    g[1] = x;
  }
};

/// Three-level autocorrelation exactly as published:
/// g2_0 + 1 - c exp(-|t|/tau2) + (c - 1) exp(-|t|/tau3).
/// It equals g2_0 at t = 0 and tends to g2_0 + 1 at large |t|.
/// Parameters: g2_0, c, tau2, tau3.
struct G2PrintedCurve {
  using argument_type = double;
  static constexpr int arity = 4;
  double value(double t, std::span<const double> p) const {
    const double a = std::fabs(t);
    return p[0] + 1.0 - p[1] * std::exp(-a / p[2]) + (p[1] - 1.0) * std::exp(-a / p[3]);
  }
  void gradient(double t, std::span<const double> p, std::span<double> g) const {
    const double a = std::fabs(t);
    const double e2 = std::exp(-a / p[2]), e3 = std::exp(-a / p[3]);
    g[0] = 1.0;
    g[1] = -e2 + e3;
    g[2] = -p[1] * e2 * a / (p[2] * p[2]);
    g[3] = (p[1] - 1.0) * e3 * a / (p[3] * p[3]);
  }
};

/// Same shape rescaled to the unit baseline of a normalised histogram:
/// g2_0 + (1 - g2_0) [1 - c exp(-|t|/tau2) + (c - 1) exp(-|t|/tau3)].
/// Equal to the published form when g2_0 = 0, and the exact law for N
/// identical emitters or uncorrelated background (g2_0 = 1 - rho^2 / N).
struct G2RescaledCurve {
  using argument_type = double;
  static constexpr int arity = 4;
  double value(double t, std::span<const double> p) const {
    const double a = std::fabs(t);
    const double h = 1.0 - p[1] * std::exp(-a / p[2]) + (p[1] - 1.0) * std::exp(-a / p[3]);
    return p[0] + (1.0 - p[0]) * h;
  }
  void gradient(double t, std::span<const double> p, std::span<double> g) const {
    const double a = std::fabs(t);
    const double e2 = std::exp(-a / p[2]), e3 = std::exp(-a / p[3]);
    const double h = 1.0 - p[1] * e2 + (p[1] - 1.0) * e3;
    const double s = 1.0 - p[0];
    g[0] = 1.0 - h;
    g[1] = s * (-e2 + e3);
    g[2] = s * (-p[1] * e2 * a / (p[2] * p[2]));
    g[3] = s * ((p[1] - 1.0) * e3 * a / (p[3] * p[3]));
  }
};

/// One histogram bin on the delay axis, ns.
struct DelayBin {
  double lo = 0.0;
  double hi = 0.0;
};

namespace detail {

// Antiderivative of exp(-|t|/tau) that is odd in t, and its tau derivative.
inline double abs_exp_integral(double t, double tau) {
  const double a = std::fabs(t);
  return std::copysign(-tau * std::expm1(-a / tau), t);
}
inline double abs_exp_integral_dtau(double t, double tau) {
  const double a = std::fabs(t);
  const double e = std::exp(-a / tau);
  return std::copysign(-std::expm1(-a / tau) - (a / tau) * e, t);
}

}  // namespace detail

/// Either g2 form averaged exactly over a histogram bin, which is what a
/// binned coincidence count estimates. Removes the bias of sampling the
/// cusp at zero delay at the bin centre. Parameters: g2_0, c, tau2, tau3.
struct G2BinAveragedCurve {
  using argument_type = DelayBin;
  static constexpr int arity = 4;
  bool rescaled = true;

  double value(DelayBin b, std::span<const double> p) const {
    const double w = b.hi - b.lo;
    const double e2 = (detail::abs_exp_integral(b.hi, p[2]) - detail::abs_exp_integral(b.lo, p[2])) / w;
    const double e3 = (detail::abs_exp_integral(b.hi, p[3]) - detail::abs_exp_integral(b.lo, p[3])) / w;
    const double h = 1.0 - p[1] * e2 + (p[1] - 1.0) * e3;
    return rescaled ? p[0] + (1.0 - p[0]) * h : p[0] + h;
  }
  void gradient(DelayBin b, std::span<const double> p, std::span<double> g) const {
    const double w = b.hi - b.lo;
    const double e2 = (detail::abs_exp_integral(b.hi, p[2]) - detail::abs_exp_integral(b.lo, p[2])) / w;
    const double e3 = (detail::abs_exp_integral(b.hi, p[3]) - detail::abs_exp_integral(b.lo, p[3])) / w;
    const double d2 = (detail::abs_exp_integral_dtau(b.hi, p[2]) - detail::abs_exp_integral_dtau(b.lo, p[2])) / w;
    const double d3 = (detail::abs_exp_integral_dtau(b.hi, p[3]) - detail::abs_exp_integral_dtau(b.lo, p[3])) / w;
    const double h = 1.0 - p[1] * e2 + (p[1] - 1.0) * e3;
    const double s = rescaled ? 1.0 - p[0] : 1.0;
    g[0] = rescaled ? 1.0 - h : 1.0;
    g[1] = s * (-e2 + e3);
    g[2] = s * (-p[1] * d2);
    g[3] = s * ((p[1] - 1.0) * d3);
  }
};

/// f(r) = A r exp(-r^2 / r0^2). Parameters: A, r0.
struct DisplacementCurve {
  using argument_type = double;
  static constexpr int arity = 2;
  double value(double r, std::span<const double> p) const {
    return p[0] * r * std::exp(-r * r / (p[1] * p[1]));
  }
  void gradient(double r, std::span<const double> p, std::span<double> g) const {
    const double e = r * std::exp(-r * r / (p[1] * p[1]));
    g[0] = e;
    g[1] = p[0] * e * 2.0 * r * r / (p[1] * p[1] * p[1]);
  }
};

/// offset + amplitude (w/2)^2 / ((f - f0)^2 + (w/2)^2).
/// Parameters: centre, fwhm, amplitude, offset.
struct LorentzianCurve {
  using argument_type = double;
  static constexpr int arity = 4;
  double value(double f, std::span<const double> p) const {
    return p[3] + p[2] * lorentzian_shape(f - p[0], p[1]);
  }
  void gradient(double f, std::span<const double> p, std::span<double> g) const {
    const double h = 0.5 * p[1];
    const double d = f - p[0];
    const double den = d * d + h * h;
    const double den2 = den * den;
    g[0] = p[2] * h * h * 2.0 * d / den2;
    g[1] = p[2] * h * d * d / den2;  // 0.5 * dL/dh, dL/dh = 2 h d^2 / den^2
    g[2] = h * h / den;
    g[3] = 1.0;
  }
};

/// y1 exp(-(tau/T2)^n) + y0. Parameters: y0, y1, T2, n.
struct EchoCurve {
  using argument_type = double;
  static constexpr int arity = 4;
  double value(double tau, std::span<const double> p) const {
    return echo_intensity(tau, p[2], p[3], p[0], p[1]);
  }
  void gradient(double tau, std::span<const double> p, std::span<double> g) const {
    const double ratio = tau / p[2];
    const double u = std::pow(ratio, p[3]);
    const double e = std::exp(-u);
    g[0] = 1.0;
    g[1] = e;
    g[2] = p[1] * e * u * p[3] / p[2];
    g[3] = ratio > 0.0 ? -p[1] * e * u * std::log(ratio) : 0.0;
  }
};

/// offset + amplitude exp(-|x - c|^2 / (2 sigma^2)).
/// Parameters: amplitude, x0, y0, sigma, offset.
struct Gaussian2DCurve {
  using argument_type = Vec2;
  static constexpr int arity = 5;
  double value(Vec2 x, std::span<const double> p) const {
    const double dx = x.x - p[1], dy = x.y - p[2];
    return p[4] + p[0] * std::exp(-(dx * dx + dy * dy) / (2.0 * p[3] * p[3]));
  }
  void gradient(Vec2 x, std::span<const double> p, std::span<double> g) const {
    const double dx = x.x - p[1], dy = x.y - p[2];
    const double s2 = p[3] * p[3];
    const double rho2 = dx * dx + dy * dy;
    const double e = std::exp(-rho2 / (2.0 * s2));
    g[0] = e;
    g[1] = p[0] * e * dx / s2;
    g[2] = p[0] * e * dy / s2;
    g[3] = p[0] * e * rho2 / (s2 * p[3]);
    g[4] = 1.0;
  }
};

/// Discrete convolution of a sampled IRF with a single-exponential decay.
/// Each kernel element is the exact probability that an emission starting
/// uniformly inside an IRF bin lands m bins later, so the model matches a
/// histogram of (IRF delay + exponential delay). Parameters: T1, amplitude.
class TrplModel {
 public:
  TrplModel(const SampledIrf& irf, int bins) : dt_(irf.bin_width_ns), bins_(bins) {
    for (std::size_t j = 0; j < irf.weights.size() && static_cast<int>(j) < bins; ++j)
      if (irf.weights[j] > 0.0) support_.push_back({static_cast<int>(j), irf.weights[j]});
  }

  int parameter_count() const { return 2; }
  int point_count() const { return bins_; }

  /// Kernel element K_m(x) with x = dt / T1, and dK_m/dx.
  static void kernel(int m, double x, double& k, double& dk) {
    if (m < 0) {
      k = dk = 0.0;
    } else if (m == 0) {
      const double em = std::exp(-x);
      k = 1.0 - (-std::expm1(-x)) / x;
      dk = (-std::expm1(-x) - x * em) / (x * x);
    } else {
      // e^{-m x} (e^x + e^{-x} - 2) / x, written with expm1 for small x.
      const double num = std::expm1(x) + std::expm1(-x);
      const double dnum = std::exp(x) - std::exp(-x);
      const double gx = num / x;
      const double dgx = (dnum * x - num) / (x * x);
      const double em = std::exp(-m * x);
      k = em * gx;
      dk = em * (dgx - m * gx);
    }
  }

  void evaluate(const Eigen::VectorXd& p, Eigen::VectorXd& f, Eigen::MatrixXd* jac) const {
    const double t1 = p[0], amp = p[1];
    const double x = dt_ / t1;
    std::vector<double> k(bins_), dk(bins_);
    for (int m = 0; m < bins_; ++m) kernel(m, x, k[m], dk[m]);
    f.setZero(bins_);
    Eigen::VectorXd dconv = Eigen::VectorXd::Zero(bins_);
    for (const auto& [j, w] : support_)
      for (int i = j; i < bins_; ++i) {
        f[i] += w * k[i - j];
        dconv[i] += w * dk[i - j];
      }
    if (jac) {
      jac->resize(bins_, 2);
      jac->col(0) = amp * dconv * (-x / t1);
      jac->col(1) = f;
    }
    f *= amp;
  }

 private:
  struct Tap {
    int offset;
    double weight;
  };
  double dt_;
  int bins_;
  std::vector<Tap> support_;
};

}  // namespace nvforge
