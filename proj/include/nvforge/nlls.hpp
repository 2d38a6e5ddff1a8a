#pragma once

// Damped Gauss-Newton (Levenberg-Marquardt) weighted least squares with box
// bounds handled by a smooth parameter transformation.
//
// Two model shapes are accepted:
//   * a VectorModel evaluates all predictions (and optionally the Jacobian)
//     at once, for models such as a discrete convolution;
//   * a Curve maps one abscissa to one value and is lifted with CurveModel.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nvforge/error.hpp"

namespace nvforge {

struct Bound {
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();

  static Bound none() { return {}; }
  static Bound at_least(double lo) { return {lo, std::numeric_limits<double>::infinity()}; }
  static Bound between(double lo, double hi) { return {lo, hi}; }

  bool contains(double v) const { return v >= lower && v <= upper; }
};

enum class FitStatus {
  converged,
  max_iterations,
  singular_jacobian,
  no_signal,  ///< model-specific: the feature being fitted is not present
};

inline std::string_view to_string(FitStatus s) {
  switch (s) {
    case FitStatus::converged: return "converged";
    case FitStatus::max_iterations: return "max_iterations";
    case FitStatus::singular_jacobian: return "singular_jacobian";
    case FitStatus::no_signal: return "no_signal";
  }
  return "unknown";
}

struct FitResult {
  std::vector<std::string> names;
  Eigen::VectorXd params;
  Eigen::VectorXd std_errors;
  Eigen::MatrixXd covariance;
  double chi2 = 0.0;
  double chi2_reduced = 0.0;
  int dof = 0;
  int iterations = 0;
  FitStatus status = FitStatus::max_iterations;

  bool converged() const { return status == FitStatus::converged; }

  double value(std::string_view name) const { return params[index_of(name)]; }
  double error(std::string_view name) const { return std_errors[index_of(name)]; }

  Eigen::Index index_of(std::string_view name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return static_cast<Eigen::Index>(i);
    throw InvalidArgument("no fit parameter named " + std::string(name));
  }
};

struct FitOptions {
  int max_iterations = 1000;
  double lambda0 = 1e-3;
  double param_tolerance = 1e-8;  ///< relative parameter change
  double cost_tolerance = 1e-10;  ///< relative cost change
  /// Scale the covariance by the reduced chi^2 (for data without known sigma).
  bool scale_covariance = false;
};

template <class M>
concept VectorModel = requires(const M& m, const Eigen::VectorXd& p, Eigen::VectorXd& f,
                               Eigen::MatrixXd* jac) {
  { m.parameter_count() } -> std::convertible_to<int>;
  { m.point_count() } -> std::convertible_to<int>;
  m.evaluate(p, f, jac);
};

/// A scalar curve y = f(x; p) with an analytic gradient.
template <class C>
concept Curve = requires(const C& c, typename C::argument_type x, std::span<const double> p,
                         std::span<double> g) {
  { C::arity } -> std::convertible_to<int>;
  { c.value(x, p) } -> std::convertible_to<double>;
  c.gradient(x, p, g);
};

template <Curve C>
class CurveModel {
 public:
  using X = typename C::argument_type;

  CurveModel(C curve, std::span<const X> xs) : curve_(std::move(curve)), xs_(xs) {}

  int parameter_count() const { return C::arity; }
  int point_count() const { return static_cast<int>(xs_.size()); }

  void evaluate(const Eigen::VectorXd& p, Eigen::VectorXd& f, Eigen::MatrixXd* jac) const {
    const std::span<const double> ps(p.data(), static_cast<std::size_t>(p.size()));
    f.resize(point_count());
    if (jac) jac->resize(point_count(), C::arity);
    double g[C::arity];
    for (int i = 0; i < point_count(); ++i) {
      f[i] = curve_.value(xs_[i], ps);
      if (jac) {
        curve_.gradient(xs_[i], ps, std::span<double>(g, C::arity));
        for (int k = 0; k < C::arity; ++k) (*jac)(i, k) = g[k];
      }
    }
  }

 private:
  C curve_;
  std::span<const X> xs_;
};

namespace detail {

// Maps an unconstrained internal coordinate q to a bounded parameter p.
struct BoundTransform {
  Bound b;

  bool has_lower() const { return std::isfinite(b.lower); }
  bool has_upper() const { return std::isfinite(b.upper); }

  double to_external(double q) const {
    if (has_lower() && has_upper()) return b.lower + 0.5 * (b.upper - b.lower) * (std::sin(q) + 1.0);
    if (has_lower()) return b.lower - 1.0 + std::sqrt(q * q + 1.0);
    if (has_upper()) return b.upper + 1.0 - std::sqrt(q * q + 1.0);
    return q;
  }

  // True when q sits on the flat point of the map that corresponds to a
  // bound; `lower` tells which one.
  bool at_bound(double q, bool& lower) const {
    if (has_lower() && has_upper()) {
      if (std::fabs(std::cos(q)) >= 1e-4) return false;
      lower = std::sin(q) < 0.0;
      return true;
    }
    if (!has_lower() && !has_upper()) return false;
    lower = has_lower();
    return std::fabs(q) < 1e-4;
  }

  double derivative(double q) const {
    if (has_lower() && has_upper()) return 0.5 * (b.upper - b.lower) * std::cos(q);
    if (has_lower()) return q / std::sqrt(q * q + 1.0);
    if (has_upper()) return -q / std::sqrt(q * q + 1.0);
    return 1.0;
  }

  // Starting points on a bound are nudged inside, where the map is locally
  // invertible.
  double to_internal(double p) const {
    if (has_lower() && has_upper()) {
      const double s = std::clamp(2.0 * (p - b.lower) / (b.upper - b.lower) - 1.0, -1.0 + 1e-6, 1.0 - 1e-6);
      return std::asin(s);
    }
    if (has_lower()) {
      const double u = p - b.lower + 1.0;
      return std::max(std::sqrt(std::max(u * u - 1.0, 0.0)), 1e-3);
    }
    if (has_upper()) {
      const double u = b.upper - p + 1.0;
      return std::max(std::sqrt(std::max(u * u - 1.0, 0.0)), 1e-3);
    }
    return p;
  }
};

}  // namespace detail

/// Minimises sum(((y - f(p)) / sigma)^2).
///
/// Converged when an accepted step changes every parameter by less than
/// param_tolerance (relative) or the cost by less than cost_tolerance
/// (relative), or when no step can lower the cost any further. The
/// covariance is (J^T W J)^-1 at the optimum; a rank-deficient J^T W J is
/// reported as singular_jacobian with infinite errors on the parameters that
/// span its null space.
template <VectorModel M>
FitResult nlls_fit(const M& model, std::span<const double> y, std::span<const double> sigma,
                   std::span<const double> init, std::span<const Bound> bounds,
                   std::vector<std::string> names = {}, const FitOptions& opt = {}) {
  const int n = model.point_count();
  const int k = model.parameter_count();
  if (n == 0) throw InvalidArgument("no data to fit");
  if (static_cast<int>(y.size()) != n || static_cast<int>(sigma.size()) != n)
    throw InvalidArgument("data and sigma sizes must match the model");
  if (static_cast<int>(init.size()) != k) throw InvalidArgument("initial guess has wrong size");
  if (!bounds.empty() && static_cast<int>(bounds.size()) != k) throw InvalidArgument("bounds have wrong size");

  std::vector<detail::BoundTransform> tr(k);
  for (int i = 0; i < k; ++i) {
    if (!bounds.empty()) tr[i].b = bounds[i];
    if (!tr[i].b.contains(init[i])) throw InvalidArgument("initial guess outside bounds");
  }
  if (names.empty())
    for (int i = 0; i < k; ++i) names.push_back("p" + std::to_string(i));

  Eigen::VectorXd w(n);
  Eigen::VectorXd yv(n);
  for (int i = 0; i < n; ++i) {
    if (!(sigma[i] > 0.0)) throw InvalidArgument("sigma must be positive");
    w[i] = 1.0 / (sigma[i] * sigma[i]);
    yv[i] = y[i];
  }

  auto external = [&](const Eigen::VectorXd& q) {
    Eigen::VectorXd p(k);
    for (int i = 0; i < k; ++i) p[i] = tr[i].to_external(q[i]);
    return p;
  };
  auto cost_of = [&](const Eigen::VectorXd& f) { return ((yv - f).array().square() * w.array()).sum(); };

  Eigen::VectorXd q(k);
  for (int i = 0; i < k; ++i) q[i] = tr[i].to_internal(init[i]);
  Eigen::VectorXd p = external(q);
  Eigen::VectorXd f;
  Eigen::MatrixXd jac;
  model.evaluate(p, f, &jac);
  double cost = cost_of(f);
  if (!std::isfinite(cost)) throw InvalidArgument("model is not finite at the initial guess");

  FitResult res;
  res.names = std::move(names);
  double lambda = opt.lambda0;
  bool done = cost == 0.0;
  int it = 0;
  Eigen::VectorXd f_try;
  Eigen::MatrixXd jac_try;
  for (; it < opt.max_iterations && !done; ++it) {
    Eigen::MatrixXd jq = jac;
    for (int i = 0; i < k; ++i) jq.col(i) *= tr[i].derivative(q[i]);
    Eigen::MatrixXd a = jq.transpose() * w.asDiagonal() * jq;
    Eigen::VectorXd g = jq.transpose() * (w.array() * (yv - f).array()).matrix();
    // A parameter resting on a bound that the descent direction pushes
    // against is held there for this step. Its transformed Jacobian column
    // vanishes, and stepping it anyway stalls the damping schedule.
    const Eigen::VectorXd gp = jac.transpose() * (w.array() * (yv - f).array()).matrix();
    for (int i = 0; i < k; ++i) {
      bool lower = false;
      if (tr[i].at_bound(q[i], lower) && (lower ? gp[i] <= 0.0 : gp[i] >= 0.0)) {
        a.row(i).setZero();
        a.col(i).setZero();
        a(i, i) = 1.0;
        g[i] = 0.0;
      }
    }
    const double diag_floor = std::max(a.diagonal().maxCoeff(), 1.0) * 1e-12;

    bool accepted = false;
    while (!accepted) {
      Eigen::MatrixXd damped = a;
      for (int i = 0; i < k; ++i) damped(i, i) += lambda * std::max(a(i, i), diag_floor);
      const Eigen::VectorXd step = damped.ldlt().solve(g);
      const Eigen::VectorXd q_try = q + step;
      const Eigen::VectorXd p_try = external(q_try);
      double cost_try = std::numeric_limits<double>::infinity();
      if (step.allFinite()) {
        model.evaluate(p_try, f_try, &jac_try);
        cost_try = cost_of(f_try);
      }
      if (std::isfinite(cost_try) && cost_try < cost) {
        const double rel_cost = (cost - cost_try) / cost;
        double rel_param = 0.0;
        for (int i = 0; i < k; ++i)
          rel_param = std::max(rel_param, std::fabs(p_try[i] - p[i]) / std::max(std::fabs(p_try[i]), 1e-300));
        q = q_try;
        p = p_try;
        std::swap(f, f_try);
        std::swap(jac, jac_try);
        cost = cost_try;
        // Tiny steps taken under heavy damping say nothing about convergence.
        if (lambda <= 1.0 && (rel_param < opt.param_tolerance || rel_cost < opt.cost_tolerance))
          done = true;
        if (cost == 0.0) done = true;
        lambda = std::max(lambda / 10.0, 1e-12);
        accepted = true;
      } else {
        lambda *= 10.0;
        if (lambda > 1e16) {
          done = true;  // no descent direction left: stationary to working precision
          break;
        }
        ++it;
        if (it >= opt.max_iterations) break;
      }
    }
  }

  res.params = p;
  res.iterations = it;
  res.chi2 = cost;
  res.dof = std::max(n - k, 0);
  res.chi2_reduced = cost / std::max(n - k, 1);
  res.status = done ? FitStatus::converged : FitStatus::max_iterations;

  const Eigen::MatrixXd info = jac.transpose() * w.asDiagonal() * jac;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(info);
  const Eigen::VectorXd ev = es.eigenvalues();
  const double emax = std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(k);
  std::vector<bool> undetermined(k, false);
  bool singular = false;
  for (int j = 0; j < k; ++j) {
    if (ev[j] > 1e-13 * emax && ev[j] > 0.0) {
      inv[j] = 1.0 / ev[j];
    } else {
      singular = true;
      for (int i = 0; i < k; ++i)
        if (std::fabs(es.eigenvectors()(i, j)) > 1e-6) undetermined[i] = true;
    }
  }
  res.covariance = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
  if (opt.scale_covariance) res.covariance *= res.chi2_reduced;
  res.std_errors.resize(k);
  for (int i = 0; i < k; ++i)
    res.std_errors[i] = undetermined[i] ? std::numeric_limits<double>::infinity()
                                    : std::sqrt(std::max(res.covariance(i, i), 0.0));
  if (singular && res.status == FitStatus::converged) res.status = FitStatus::singular_jacobian;
  return res;
}

/// Convenience overload for pointwise curves.
template <Curve C>
FitResult nlls_fit(const C& curve, std::span<const typename C::argument_type> x,
                   std::span<const double> y, std::span<const double> sigma,
                   std::span<const double> init, std::span<const Bound> bounds,
                   std::vector<std::string> names = {}, const FitOptions& opt = {}) {
  return nlls_fit(CurveModel<C>(curve, x), y, sigma, init, bounds, std::move(names), opt);
}

/// Poisson standard deviation with a guard at zero.
inline std::vector<double> poisson_sigma(std::span<const double> counts) {
  std::vector<double> s(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) s[i] = std::sqrt(std::max(std::fabs(counts[i]), 1.0));
  return s;
}

}  // namespace nvforge
