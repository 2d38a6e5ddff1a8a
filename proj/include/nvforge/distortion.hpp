#pragma once

// Removal of a smooth quadratic image-field distortion from measured emitter
// positions, by least squares against their intended grid positions.

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "nvforge/error.hpp"
#include "nvforge/geometry.hpp"

namespace nvforge {

/// u = a0 + a1 x + a2 y + a3 x^2 + a4 x y + a5 y^2, one set per axis.
/// Coordinates are centred and scaled internally so the normal equations stay
/// well conditioned for micrometre-scale grids given in nm.
struct QuadraticFieldMap {
  Eigen::Matrix<double, 6, 1> cx = Eigen::Matrix<double, 6, 1>::Zero();
  Eigen::Matrix<double, 6, 1> cy = Eigen::Matrix<double, 6, 1>::Zero();
  Vec2 origin;
  double scale = 1.0;

  static Eigen::Matrix<double, 1, 6> basis(double x, double y) {
    Eigen::Matrix<double, 1, 6> b;
    b << 1.0, x, y, x * x, x * y, y * y;
    return b;
  }

  Vec2 operator()(Vec2 p) const {
    const auto b = basis((p.x - origin.x) / scale, (p.y - origin.y) / scale);
    return {b.dot(cx), b.dot(cy)};
  }
};

/// Least-squares quadratic map from reference to measured positions.
inline QuadraticFieldMap fit_field_map(std::span<const Vec2> measured, std::span<const Vec2> reference) {
  if (measured.size() != reference.size()) throw InvalidArgument("measured and reference sizes differ");
  if (measured.size() < 12) throw InvalidArgument("field correction needs at least 12 point pairs");
  const auto n = static_cast<Eigen::Index>(reference.size());

  QuadraticFieldMap map;
  double mx = 0.0, my = 0.0;
  for (const auto& r : reference) {
    mx += r.x;
    my += r.y;
  }
  map.origin = {mx / n, my / n};
  double s = 0.0;
  for (const auto& r : reference) s = std::max(s, (r - map.origin).norm());
  map.scale = s > 0.0 ? s : 1.0;

  Eigen::MatrixXd a(n, 6);
  Eigen::VectorXd bx(n), by(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    a.row(i) = QuadraticFieldMap::basis((reference[i].x - map.origin.x) / map.scale,
                                        (reference[i].y - map.origin.y) / map.scale);
    bx[i] = measured[i].x;
    by[i] = measured[i].y;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  qr.setThreshold(1e-10);
  if (qr.rank() < 6) throw InvalidArgument("reference geometry cannot determine a quadratic map (rank deficient)");
  map.cx = qr.solve(bx);
  map.cy = qr.solve(by);
  return map;
}

/// measured - fitted(reference), i.e. what is left after the distortion.
inline std::vector<Vec2> correct_field_distortion(std::span<const Vec2> measured, std::span<const Vec2> reference) {
  const QuadraticFieldMap map = fit_field_map(measured, reference);
  std::vector<Vec2> residual(measured.size());
  for (std::size_t i = 0; i < measured.size(); ++i) residual[i] = measured[i] - map(reference[i]);
  return residual;
}

}  // namespace nvforge
