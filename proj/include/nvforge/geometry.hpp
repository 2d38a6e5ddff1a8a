#pragma once

#include <cmath>
#include <compare>

namespace nvforge {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  double norm() const { return std::hypot(x, y); }
  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Vec2 xy() const { return {x, y}; }
  friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend bool operator==(const Vec3&, const Vec3&) = default;
};

/// (row, col) position of a write site in the pulse grid.
struct SiteIndex {
  int row = 0;
  int col = 0;

  friend auto operator<=>(const SiteIndex&, const SiteIndex&) = default;
};

/// FWHM of a Gaussian to its standard deviation.
inline double fwhm_to_sigma(double fwhm) { return fwhm / (2.0 * std::sqrt(2.0 * std::log(2.0))); }

}  // namespace nvforge
