#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "nvforge/distortion.hpp"
#include "nvforge/random.hpp"

using namespace nvforge;

static std::vector<Vec2> grid_points(int rows, int cols, double pitch) {
  std::vector<Vec2> g;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) g.push_back({c * pitch, r * pitch});
  return g;
}

static Vec2 warp(Vec2 p) {
  const double x = p.x * 1e-3, y = p.y * 1e-3;  // um
  return {p.x + 150.0 + 2.0 * x + 0.8 * y + 0.4 * x * x - 0.3 * x * y + 0.2 * y * y,
          p.y - 80.0 - 1.5 * x + 1.2 * y + 0.1 * x * x + 0.5 * x * y - 0.25 * y * y};
}

TEST(FieldMap, RemovesPureQuadraticWarpExactly) {
  const auto ref = grid_points(25, 20, 5000.0);
  std::vector<Vec2> meas;
  for (const auto& p : ref) meas.push_back(warp(p));
  const auto res = correct_field_distortion(meas, ref);
  for (const auto& r : res) {
    EXPECT_NEAR(r.x, 0.0, 1e-6);
    EXPECT_NEAR(r.y, 0.0, 1e-6);
  }
}

TEST(FieldMap, KeepsLocalScatter) {
  const auto ref = grid_points(25, 20, 5000.0);
  Rng rng(2);
  std::vector<Vec2> meas, noise;
  for (const auto& p : ref) {
    const Vec2 n{rng.normal(0.0, 100.0), rng.normal(0.0, 100.0)};
    noise.push_back(n);
    meas.push_back(warp(p) + n);
  }
  const auto res = correct_field_distortion(meas, ref);
  // Six fitted coefficients per axis remove six of 500 degrees of freedom.
  double s2 = 0.0;
  for (const auto& r : res) s2 += r.x * r.x + r.y * r.y;
  const double expected = 2.0 * 1e4 * (500.0 - 6.0);
  EXPECT_NEAR(s2, expected, 5.0 * std::sqrt(2.0 * 2.0 * 494.0) * 1e4);
}

TEST(FieldMap, RejectsDegenerateGeometry) {
  std::vector<Vec2> line;
  for (int i = 0; i < 20; ++i) line.push_back({i * 100.0, 0.0});
  EXPECT_THROW(fit_field_map(line, line), InvalidArgument);
  const auto few = grid_points(3, 3, 10.0);
  EXPECT_THROW(fit_field_map(few, few), InvalidArgument);
  const auto g = grid_points(4, 4, 10.0);
  std::vector<Vec2> shorter(g.begin(), g.end() - 1);
  EXPECT_THROW(fit_field_map(shorter, g), InvalidArgument);
}
