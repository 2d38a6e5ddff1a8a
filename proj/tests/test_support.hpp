#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "nvforge/nlls.hpp"

namespace nvforge::testing {

/// Central-difference gradient of a curve, step relative to each parameter.
template <class C>
std::vector<double> numeric_gradient(const C& curve, typename C::argument_type x, std::vector<double> p,
                                     double rel_step = 1e-6) {
  std::vector<double> g(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double h = rel_step * std::max(std::fabs(p[k]), 1e-3);
    const double keep = p[k];
    p[k] = keep + h;
    const double up = curve.value(x, p);
    p[k] = keep - h;
    const double down = curve.value(x, p);
    p[k] = keep;
    g[k] = (up - down) / (2.0 * h);
  }
  return g;
}

/// Largest gradient mismatch, relative to the gradient's scale.
template <class C>
double gradient_mismatch(const C& curve, typename C::argument_type x, const std::vector<double>& p) {
  std::vector<double> g(p.size());
  curve.gradient(x, p, g);
  const auto n = numeric_gradient(curve, x, p);
  double scale = 0.0, worst = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) scale = std::max(scale, std::fabs(n[k]));
  for (std::size_t k = 0; k < p.size(); ++k) worst = std::max(worst, std::fabs(g[k] - n[k]));
  return worst / std::max(scale, 1e-12);
}

inline double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double variance(std::span<const double> v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

/// Scratch directory removed at scope exit.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("nvforge-test-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace nvforge::testing
