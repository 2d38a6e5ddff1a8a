#pragma once

// Per-row yield statistics of a fabricated grid.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "nvforge/analysis.hpp"
#include "nvforge/error.hpp"
#include "nvforge/fabrication.hpp"
#include "nvforge/geometry.hpp"

namespace nvforge {

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

/// Wilson score interval for k successes in n trials; z = 1.959964 is 95%.
inline Interval wilson_interval(int k, int n, double z = 1.959963984540054) {
  require(n >= 0 && k >= 0 && k <= n, "need 0 <= k <= n");
  if (n == 0) return {0.0, 1.0};
  const double p = static_cast<double>(k) / n;
  const double z2 = z * z;
  const double den = 1.0 + z2 / n;
  const double centre = (p + z2 / (2.0 * n)) / den;
  const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / den;
  // The bounds are exactly 0 and 1 at the extremes; rounding misses them.
  return {k == 0 ? 0.0 : std::max(0.0, centre - half), k == n ? 1.0 : std::min(1.0, centre + half)};
}

/// Probability of exactly one event for a Poisson count of mean mu.
inline double poisson_single_probability(double mu) {
  require(mu >= 0.0, "mean must be non-negative");
  return mu * std::exp(-mu);
}

struct Maximum {
  double argument = 0.0;
  double value = 0.0;
};

/// Golden-section search for the maximum of a unimodal function on [a, b].
template <class F>
Maximum golden_section_maximize(F&& f, double a, double b, double tol = 1e-12) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol * std::max(1.0, std::fabs(a) + std::fabs(b))) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  const double x = 0.5 * (a + b);
  return {x, f(x)};
}

/// Best single-emitter probability any Poisson count model can give.
inline Maximum max_poisson_single_probability() {
  return golden_section_maximize([](double mu) { return poisson_single_probability(mu); }, 0.0, 20.0);
}

/// What the characterisation concluded about one site, with the image-plane
/// positions of its NVs for the pair/double split.
struct SiteClassification {
  SiteIndex site;
  EmitterCount count = EmitterCount::indeterminate;
  bool empty = true;  ///< no emitter found at all
  std::vector<Vec2> nv_image_xy_nm;
};

struct RowStats {
  int row = 0;
  double pulse_energy_nj = 0.0;
  int sites = 0;
  int empty = 0;
  int singles = 0;
  int doubles = 0;  ///< two NVs within the resolution
  int pairs = 0;    ///< two NVs resolved apart
  int triples = 0;
  int indeterminate = 0;
  int total = 0;  ///< singles + 2 (doubles + pairs) + 3 triples
  double single_probability = 0.0;
  Interval single_ci;
};

inline constexpr double kDefaultResolutionNm = 500.0;

/// Largest pairwise image-plane separation of a site's NVs.
inline double max_separation_nm(std::span<const Vec2> xy) {
  double best = 0.0;
  for (std::size_t i = 0; i < xy.size(); ++i)
    for (std::size_t j = i + 1; j < xy.size(); ++j) best = std::max(best, (xy[i] - xy[j]).norm());
  return best;
}

inline std::vector<RowStats> row_statistics(std::span<const SiteClassification> sites, const PulseGridSpec& spec,
                                            double resolution_nm = kDefaultResolutionNm) {
  spec.validate();
  require(resolution_nm >= 0.0, "resolution must be non-negative");
  if (sites.size() != static_cast<std::size_t>(spec.site_count()))
    throw InvalidArgument("expected one classification per site (" + std::to_string(spec.site_count()) + ")");
  std::vector<RowStats> rows(spec.rows);
  for (int r = 0; r < spec.rows; ++r) {
    rows[r].row = r;
    rows[r].pulse_energy_nj = spec.energies_nj[r];
  }
  std::vector<int> seen(spec.site_count(), 0);
  for (const auto& s : sites) {
    if (s.site.row < 0 || s.site.row >= spec.rows || s.site.col < 0 || s.site.col >= spec.cols)
      throw InvalidArgument("classification for a site outside the grid");
    if (seen[static_cast<std::size_t>(s.site.row) * spec.cols + s.site.col]++)
      throw InvalidArgument("duplicate classification for a site");
    RowStats& row = rows[s.site.row];
    ++row.sites;
    if (s.empty) {
      ++row.empty;
      continue;
    }
    switch (s.count) {
      case EmitterCount::one: ++row.singles; break;
      case EmitterCount::two:
        if (max_separation_nm(s.nv_image_xy_nm) > resolution_nm)
          ++row.pairs;
        else
          ++row.doubles;
        break;
      case EmitterCount::three: ++row.triples; break;
      case EmitterCount::indeterminate: ++row.indeterminate; break;
    }
  }
  for (auto& row : rows) {
    row.total = row.singles + 2 * (row.doubles + row.pairs) + 3 * row.triples;
    row.single_probability = row.sites > 0 ? static_cast<double>(row.singles) / row.sites : 0.0;
    row.single_ci = wilson_interval(row.singles, row.sites);
  }
  return rows;
}

}  // namespace nvforge
