#pragma once

// Start-stop free intensity cross-correlation of two detector channels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "nvforge/error.hpp"
#include "nvforge/photon_stream.hpp"

namespace nvforge {

/// Binned coincidence counts. Bins are centred on k * bin_width for
/// k = -K..K; a delay exactly on a bin edge belongs to the bin further from
/// zero, so the histogram of (b, a) is the mirror image of (a, b).
struct CorrelationHistogram {
  std::vector<double> bin_edges_ns;  ///< size = counts.size() + 1
  std::vector<std::uint64_t> counts;
  double normalization = 1.0;  ///< expected counts per bin for uncorrelated streams

  std::size_t size() const { return counts.size(); }

  std::vector<double> centres_ns() const {
    std::vector<double> c(counts.size());
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = 0.5 * (bin_edges_ns[i] + bin_edges_ns[i + 1]);
    return c;
  }

  std::vector<double> normalized_values() const {
    std::vector<double> v(counts.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(counts[i]) / normalization;
    return v;
  }

  /// Poisson error of the normalised values, sqrt(max(counts, 1)) / norm.
  std::vector<double> normalized_sigma() const {
    std::vector<double> v(counts.size());
    for (std::size_t i = 0; i < v.size(); ++i)
      v[i] = std::sqrt(std::max(static_cast<double>(counts[i]), 1.0)) / normalization;
    return v;
  }

  void validate() const {
    if (counts.empty()) throw ValidationError("correlation histogram has no bins");
    if (bin_edges_ns.size() != counts.size() + 1)
      throw ValidationError("correlation histogram needs one more edge than bins");
    for (std::size_t i = 1; i < bin_edges_ns.size(); ++i)
      if (!(bin_edges_ns[i] > bin_edges_ns[i - 1]))
        throw ValidationError("bin edges must be increasing (edge " + std::to_string(i) + ")");
    if (!(normalization > 0.0)) throw ValidationError("normalization must be positive");
  }
};

/// Histogram of all delays t_b - t_a with |delay| inside the window, by a
/// sorted two-pointer sweep. Normalised by rate_a * rate_b * bin_width *
/// duration; no background is subtracted.
inline CorrelationHistogram correlate(const PhotonStream& a, const PhotonStream& b, double bin_width_ns,
                                      double window_ns) {
  require(bin_width_ns > 0.0 && window_ns > 0.0, "bin width and window must be positive");
  if (a.empty() || b.empty()) throw InvalidArgument("cannot correlate an empty stream");
  if (a.duration_ps != b.duration_ps) throw InvalidArgument("streams must have equal duration");
  const std::int64_t bw = std::llround(bin_width_ns * 1e3);
  require(bw >= 1, "bin width below the 1 ps time base");
  const std::int64_t half_bins = static_cast<std::int64_t>(std::floor(window_ns * 1e3 / bw + 1e-9));
  const std::int64_t nbins = 2 * half_bins + 1;

  CorrelationHistogram h;
  h.counts.assign(nbins, 0);
  h.bin_edges_ns.resize(nbins + 1);
  for (std::int64_t k = 0; k <= nbins; ++k)
    h.bin_edges_ns[k] = (static_cast<double>(k - half_bins) - 0.5) * static_cast<double>(bw) * 1e-3;

  // |d| < (K + 1/2) bw  <=>  2|d| < (2K + 1) bw
  const std::int64_t reach2 = (2 * half_bins + 1) * bw;
  const auto& ta = a.timestamps_ps;
  const auto& tb = b.timestamps_ps;
  std::size_t lo = 0;
  for (std::int64_t t : ta) {
    while (lo < tb.size() && 2 * (t - tb[lo]) >= reach2) ++lo;
    for (std::size_t j = lo; j < tb.size(); ++j) {
      const std::int64_t d = tb[j] - t;
      if (2 * d >= reach2) break;
      const std::int64_t mag = (2 * (d < 0 ? -d : d) + bw) / (2 * bw);
      const std::int64_t k = d < 0 ? -mag : mag;
      if (k >= -half_bins && k <= half_bins) ++h.counts[k + half_bins];
    }
  }
  h.normalization = static_cast<double>(a.size()) * static_cast<double>(b.size()) * static_cast<double>(bw) /
                    static_cast<double>(a.duration_ps);
  return h;
}

}  // namespace nvforge
