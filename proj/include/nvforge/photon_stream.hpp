#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nvforge/error.hpp"
#include "nvforge/random.hpp"

namespace nvforge {

/// Detection events of one channel, picosecond integer time base.
struct PhotonStream {
  std::uint8_t channel = 0;
  std::vector<std::int64_t> timestamps_ps;  ///< strictly increasing
  std::int64_t duration_ps = 0;             ///< all timestamps lie in [0, duration]

  std::size_t size() const { return timestamps_ps.size(); }
  bool empty() const { return timestamps_ps.empty(); }

  /// Mean count rate in counts per ps.
  double rate_per_ps() const {
    return duration_ps > 0 ? static_cast<double>(size()) / static_cast<double>(duration_ps) : 0.0;
  }

  /// Throws ValidationError naming the first record that breaks an invariant.
  void validate() const {
    if (duration_ps < 0) throw ValidationError("stream duration is negative");
    for (std::size_t i = 0; i < timestamps_ps.size(); ++i) {
      const std::int64_t t = timestamps_ps[i];
      if (t < 0 || t > duration_ps)
        throw ValidationError("record " + std::to_string(i) + ": timestamp " + std::to_string(t) +
                              " ps outside [0, " + std::to_string(duration_ps) + "]");
      if (i > 0 && t <= timestamps_ps[i - 1])
        throw ValidationError("record " + std::to_string(i) + ": timestamp " + std::to_string(t) +
                              " ps not after previous " + std::to_string(timestamps_ps[i - 1]));
    }
  }

  friend bool operator==(const PhotonStream&, const PhotonStream&) = default;
};

/// Sorted set union of the timestamps. Coincident timestamps collapse into
/// one event since a single detector cannot resolve them.
inline PhotonStream merge_streams(std::span<const PhotonStream> streams) {
  require(!streams.empty(), "nothing to merge");
  PhotonStream out;
  out.channel = streams.front().channel;
  out.duration_ps = streams.front().duration_ps;
  std::size_t total = 0;
  for (const auto& s : streams) {
    if (s.duration_ps != out.duration_ps) throw InvalidArgument("cannot merge streams of different duration");
    total += s.size();
  }
  out.timestamps_ps.reserve(total);
  for (const auto& s : streams)
    out.timestamps_ps.insert(out.timestamps_ps.end(), s.timestamps_ps.begin(), s.timestamps_ps.end());
  std::sort(out.timestamps_ps.begin(), out.timestamps_ps.end());
  out.timestamps_ps.erase(std::unique(out.timestamps_ps.begin(), out.timestamps_ps.end()),
                          out.timestamps_ps.end());
  return out;
}

/// 50:50 beam splitter: channel 0 and channel 1 outputs.
inline std::pair<PhotonStream, PhotonStream> beamsplit(const PhotonStream& in, std::uint64_t seed) {
  PhotonStream a{0, {}, in.duration_ps};
  PhotonStream b{1, {}, in.duration_ps};
  a.timestamps_ps.reserve(in.size() / 2 + 16);
  b.timestamps_ps.reserve(in.size() / 2 + 16);
  Rng rng(seed);
  for (std::int64_t t : in.timestamps_ps) {
    if (rng.next() >> 63) a.timestamps_ps.push_back(t);
    else b.timestamps_ps.push_back(t);
  }
  return {std::move(a), std::move(b)};
}

}  // namespace nvforge
