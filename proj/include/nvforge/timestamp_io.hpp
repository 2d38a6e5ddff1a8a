#pragma once

// Photon timestamp files.
//
// CSV:  header line `channel,time_ps`, then one `channel,time_ps` record per
//       line (channel 0..255, time as a non-negative integer).
// NVPS: little-endian binary. Magic "NVPS", u16 version (1), u64 record
//       count, then per record u8 channel and u64 time_ps.
//
// Records must be in non-decreasing time order, and strictly increasing
// within each channel. Files carry no acquisition length; unless the caller
// supplies one, a stream's duration is the last timestamp in the file.

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "nvforge/error.hpp"
#include "nvforge/photon_stream.hpp"

namespace nvforge {

enum class TimestampFormat { csv, nvps };

inline TimestampFormat parse_timestamp_format(std::string_view s) {
  if (s == "csv") return TimestampFormat::csv;
  if (s == "nvps") return TimestampFormat::nvps;
  throw InvalidArgument("unknown timestamp format '" + std::string(s) + "' (expected csv or nvps)");
}

inline constexpr std::array<char, 4> kNvpsMagic{'N', 'V', 'P', 'S'};
inline constexpr std::uint16_t kNvpsVersion = 1;

struct TimestampRecord {
  std::uint8_t channel = 0;
  std::uint64_t time_ps = 0;
};

namespace detail {

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read error on " + path);
  return ss.str();
}

template <class T>
T read_le(std::string_view bytes, std::size_t offset) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i)
    v |= static_cast<T>(static_cast<unsigned char>(bytes[offset + i])) << (8 * i);
  return v;
}

template <class T>
void write_le(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::vector<TimestampRecord> parse_csv(std::string_view text) {
  std::vector<TimestampRecord> out;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  bool header = false;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (!header) {
      if (line != "channel,time_ps") throw ValidationError("line 1: expected header 'channel,time_ps'");
      header = true;
      continue;
    }
    const std::size_t comma = line.find(',');
    if (comma == std::string_view::npos)
      throw ValidationError("record " + std::to_string(out.size()) + " (line " + std::to_string(line_no) +
                            "): expected two columns");
    unsigned ch = 0;
    std::uint64_t t = 0;
    const auto a = line.substr(0, comma);
    const auto b = line.substr(comma + 1);
    const auto ra = std::from_chars(a.data(), a.data() + a.size(), ch);
    const auto rb = std::from_chars(b.data(), b.data() + b.size(), t);
    if (ra.ec != std::errc() || ra.ptr != a.data() + a.size() || ch > 255)
      throw ValidationError("record " + std::to_string(out.size()) + " (line " + std::to_string(line_no) +
                            "): channel must be an integer in 0..255");
    if (rb.ec != std::errc() || rb.ptr != b.data() + b.size())
      throw ValidationError("record " + std::to_string(out.size()) + " (line " + std::to_string(line_no) +
                            "): time_ps must be a non-negative integer");
    out.push_back({static_cast<std::uint8_t>(ch), t});
  }
  if (!header) throw ValidationError("file is empty");
  return out;
}

inline std::vector<TimestampRecord> parse_nvps(std::string_view bytes) {
  constexpr std::size_t header = 4 + 2 + 8;
  constexpr std::size_t record = 1 + 8;
  if (bytes.size() < header) throw ValidationError("truncated NVPS header");
  if (bytes.substr(0, 4) != std::string_view(kNvpsMagic.data(), 4)) throw ValidationError("missing NVPS magic");
  const auto version = read_le<std::uint16_t>(bytes, 4);
  if (version != kNvpsVersion) throw ValidationError("unsupported NVPS version " + std::to_string(version));
  const auto count = read_le<std::uint64_t>(bytes, 6);
  if (count > (bytes.size() - header) / record || bytes.size() != header + count * record)
    throw ValidationError("NVPS record count " + std::to_string(count) + " does not match the file size");
  std::vector<TimestampRecord> out(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::size_t off = header + i * record;
    out[i].channel = static_cast<std::uint8_t>(bytes[off]);
    out[i].time_ps = read_le<std::uint64_t>(bytes, off + 1);
  }
  return out;
}

}  // namespace detail

/// Checks ordering and range and splits the records into one stream per
/// channel, ordered by channel number.
inline std::vector<PhotonStream> streams_from_records(std::span<const TimestampRecord> records,
                                                      std::optional<std::int64_t> duration_ps = std::nullopt) {
  if (records.empty()) throw ValidationError("file has no records");
  constexpr auto kMax = static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max());
  std::map<std::uint8_t, PhotonStream> by_channel;
  std::uint64_t last = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const std::string where = "record " + std::to_string(i);
    if (r.time_ps > kMax) throw ValidationError(where + ": timestamp out of range");
    if (duration_ps && static_cast<std::int64_t>(r.time_ps) > *duration_ps)
      throw ValidationError(where + ": timestamp " + std::to_string(r.time_ps) + " ps beyond the duration " +
                            std::to_string(*duration_ps) + " ps");
    if (i > 0 && r.time_ps < last)
      throw ValidationError(where + ": timestamp " + std::to_string(r.time_ps) + " ps is earlier than the previous record");
    auto& s = by_channel[r.channel];
    s.channel = r.channel;
    const auto t = static_cast<std::int64_t>(r.time_ps);
    if (!s.timestamps_ps.empty() && t <= s.timestamps_ps.back())
      throw ValidationError(where + ": repeated timestamp " + std::to_string(t) + " ps on channel " +
                            std::to_string(r.channel));
    s.timestamps_ps.push_back(t);
    last = r.time_ps;
  }
  const std::int64_t duration = duration_ps ? *duration_ps : static_cast<std::int64_t>(last);
  std::vector<PhotonStream> out;
  for (auto& [ch, s] : by_channel) {
    s.duration_ps = duration;
    s.validate();
    out.push_back(std::move(s));
  }
  return out;
}

inline std::vector<TimestampRecord> read_timestamp_records(const std::string& path, TimestampFormat format) {
  const std::string bytes = detail::read_file_bytes(path);
  return format == TimestampFormat::csv ? detail::parse_csv(bytes) : detail::parse_nvps(bytes);
}

/// All channels of a timestamp file.
inline std::vector<PhotonStream> read_timestamps(const std::string& path, TimestampFormat format,
                                                 std::optional<std::int64_t> duration_ps = std::nullopt) {
  const auto records = read_timestamp_records(path, format);
  return streams_from_records(records, duration_ps);
}

/// Single-channel ingestion; a file with several channels needs `channel`.
inline PhotonStream ingest_timestamps(const std::string& path, TimestampFormat format,
                                      std::optional<std::uint8_t> channel = std::nullopt,
                                      std::optional<std::int64_t> duration_ps = std::nullopt) {
  auto streams = read_timestamps(path, format, duration_ps);
  if (!channel) {
    if (streams.size() != 1)
      throw ValidationError("file holds " + std::to_string(streams.size()) + " channels; choose one");
    return std::move(streams.front());
  }
  for (auto& s : streams)
    if (s.channel == *channel) return std::move(s);
  throw ValidationError("file has no channel " + std::to_string(*channel));
}

/// Records of all streams interleaved in time order (ties by channel).
inline std::vector<TimestampRecord> records_from_streams(std::span<const PhotonStream> streams) {
  std::vector<TimestampRecord> out;
  for (const auto& s : streams) {
    s.validate();
    for (auto t : s.timestamps_ps) out.push_back({s.channel, static_cast<std::uint64_t>(t)});
  }
  std::sort(out.begin(), out.end(), [](const TimestampRecord& a, const TimestampRecord& b) {
    return a.time_ps != b.time_ps ? a.time_ps < b.time_ps : a.channel < b.channel;
  });
  return out;
}

inline std::string encode_timestamps(std::span<const PhotonStream> streams, TimestampFormat format) {
  const auto records = records_from_streams(streams);
  std::string out;
  if (format == TimestampFormat::csv) {
    out = "channel,time_ps\n";
    for (const auto& r : records) {
      out += std::to_string(r.channel);
      out += ',';
      out += std::to_string(r.time_ps);
      out += '\n';
    }
  } else {
    out.append(kNvpsMagic.data(), kNvpsMagic.size());
    detail::write_le<std::uint16_t>(out, kNvpsVersion);
    detail::write_le<std::uint64_t>(out, records.size());
    for (const auto& r : records) {
      out.push_back(static_cast<char>(r.channel));
      detail::write_le<std::uint64_t>(out, r.time_ps);
    }
  }
  return out;
}

inline void write_timestamps(const std::string& path, std::span<const PhotonStream> streams, TimestampFormat format) {
  const std::string bytes = encode_timestamps(streams, format);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write error on " + path);
}

}  // namespace nvforge
