#include <gtest/gtest.h>

#include <fstream>
#include <string>
#include <vector>

#include "nvforge/random.hpp"
#include "nvforge/timestamp_io.hpp"
#include "test_support.hpp"

using namespace nvforge;
using nvforge::testing::TempDir;

static std::vector<PhotonStream> sample_streams(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<PhotonStream> out;
  for (std::uint8_t ch : {0, 1, 5}) {
    PhotonStream s;
    s.channel = ch;
    s.duration_ps = 2'000'000'000;
    std::int64_t t = 0;
    while (true) {
      t += 1 + static_cast<std::int64_t>(rng.exponential(1.0 / 5e6));
      if (t > s.duration_ps) break;
      s.timestamps_ps.push_back(t);
    }
    out.push_back(std::move(s));
  }
  return out;
}

static void write_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream(path, std::ios::binary) << bytes;
}

class TimestampFormats : public ::testing::TestWithParam<TimestampFormat> {};

TEST_P(TimestampFormats, RoundTrip) {
  TempDir dir;
  const auto streams = sample_streams(11);
  const auto path = dir.file("ts");
  write_timestamps(path, streams, GetParam());
  const auto back = read_timestamps(path, GetParam(), streams.front().duration_ps);
  ASSERT_EQ(back.size(), streams.size());
  for (std::size_t i = 0; i < back.size(); ++i) EXPECT_EQ(back[i], streams[i]);
}

TEST_P(TimestampFormats, EmptyFileRejected) {
  TempDir dir;
  write_bytes(dir.file("e"), "");
  EXPECT_THROW(read_timestamps(dir.file("e"), GetParam()), ValidationError);
}

TEST_P(TimestampFormats, ChannelSelection) {
  TempDir dir;
  const auto streams = sample_streams(3);
  write_timestamps(dir.file("ts"), streams, GetParam());
  const auto one = ingest_timestamps(dir.file("ts"), GetParam(), std::uint8_t{5}, streams.front().duration_ps);
  EXPECT_EQ(one, streams[2]);
  EXPECT_THROW(ingest_timestamps(dir.file("ts"), GetParam()), ValidationError);
  EXPECT_THROW(ingest_timestamps(dir.file("ts"), GetParam(), std::uint8_t{2}), ValidationError);
}

INSTANTIATE_TEST_SUITE_P(Io, TimestampFormats, ::testing::Values(TimestampFormat::csv, TimestampFormat::nvps),
                         [](const auto& info) { return info.param == TimestampFormat::csv ? "csv" : "nvps"; });

TEST(TimestampIo, CsvAndNvpsCarryTheSameRecords) {
  const auto streams = sample_streams(5);
  const auto a = detail::parse_csv(encode_timestamps(streams, TimestampFormat::csv));
  const auto b = detail::parse_nvps(encode_timestamps(streams, TimestampFormat::nvps));
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].channel, b[i].channel);
    EXPECT_EQ(a[i].time_ps, b[i].time_ps);
  }
}

TEST(TimestampIo, NvpsLayoutIsLittleEndian) {
  PhotonStream s;
  s.channel = 2;
  s.duration_ps = 0x0102;
  s.timestamps_ps = {0x0102};
  const std::vector<PhotonStream> v{s};
  const auto bytes = encode_timestamps(v, TimestampFormat::nvps);
  const std::string expected{"NVPS\x01\x00\x01\x00\x00\x00\x00\x00\x00\x00\x02\x02\x01\x00\x00\x00\x00\x00\x00", 23};
  EXPECT_EQ(bytes, expected);
}

static std::string error_of(const std::string& csv) {
  try {
    streams_from_records(detail::parse_csv(csv));
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

TEST(TimestampIo, CsvErrorsNameTheRecord) {
  EXPECT_NE(error_of("time,channel\n").find("header"), std::string::npos);
  EXPECT_NE(error_of("channel,time_ps\n0,10\n1\n").find("record 1"), std::string::npos);
  EXPECT_NE(error_of("channel,time_ps\n0,10\n300,20\n").find("record 1"), std::string::npos);
  EXPECT_NE(error_of("channel,time_ps\n0,10\n0,-5\n").find("record 1"), std::string::npos);
  EXPECT_NE(error_of("channel,time_ps\n0,10\n1,20\n0,15\n").find("record 2"), std::string::npos);
  EXPECT_NE(error_of("channel,time_ps\n0,10\n0,10\n").find("record 1"), std::string::npos);
  EXPECT_NE(error_of("channel,time_ps\n").find("no records"), std::string::npos);
  EXPECT_EQ(error_of("channel,time_ps\r\n0,10\r\n\r\n1,12\r\n"), "");
}

TEST(TimestampIo, NvpsStructuralErrors) {
  const auto good = encode_timestamps(sample_streams(1), TimestampFormat::nvps);
  EXPECT_THROW(detail::parse_nvps(good.substr(0, 10)), ValidationError);
  EXPECT_THROW(detail::parse_nvps(good.substr(0, good.size() - 1)), ValidationError);
  EXPECT_THROW(detail::parse_nvps("XVPS" + good.substr(4)), ValidationError);
  auto v2 = good;
  v2[4] = 2;
  EXPECT_THROW(detail::parse_nvps(v2), ValidationError);
}

TEST(TimestampIo, DurationChecks) {
  const auto recs = detail::parse_csv("channel,time_ps\n0,10\n0,500\n");
  EXPECT_EQ(streams_from_records(recs).front().duration_ps, 500);
  EXPECT_EQ(streams_from_records(recs, 1000).front().duration_ps, 1000);
  EXPECT_THROW(streams_from_records(recs, 100), ValidationError);
}

TEST(TimestampIo, MissingFileIsIoError) {
  EXPECT_THROW(read_timestamps("/nonexistent/nvforge/ts.csv", TimestampFormat::csv), IoError);
  EXPECT_EQ(parse_timestamp_format("nvps"), TimestampFormat::nvps);
  EXPECT_THROW(parse_timestamp_format("bin"), Error);
}
