#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>

#include "nvforge/artifacts.hpp"
#include "nvforge/campaign.hpp"
#include "test_support.hpp"

using namespace nvforge;
using nvforge::testing::TempDir;
namespace fs = std::filesystem;

static RunConfig tiny_config(double energy) {
  RunConfig c;
  c.master_seed = 4;
  c.grid.rows = 2;
  c.grid.cols = 3;
  c.grid.energies_nj = {energy, energy};
  c.hbt.duration_s = 0.02;
  return c;
}

static int line_count(const std::string& s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

static void expect_well_formed_svg(const std::string& svg, const std::string& name) {
  EXPECT_EQ(svg.rfind("<svg", 0), 0u) << name;
  EXPECT_NE(svg.find("</svg>"), std::string::npos) << name;
  for (const char* bad : {"nan", "inf", "NaN"}) EXPECT_EQ(svg.find(bad), std::string::npos) << name << " has " << bad;
}

TEST(Artifacts, EmptyCampaignStillPlots) {
  const auto report = run_campaign(tiny_config(0.0));
  const FileSet files = campaign_files(report, "2024-01-01T00:00:00Z");
  for (const char* f : {"report.json", "rows.csv", "sites.csv"}) EXPECT_TRUE(files.count(f)) << f;
  int svgs = 0;
  for (const auto& [name, bytes] : files)
    if (name.ends_with(".svg")) {
      ++svgs;
      expect_well_formed_svg(bytes, name);
    }
  EXPECT_GT(svgs, 0);
  EXPECT_TRUE(json::parse(files.at("report.json"))["displacement_fit"].is_null());
}

TEST(Artifacts, CsvHeadersAreStable) {
  const json doc = report_to_json(run_campaign(tiny_config(30.0)), "t");
  const auto rows = rows_csv(doc);
  const auto sites = sites_csv(doc);
  EXPECT_EQ(rows.substr(0, rows.find('\n')),
            "row,pulse_energy_nj,sites,empty,graphitized,singles,doubles,pairs,triples,indeterminate,total,"
            "single_probability,single_ci_lower,single_ci_upper");
  EXPECT_EQ(sites.substr(0, sites.find('\n')),
            "row,col,pulse_energy_nj,damage,vacancy_count,nv_count,class,detections,g2_0,g2_0_stderr,fit_status,"
            "displacement_nm");
  EXPECT_EQ(line_count(rows), 3);
  EXPECT_EQ(line_count(sites), 7);
  // Every line has the header's column count.
  for (const std::string* csv : {&rows, &sites}) {
    std::istringstream in(*csv);
    std::string line;
    std::getline(in, line);
    const auto cols = std::count(line.begin(), line.end(), ',');
    while (std::getline(in, line)) EXPECT_EQ(std::count(line.begin(), line.end(), ','), cols) << line;
  }
}

TEST(Artifacts, ReportDependsOnlyOnConfigAndTimestamp) {
  const auto c = tiny_config(30.0);
  const auto a = campaign_files(run_campaign(c), "2024-01-01T00:00:00Z");
  const auto b = campaign_files(run_campaign(c), "2024-01-01T00:00:00Z");
  EXPECT_EQ(a, b);
  const auto later = campaign_files(run_campaign(c), "2030-06-01T12:00:00Z");
  for (const auto& [name, bytes] : a) {
    if (name == "report.json") {
      auto x = json::parse(bytes), y = json::parse(later.at(name));
      x.erase("generated_at");
      y.erase("generated_at");
      EXPECT_EQ(x, y);
    } else {
      EXPECT_EQ(bytes, later.at(name)) << name;
    }
  }
}

TEST(Artifacts, ReportCarriesProvenance) {
  const auto c = tiny_config(30.0);
  const json doc = report_to_json(run_campaign(c), "t");
  EXPECT_EQ(doc["kind"], "grid_report");
  EXPECT_EQ(doc["provenance"]["config_hash"], config_hash(c));
  EXPECT_EQ(doc["provenance"]["master_seed"], c.master_seed);
  EXPECT_EQ(config_hash(config_from_json(doc["config"])), config_hash(c));
}

TEST(Artifacts, GenerationTimestampHonoursSourceDateEpoch) {
  ::setenv("SOURCE_DATE_EPOCH", "0", 1);
  EXPECT_EQ(generation_timestamp(), "1970-01-01T00:00:00Z");
  ::setenv("SOURCE_DATE_EPOCH", "1700000000", 1);
  EXPECT_EQ(generation_timestamp(), "2023-11-14T22:13:20Z");
  ::unsetenv("SOURCE_DATE_EPOCH");
  EXPECT_EQ(generation_timestamp().size(), 20u);
}

TEST(Artifacts, DirectoryWriteReplacesWholeTree) {
  TempDir tmp;
  const auto out = tmp.path() / "run";
  write_directory_atomically(out, {{"a.txt", "one"}, {"sub/b.txt", "two"}});
  EXPECT_EQ(read_file(out / "sub/b.txt"), "two");
  write_directory_atomically(out, {{"c.txt", "three"}});
  EXPECT_FALSE(fs::exists(out / "a.txt"));
  EXPECT_EQ(read_file(out / "c.txt"), "three");
}

TEST(Artifacts, FailedDirectoryWriteLeavesNoTrace) {
  TempDir tmp;
  const auto out = tmp.path() / "run";
  write_directory_atomically(out, {{"a.txt", "one"}});
  // "x" is written as a file, so "x/y" cannot be created beneath it.
  EXPECT_THROW(write_directory_atomically(out, {{"x", "file"}, {"x/y", "child"}}), Error);
  EXPECT_EQ(read_file(out / "a.txt"), "one");
  int entries = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(tmp.path())) ++entries;
  EXPECT_EQ(entries, 1);
}

TEST(Documents, RoundTrip) {
  CorrelationHistogram h;
  for (int i = -5; i <= 5; ++i) h.bin_edges_ns.push_back(i);
  h.counts = {3, 4, 2, 1, 0, 1, 2, 5, 4, 3};
  h.normalization = 2.5;
  const auto back = read_g2_document(g2_document(h));
  EXPECT_EQ(back.bin_edges_ns, h.bin_edges_ns);
  EXPECT_EQ(back.counts, h.counts);
  EXPECT_EQ(back.normalization, h.normalization);

  std::vector<EchoPoint> pts;
  for (int i = 0; i < 8; ++i) pts.push_back({2.0 + 4 * i, 0.9 - 0.05 * i, 0.01});
  const auto e = read_echo_document(echo_document(pts));
  ASSERT_EQ(e.size(), pts.size());
  EXPECT_EQ(e[3].tau_us, pts[3].tau_us);
  EXPECT_EQ(e[3].intensity, pts[3].intensity);
}

static std::string path_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const SchemaError& e) {
    return e.path();
  }
  return "<accepted>";
}

TEST(Documents, ReadersReportPaths) {
  EXPECT_EQ(path_of([] { read_g2_document(json{{"kind", "g2"}}); }), "bin_edges_ns");
  EXPECT_EQ(path_of([] { read_g2_document(json{{"kind", "echo"}}); }), "kind");
  EXPECT_EQ(path_of([] { read_g2_document(json::array()); }), "$");
  EXPECT_EQ(path_of([] {
              read_g2_document(json{{"bin_edges_ns", {-2, -1, 0, 1, 2}}, {"counts", {5, 1, 1, 5}}, {"normalization", 5}});
            }),
            "counts");
  EXPECT_EQ(path_of([] {
              read_echo_document(json{{"tau_us", {1, 2, 3, 4, 5, 6}}, {"intensity", {1, 1, 1, 1, 1}}});
            }),
            "intensity");
  EXPECT_EQ(path_of([] {
              read_trpl_document(
                  json{{"bin_width_ns", 0.1}, {"counts", {1, 2, 3, 4}}, {"irf", {1, -1, 0, 0}}});
            }),
            "irf[1]");
  EXPECT_EQ(path_of([] { read_displacement_document(json{{"radii_nm", {1, 2, 3}}, {"binning_nm", 20}}); }),
            "radii_nm");
  EXPECT_EQ(path_of([] { read_image_document(json{{"pixel_nm", 100}, {"counts", {{1, 2}, {3, 4}}}}); }), "counts");
  EXPECT_EQ(path_of([] { run_fit("spectrum", json::object()); }), "kind");
}

TEST(Documents, FitDocumentShape) {
  std::vector<EchoPoint> pts;
  for (int i = 0; i < 20; ++i) {
    const double t = 2.0 + 6.0 * i;
    pts.push_back({t, 0.5 + 0.5 * std::exp(-std::pow(t / 48.0, 2.0)), 0.01});
  }
  const auto run = run_fit("echo", echo_document(pts));
  ASSERT_TRUE(run.converged());
  const json& d = run.document;
  EXPECT_EQ(d["kind"], "fit");
  EXPECT_EQ(d["fit_kind"], "echo");
  EXPECT_NEAR(d["derived"]["T2_us"].get<double>(), 48.0, 1e-6);
  EXPECT_NEAR(fit_parameter(d["fit"], "T2_us"), 48.0, 1e-6);
  EXPECT_TRUE(std::isnan(fit_parameter(d["fit"], "missing")));
  const auto plot = plot_fit(d);
  expect_well_formed_svg(plot.svg(), "echo");
  EXPECT_EQ(plot.csv.substr(0, plot.csv.find(',')), "tau_us");
}
