#pragma once

// On-disk artifacts: fit input documents, fit results, the campaign report
// with its CSV tables, plot data, and atomic output directories.
//
// Fit input documents are JSON objects with a "kind" field:
//   g2            bin_edges_ns[], counts[], normalization
//   ple           frequency_mhz[], sweeps[][]  (one or more sweeps)
//   echo          tau_us[], intensity[], sigma[] (optional; omit for unknown)
//   trpl          bin_width_ns, counts[], irf[], background[] (optional)
//   displacement  radii_nm[], binning_nm
//   image         pixel_nm, counts[][] (row-major)
// A campaign report ("grid_report") is also accepted as displacement input;
// its single-NV sites are used.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nvforge/analysis.hpp"
#include "nvforge/campaign.hpp"
#include "nvforge/config.hpp"
#include "nvforge/correlation.hpp"
#include "nvforge/error.hpp"
#include "nvforge/models.hpp"
#include "nvforge/photophysics.hpp"
#include "nvforge/plot.hpp"

namespace nvforge {

// ---------------------------------------------------------------------------
// JSON helpers

namespace detail {

inline json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline double json_number(const json& j) {
  return j.is_number() ? j.get<double>() : std::numeric_limits<double>::quiet_NaN();
}

inline void expect_kind(const json& doc, const std::string& kind) {
  if (!doc.is_object()) throw SchemaError("$", "expected an object");
  auto it = doc.find("kind");
  if (it == doc.end()) return;
  if (!it->is_string()) throw SchemaError("kind", "expected a string");
  if (it->get<std::string>() != kind)
    throw SchemaError("kind", "expected '" + kind + "', found '" + it->get<std::string>() + "'");
}

inline std::vector<std::vector<double>> number_rows(ObjectReader& r, const std::string& key) {
  const json* v = r.get(key);
  if (!v) throw SchemaError(r.child(key), "required field is missing");
  if (!v->is_array()) throw SchemaError(r.child(key), "expected an array of arrays");
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < v->size(); ++i) {
    const json& row = (*v)[i];
    const std::string p = r.child(key) + "[" + std::to_string(i) + "]";
    if (!row.is_array()) throw SchemaError(p, "expected an array of numbers");
    std::vector<double> vals;
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (!row[k].is_number()) throw SchemaError(p + "[" + std::to_string(k) + "]", "expected a number");
      vals.push_back(row[k].get<double>());
    }
    out.push_back(std::move(vals));
  }
  return out;
}

inline std::vector<double> required_numbers(ObjectReader& r, const std::string& key) {
  if (!r.has(key)) throw SchemaError(r.child(key), "required field is missing");
  return r.numbers(key, {});
}

inline double required_number(ObjectReader& r, const std::string& key) {
  if (!r.has(key)) throw SchemaError(r.child(key), "required field is missing");
  return r.number(key, 0.0);
}

}  // namespace detail

inline json fit_result_to_json(const FitResult& r) {
  json params = json::array();
  for (std::size_t i = 0; i < r.names.size(); ++i)
    params.push_back({{"name", r.names[i]},
                      {"value", detail::number_or_null(r.params[i])},
                      {"stderr", detail::number_or_null(r.std_errors[i])}});
  json cov = json::array();
  for (Eigen::Index i = 0; i < r.covariance.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < r.covariance.cols(); ++k) row.push_back(detail::number_or_null(r.covariance(i, k)));
    cov.push_back(row);
  }
  return {{"status", std::string(to_string(r.status))},
          {"converged", r.converged()},
          {"parameters", params},
          {"chi2", detail::number_or_null(r.chi2)},
          {"chi2_reduced", detail::number_or_null(r.chi2_reduced)},
          {"dof", r.dof},
          {"iterations", r.iterations},
          {"covariance", cov}};
}

/// Value of a named parameter in a serialised fit; NaN when absent.
inline double fit_parameter(const json& fit, const std::string& name) {
  for (const auto& p : fit.at("parameters"))
    if (p.at("name") == name) return detail::json_number(p.at("value"));
  return std::numeric_limits<double>::quiet_NaN();
}

// ---------------------------------------------------------------------------
// Fit input documents

inline json g2_document(const CorrelationHistogram& h) {
  return {{"kind", "g2"}, {"bin_edges_ns", h.bin_edges_ns}, {"counts", h.counts}, {"normalization", h.normalization}};
}

inline CorrelationHistogram read_g2_document(const json& doc) {
  detail::expect_kind(doc, "g2");
  detail::ObjectReader r(doc, "");
  r.get("kind");
  CorrelationHistogram h;
  h.bin_edges_ns = detail::required_numbers(r, "bin_edges_ns");
  const auto counts = detail::required_numbers(r, "counts");
  h.normalization = detail::required_number(r, "normalization");
  r.finish();
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (!(counts[i] >= 0.0) || counts[i] != std::floor(counts[i]))
      throw SchemaError("counts[" + std::to_string(i) + "]", "expected a non-negative integer");
    h.counts.push_back(static_cast<std::uint64_t>(counts[i]));
  }
  if (h.counts.size() < 8)
    throw SchemaError("counts", "a g2 fit needs at least 8 bins, found " + std::to_string(h.counts.size()));
  if (h.bin_edges_ns.size() != h.counts.size() + 1) throw SchemaError("bin_edges_ns", "expected one more edge than bins");
  try {
    h.validate();
  } catch (const ValidationError& e) {
    throw SchemaError("$", e.what());
  }
  return h;
}

inline json ple_document(const PLEStack& stack) {
  return {{"kind", "ple"}, {"frequency_mhz", stack.frequency_mhz}, {"sweeps", stack.counts}};
}

inline PLEStack read_ple_document(const json& doc) {
  detail::expect_kind(doc, "ple");
  detail::ObjectReader r(doc, "");
  r.get("kind");
  PLEStack s;
  s.frequency_mhz = detail::required_numbers(r, "frequency_mhz");
  s.counts = detail::number_rows(r, "sweeps");
  r.finish();
  if (s.frequency_mhz.size() < 5) throw SchemaError("frequency_mhz", "need at least 5 frequencies");
  if (s.counts.empty()) throw SchemaError("sweeps", "need at least one sweep");
  for (std::size_t i = 0; i < s.counts.size(); ++i)
    if (s.counts[i].size() != s.frequency_mhz.size())
      throw SchemaError("sweeps[" + std::to_string(i) + "]", "length differs from frequency_mhz");
  return s;
}

inline json echo_document(std::span<const EchoPoint> pts) {
  std::vector<double> tau, y, s;
  for (const auto& p : pts) {
    tau.push_back(p.tau_us);
    y.push_back(p.intensity);
    s.push_back(p.sigma);
  }
  return {{"kind", "echo"}, {"tau_us", tau}, {"intensity", y}, {"sigma", s}};
}

inline std::vector<EchoPoint> read_echo_document(const json& doc) {
  detail::expect_kind(doc, "echo");
  detail::ObjectReader r(doc, "");
  r.get("kind");
  const auto tau = detail::required_numbers(r, "tau_us");
  const auto y = detail::required_numbers(r, "intensity");
  const auto s = r.numbers("sigma", {});
  r.finish();
  if (y.size() != tau.size()) throw SchemaError("intensity", "length differs from tau_us");
  if (!s.empty() && s.size() != tau.size()) throw SchemaError("sigma", "length differs from tau_us");
  if (tau.size() < 6) throw SchemaError("tau_us", "an echo fit needs at least 6 points");
  std::vector<EchoPoint> out;
  for (std::size_t i = 0; i < tau.size(); ++i) out.push_back({tau[i], y[i], s.empty() ? 0.0 : s[i]});
  return out;
}

struct TrplData {
  DecayHistogram signal;
  SampledIrf irf;
  std::optional<DecayHistogram> background;

  DecayHistogram corrected() const { return background ? subtract_background(signal, *background) : signal; }
};

inline json trpl_document(const TrplData& d) {
  json j{{"kind", "trpl"},
         {"bin_width_ns", d.signal.bin_width_ns},
         {"counts", d.signal.counts},
         {"irf", d.irf.weights}};
  if (d.background) j["background"] = d.background->counts;
  return j;
}

inline TrplData read_trpl_document(const json& doc) {
  detail::expect_kind(doc, "trpl");
  detail::ObjectReader r(doc, "");
  r.get("kind");
  TrplData d;
  const double bw = detail::required_number(r, "bin_width_ns");
  if (!(bw > 0.0)) throw SchemaError("bin_width_ns", "must be positive");
  d.signal = {bw, detail::required_numbers(r, "counts")};
  const auto irf = detail::required_numbers(r, "irf");
  if (r.has("background")) d.background = DecayHistogram{bw, r.numbers("background", {})};
  r.finish();
  if (d.signal.counts.size() < 4) throw SchemaError("counts", "need at least 4 bins");
  if (irf.size() != d.signal.counts.size()) throw SchemaError("irf", "length differs from counts");
  if (d.background && d.background->counts.size() != d.signal.counts.size())
    throw SchemaError("background", "length differs from counts");
  for (std::size_t i = 0; i < irf.size(); ++i)
    if (!(irf[i] >= 0.0)) throw SchemaError("irf[" + std::to_string(i) + "]", "must be non-negative");
  try {
    d.irf = normalized_irf(bw, irf);
  } catch (const InvalidArgument& e) {
    throw SchemaError("irf", e.what());
  }
  return d;
}

struct DisplacementData {
  std::vector<double> radii_nm;
  double binning_nm = 20.0;
};

inline json displacement_document(const DisplacementData& d) {
  return {{"kind", "displacement"}, {"radii_nm", d.radii_nm}, {"binning_nm", d.binning_nm}};
}

inline DisplacementData read_displacement_document(const json& doc) {
  if (doc.is_object() && doc.value("kind", "") == "grid_report") {
    DisplacementData d;
    d.binning_nm = doc.at("config").at("analysis").at("displacement_binning_nm").get<double>();
    for (const auto& s : doc.at("sites"))
      if (s.value("class", "") == "one" && s.contains("displacement_nm") && s["displacement_nm"].is_number())
        d.radii_nm.push_back(s["displacement_nm"].get<double>());
    return d;
  }
  detail::expect_kind(doc, "displacement");
  detail::ObjectReader r(doc, "");
  r.get("kind");
  DisplacementData d;
  d.radii_nm = detail::required_numbers(r, "radii_nm");
  d.binning_nm = r.number("binning_nm", d.binning_nm);
  r.finish();
  if (!(d.binning_nm > 0.0)) throw SchemaError("binning_nm", "must be positive");
  for (std::size_t i = 0; i < d.radii_nm.size(); ++i)
    if (!(d.radii_nm[i] >= 0.0)) throw SchemaError("radii_nm[" + std::to_string(i) + "]", "must be non-negative");
  if (d.radii_nm.size() < 20) throw SchemaError("radii_nm", "a displacement fit needs at least 20 radii");
  return d;
}

struct ImageData {
  Eigen::MatrixXd counts;
  double pixel_nm = 100.0;
};

inline json image_document(const ImageData& d) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < d.counts.rows(); ++r) {
    std::vector<double> row(d.counts.cols());
    for (Eigen::Index c = 0; c < d.counts.cols(); ++c) row[c] = d.counts(r, c);
    rows.push_back(row);
  }
  return {{"kind", "image"}, {"pixel_nm", d.pixel_nm}, {"counts", rows}};
}

inline ImageData read_image_document(const json& doc) {
  detail::expect_kind(doc, "image");
  detail::ObjectReader r(doc, "");
  r.get("kind");
  ImageData d;
  d.pixel_nm = detail::required_number(r, "pixel_nm");
  const auto rows = detail::number_rows(r, "counts");
  r.finish();
  if (!(d.pixel_nm > 0.0)) throw SchemaError("pixel_nm", "must be positive");
  if (rows.size() < 3 || rows.front().size() < 3) throw SchemaError("counts", "image must be at least 3x3 pixels");
  d.counts.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.front().size())
      throw SchemaError("counts[" + std::to_string(i) + "]", "rows differ in length");
    for (std::size_t k = 0; k < rows[i].size(); ++k) d.counts(i, k) = rows[i][k];
  }
  return d;
}

// ---------------------------------------------------------------------------
// Fit runs

struct FitRun {
  json document;  ///< kind "fit": fit_kind, fit, derived, data
  FitStatus status = FitStatus::max_iterations;

  bool converged() const { return status == FitStatus::converged; }
};

inline const std::vector<std::string>& fit_kinds() {
  static const std::vector<std::string> k{"g2", "ple", "echo", "trpl", "displacement", "localize"};
  return k;
}

/// Runs the analysis matching `kind` on an input document.
inline FitRun run_fit(const std::string& kind, const json& data, G2Form form = G2Form::rescaled,
                      const ClassificationThresholds& thresholds = {}) {
  FitRun run;
  json derived;
  json stored = data;
  FitResult fit;
  if (kind == "g2") {
    const auto g = fit_g2(read_g2_document(data), form);
    fit = g.fit;
    derived = {{"form", form == G2Form::rescaled ? "rescaled" : "published"},
               {"g2_0", detail::number_or_null(g.params.g2_0)},
               {"g2_0_stderr", detail::number_or_null(g.fit.std_errors[0])},
               {"class", std::string(to_string(g.fit.converged() ? classify_emitter_count(g.params.g2_0, thresholds)
                                                                 : EmitterCount::indeterminate))}};
  } else if (kind == "ple") {
    const auto stack = read_ple_document(data);
    LorentzianFit l;
    bool poor = false;
    if (stack.counts.size() == 1) {
      l = fit_lorentzian(stack.frequency_mhz, stack.counts.front());
    } else {
      const auto agg = aggregate_scans(stack);
      l = agg.fit;
      poor = agg.poor_fit;
    }
    fit = l.fit;
    derived = {{"sweeps", stack.counts.size()},
               {"centre_mhz", detail::number_or_null(l.centre_mhz)},
               {"fwhm_mhz", detail::number_or_null(l.fwhm_mhz)},
               {"fwhm_stderr_mhz", detail::number_or_null(l.fit.std_errors[1])},
               {"poor_fit", poor}};
  } else if (kind == "echo") {
    const auto e = fit_echo(read_echo_document(data));
    fit = e.fit;
    derived = {{"T2_us", detail::number_or_null(e.t2_us)},
               {"T2_stderr_us", detail::number_or_null(e.fit.std_errors[2])},
               {"n", detail::number_or_null(e.exponent)}};
  } else if (kind == "trpl") {
    const auto d = read_trpl_document(data);
    const auto t = fit_trpl(d.corrected(), d.irf);
    fit = t.fit;
    derived = {{"T1_ns", detail::number_or_null(t.t1_ns)},
               {"T1_stderr_ns", detail::number_or_null(t.t1_stderr_ns)},
               {"fourier_limit_mhz", t.t1_ns > 0.0 ? json(fourier_limit_linewidth(t.t1_ns)) : json(nullptr)}};
  } else if (kind == "displacement") {
    const auto d = read_displacement_document(data);
    const auto f = fit_displacement(d.radii_nm, d.binning_nm);
    fit = f.fit;
    stored = displacement_document(d);
    derived = {{"samples", d.radii_nm.size()},
               {"r0_nm", detail::number_or_null(f.r0_nm)},
               {"r0_stderr_nm", detail::number_or_null(f.r0_stderr_nm)},
               {"sqrt_dt_nm", detail::number_or_null(f.sqrt_dt_nm)},
               {"sqrt_dt_stderr_nm", detail::number_or_null(f.sqrt_dt_stderr_nm)},
               {"bin_centres_nm", f.bin_centres_nm},
               {"counts", f.counts}};
  } else if (kind == "localize") {
    const auto img = read_image_document(data);
    const auto loc = localize_emitter(img.counts, img.pixel_nm);
    fit = loc.fit;
    derived = {{"x_nm", detail::number_or_null(loc.x_nm)},
               {"y_nm", detail::number_or_null(loc.y_nm)},
               {"stderr_x_nm", detail::number_or_null(loc.stderr_x_nm)},
               {"stderr_y_nm", detail::number_or_null(loc.stderr_y_nm)}};
  } else {
    throw SchemaError("kind", "unknown fit kind '" + kind + "'");
  }
  run.status = fit.status;
  run.document = {{"kind", "fit"},
                  {"fit_kind", kind},
                  {"tool", "nvforge"},
                  {"version", kVersion},
                  {"fit", fit_result_to_json(fit)},
                  {"derived", derived},
                  {"data", stored}};
  return run;
}

// ---------------------------------------------------------------------------
// Campaign report

inline std::string_view site_class(const SiteRecord& s) {
  if (s.empty()) return "empty";
  return s.hbt ? to_string(s.hbt->count) : "indeterminate";
}

inline json displacement_fit_to_json(const DisplacementFit& d) {
  return {{"fit", fit_result_to_json(d.fit)},
          {"amplitude", detail::number_or_null(d.amplitude)},
          {"r0_nm", detail::number_or_null(d.r0_nm)},
          {"r0_stderr_nm", detail::number_or_null(d.r0_stderr_nm)},
          {"sqrt_dt_nm", detail::number_or_null(d.sqrt_dt_nm)},
          {"sqrt_dt_stderr_nm", detail::number_or_null(d.sqrt_dt_stderr_nm)},
          {"bin_centres_nm", d.bin_centres_nm},
          {"counts", d.counts}};
}

/// The report document. `generated_at` is the only field that is not a
/// function of the configuration.
inline json report_to_json(const GridReport& r, const std::string& generated_at) {
  json j;
  j["kind"] = "grid_report";
  j["generated_at"] = generated_at;
  j["provenance"] = {{"tool", "nvforge"},
                     {"version", kVersion},
                     {"config_hash", r.config_hash},
                     {"master_seed", r.config.master_seed}};
  j["config"] = config_to_json(r.config);
  json rows = json::array();
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    const auto& s = r.rows[i];
    rows.push_back({{"row", s.row},
                    {"pulse_energy_nj", s.pulse_energy_nj},
                    {"sites", s.sites},
                    {"empty", s.empty},
                    {"graphitized", r.graphitized_per_row.at(i)},
                    {"singles", s.singles},
                    {"doubles", s.doubles},
                    {"pairs", s.pairs},
                    {"triples", s.triples},
                    {"indeterminate", s.indeterminate},
                    {"total", s.total},
                    {"single_probability", s.single_probability},
                    {"single_ci", {s.single_ci.lower, s.single_ci.upper}}});
  }
  j["rows"] = rows;
  json sites = json::array();
  for (const auto& s : r.sites) {
    json nvs = json::array();
    for (const auto& nv : s.nvs) nvs.push_back({nv.position_nm.x, nv.position_nm.y, nv.position_nm.z});
    json site{{"row", s.site.row},
              {"col", s.site.col},
              {"pulse_energy_nj", s.pulse_energy_nj},
              {"damage", std::string(to_string(s.damage))},
              {"vacancy_count", s.vacancy_count},
              {"nv_count", s.nvs.size()},
              {"class", std::string(site_class(s))},
              {"nv_positions_nm", nvs}};
    if (s.hbt)
      site["hbt"] = {{"detections", s.hbt->detections},
                     {"g2_0", detail::number_or_null(s.hbt->g2_0)},
                     {"g2_0_stderr", detail::number_or_null(s.hbt->g2_0_stderr)},
                     {"status", std::string(to_string(s.hbt->status))}};
    if (s.displacement_nm) site["displacement_nm"] = *s.displacement_nm;
    sites.push_back(std::move(site));
  }
  j["sites"] = sites;
  j["displacement_fit"] = r.displacement ? displacement_fit_to_json(*r.displacement) : json(nullptr);
  j["displacement_note"] = r.displacement_note;
  return j;
}

namespace detail {

inline std::string csv_cell(const json& v) {
  if (v.is_null()) return "";
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  if (v.is_number_unsigned()) return std::to_string(v.get<std::uint64_t>());
  return format_number(v.get<double>());
}

inline std::string csv_line(std::initializer_list<std::string> cells) {
  std::string out;
  bool first = true;
  for (const auto& c : cells) {
    if (!first) out += ',';
    out += c;
    first = false;
  }
  return out + "\n";
}

}  // namespace detail

inline constexpr const char* kRowsCsvHeader =
    "row,pulse_energy_nj,sites,empty,graphitized,singles,doubles,pairs,triples,indeterminate,total,"
    "single_probability,single_ci_lower,single_ci_upper";

inline constexpr const char* kSitesCsvHeader =
    "row,col,pulse_energy_nj,damage,vacancy_count,nv_count,class,detections,g2_0,g2_0_stderr,fit_status,"
    "displacement_nm";

inline std::string rows_csv(const json& report) {
  using detail::csv_cell;
  std::string out = std::string(kRowsCsvHeader) + "\n";
  for (const auto& r : report.at("rows"))
    out += detail::csv_line({csv_cell(r["row"]), csv_cell(r["pulse_energy_nj"]), csv_cell(r["sites"]),
                             csv_cell(r["empty"]), csv_cell(r["graphitized"]), csv_cell(r["singles"]),
                             csv_cell(r["doubles"]), csv_cell(r["pairs"]), csv_cell(r["triples"]),
                             csv_cell(r["indeterminate"]), csv_cell(r["total"]), csv_cell(r["single_probability"]),
                             csv_cell(r["single_ci"][0]), csv_cell(r["single_ci"][1])});
  return out;
}

inline std::string sites_csv(const json& report) {
  using detail::csv_cell;
  std::string out = std::string(kSitesCsvHeader) + "\n";
  const json null;
  for (const auto& s : report.at("sites")) {
    const json& h = s.contains("hbt") ? s["hbt"] : null;
    auto hv = [&](const char* k) { return h.is_null() ? std::string() : csv_cell(h[k]); };
    out += detail::csv_line({csv_cell(s["row"]), csv_cell(s["col"]), csv_cell(s["pulse_energy_nj"]),
                             csv_cell(s["damage"]), csv_cell(s["vacancy_count"]), csv_cell(s["nv_count"]),
                             csv_cell(s["class"]), hv("detections"), hv("g2_0"), hv("g2_0_stderr"), hv("status"),
                             s.contains("displacement_nm") ? csv_cell(s["displacement_nm"]) : std::string()});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Plot data

struct PlotData {
  std::string csv;
  Chart chart;

  std::string svg() const { return render_svg(chart); }
};

/// Per-row counts against pulse energy.
/// CSV: pulse_energy_nj,singles,doubles,pairs,triples,total
inline PlotData plot_rows(const json& report) {
  PlotData p;
  p.csv = "pulse_energy_nj,singles,doubles,pairs,triples,total\n";
  Series singles{"singles", {}, {}, SeriesStyle::points, "#1f77b4"};
  Series doubles{"doubles + pairs", {}, {}, SeriesStyle::points, "#ff7f0e"};
  Series triples{"triples", {}, {}, SeriesStyle::points, "#2ca02c"};
  Series total{"total NVs", {}, {}, SeriesStyle::line, "#7f7f7f"};
  std::vector<json> rows(report.at("rows").begin(), report.at("rows").end());
  std::stable_sort(rows.begin(), rows.end(), [](const json& a, const json& b) {
    return a["pulse_energy_nj"].get<double>() < b["pulse_energy_nj"].get<double>();
  });
  for (const auto& r : rows) {
    const double e = r["pulse_energy_nj"].get<double>();
    p.csv += detail::csv_line({detail::csv_cell(r["pulse_energy_nj"]), detail::csv_cell(r["singles"]),
                               detail::csv_cell(r["doubles"]), detail::csv_cell(r["pairs"]),
                               detail::csv_cell(r["triples"]), detail::csv_cell(r["total"])});
    singles.x.push_back(e);
    singles.y.push_back(r["singles"].get<double>());
    doubles.x.push_back(e);
    doubles.y.push_back(r["doubles"].get<double>() + r["pairs"].get<double>());
    triples.x.push_back(e);
    triples.y.push_back(r["triples"].get<double>());
    total.x.push_back(e);
    total.y.push_back(r["total"].get<double>());
  }
  p.chart = {"NV centres per row", "pulse energy before objective (nJ)", "sites / NVs",
             {total, singles, doubles, triples}};
  return p;
}

/// Fitted g2(0) of every characterised site.
/// CSV: row,col,pulse_energy_nj,nv_count,g2_0,g2_0_stderr,class
inline PlotData plot_site_g2(const json& report) {
  PlotData p;
  p.csv = "row,col,pulse_energy_nj,nv_count,g2_0,g2_0_stderr,class\n";
  Series pts{"g2(0)", {}, {}, SeriesStyle::points, "#1f77b4"};
  for (const auto& s : report.at("sites")) {
    if (!s.contains("hbt")) continue;
    const auto& h = s["hbt"];
    p.csv += detail::csv_line({detail::csv_cell(s["row"]), detail::csv_cell(s["col"]),
                               detail::csv_cell(s["pulse_energy_nj"]), detail::csv_cell(s["nv_count"]),
                               detail::csv_cell(h["g2_0"]), detail::csv_cell(h["g2_0_stderr"]),
                               detail::csv_cell(s["class"])});
    pts.x.push_back(s["pulse_energy_nj"].get<double>());
    pts.y.push_back(detail::json_number(h["g2_0"]));
  }
  p.chart = {"Fitted g2(0) per site", "pulse energy before objective (nJ)", "g2(0)", {pts}};
  return p;
}

inline double displacement_density(double r, double amplitude, double r0) {
  return amplitude * r * std::exp(-r * r / (r0 * r0));
}

/// Histogram of single-NV displacements with the fitted curve.
/// CSV: r_nm,count,model
inline PlotData plot_displacement_histogram(const std::vector<double>& centres, const std::vector<double>& counts,
                                            double amplitude, double r0) {
  PlotData p;
  p.csv = "r_nm,count,model\n";
  Series bars{"singles", centres, counts, SeriesStyle::bars, "#1f77b4"};
  Series curve{"fit", {}, {}, SeriesStyle::line, "#d62728"};
  const bool have_fit = std::isfinite(amplitude) && std::isfinite(r0) && r0 > 0.0;
  for (std::size_t i = 0; i < centres.size(); ++i)
    p.csv += detail::csv_line({format_number(centres[i]), format_number(counts[i]),
                               have_fit ? format_number(displacement_density(centres[i], amplitude, r0)) : ""});
  if (have_fit && !centres.empty()) {
    const double hi = centres.back() + 0.5 * (centres.size() > 1 ? centres[1] - centres[0] : centres[0]);
    for (int i = 0; i <= 200; ++i) {
      const double r = hi * i / 200.0;
      curve.x.push_back(r);
      curve.y.push_back(displacement_density(r, amplitude, r0));
    }
  }
  p.chart = {"Displacement of single NVs from the write target", "displacement r (nm)", "sites per bin",
             {bars, curve}};
  return p;
}

inline PlotData plot_displacement(const json& report) {
  const json& d = report.at("displacement_fit");
  if (d.is_null()) return plot_displacement_histogram({}, {}, NAN, NAN);
  return plot_displacement_histogram(d.at("bin_centres_nm").get<std::vector<double>>(),
                                     d.at("counts").get<std::vector<double>>(), detail::json_number(d["amplitude"]),
                                     detail::json_number(d["r0_nm"]));
}

/// Plot files of a campaign report, keyed by base name.
inline std::map<std::string, PlotData> plot_report(const json& report) {
  return {{"rows", plot_rows(report)}, {"site_g2", plot_site_g2(report)}, {"displacement", plot_displacement(report)}};
}

/// Plot of a fit result document (see fit_document); CSV columns per kind:
///   g2            delay_ns,g2,sigma,model
///   ple           frequency_mhz,counts,model
///   echo          tau_us,intensity,sigma,model
///   trpl          t_ns,counts,model
///   displacement  r_nm,count,model
///   localize      x_nm,counts,model   (image row through the fitted centre)
inline PlotData plot_fit(const json& doc) {
  const std::string kind = doc.at("fit_kind").get<std::string>();
  const json& fit = doc.at("fit");
  const json& data = doc.at("data");
  auto par = [&](const char* n) { return fit_parameter(fit, n); };
  PlotData p;
  Series pts{"data", {}, {}, SeriesStyle::points, "#1f77b4"};
  Series curve{"fit", {}, {}, SeriesStyle::line, "#d62728"};
  auto fine = [&](double lo, double hi, auto&& f) {
    for (int i = 0; i <= 400; ++i) {
      const double x = lo + (hi - lo) * i / 400.0;
      curve.x.push_back(x);
      curve.y.push_back(f(x));
    }
  };

  if (kind == "g2") {
    const auto h = read_g2_document(data);
    const G2Params gp{par("g2_0"), par("c"), par("tau2_ns"), par("tau3_ns")};
    const bool rescaled = doc.at("derived").value("form", "rescaled") == "rescaled";
    const G2BinAveragedCurve model{rescaled};
    const std::array<double, 4> pv{gp.g2_0, gp.c, gp.tau2_ns, gp.tau3_ns};
    const auto y = h.normalized_values(), s = h.normalized_sigma(), c = h.centres_ns();
    p.csv = "delay_ns,g2,sigma,model\n";
    for (std::size_t i = 0; i < y.size(); ++i)
      p.csv += detail::csv_line({format_number(c[i]), format_number(y[i]), format_number(s[i]),
                                 format_number(model.value({h.bin_edges_ns[i], h.bin_edges_ns[i + 1]}, pv))});
    pts = {"coincidences", c, y, SeriesStyle::bars, "#1f77b4"};
    fine(h.bin_edges_ns.front(), h.bin_edges_ns.back(),
         [&](double t) { return rescaled ? g2_model_rescaled(t, gp) : g2_model(t, gp); });
    p.chart = {"Second-order correlation", "delay (ns)", "g2", {pts, curve}};
  } else if (kind == "ple") {
    const auto stack = read_ple_document(data);
    std::vector<double> sum(stack.frequency_mhz.size(), 0.0);
    for (const auto& row : stack.counts)
      for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += row[i];
    const std::array<double, 4> pv{par("centre_mhz"), par("fwhm_mhz"), par("amplitude"), par("offset")};
    p.csv = "frequency_mhz,counts,model\n";
    for (std::size_t i = 0; i < sum.size(); ++i)
      p.csv += detail::csv_line({format_number(stack.frequency_mhz[i]), format_number(sum[i]),
                                 format_number(LorentzianCurve{}.value(stack.frequency_mhz[i], pv))});
    pts.x = stack.frequency_mhz;
    pts.y = sum;
    fine(stack.frequency_mhz.front(), stack.frequency_mhz.back(),
         [&](double f) { return LorentzianCurve{}.value(f, pv); });
    p.chart = {"Photoluminescence excitation", "detuning (MHz)", "counts", {pts, curve}};
  } else if (kind == "echo") {
    const auto echo = read_echo_document(data);
    const std::array<double, 4> pv{par("y0"), par("y1"), par("T2_us"), par("n")};
    p.csv = "tau_us,intensity,sigma,model\n";
    for (const auto& e : echo) {
      p.csv += detail::csv_line({format_number(e.tau_us), format_number(e.intensity), format_number(e.sigma),
                                 format_number(EchoCurve{}.value(e.tau_us, pv))});
      pts.x.push_back(e.tau_us);
      pts.y.push_back(e.intensity);
    }
    fine(0.0, echo.back().tau_us, [&](double t) { return EchoCurve{}.value(t, pv); });
    p.chart = {"Hahn echo", "tau (us)", "normalised intensity", {pts, curve}};
  } else if (kind == "trpl") {
    const auto d = read_trpl_document(data);
    const auto h = d.corrected();
    const int bins = static_cast<int>(h.counts.size());
    Eigen::VectorXd model = Eigen::VectorXd::Zero(bins);
    const double t1 = par("T1_ns"), amp = par("amplitude");
    if (std::isfinite(t1) && std::isfinite(amp) && t1 > 0.0) {
      Eigen::VectorXd pv(2);
      pv << t1, amp;
      TrplModel(d.irf, bins).evaluate(pv, model, nullptr);
    }
    p.csv = "t_ns,counts,model\n";
    for (int i = 0; i < bins; ++i) {
      const double t = (i + 0.5) * h.bin_width_ns;
      p.csv += detail::csv_line({format_number(t), format_number(h.counts[i]), format_number(model[i])});
      pts.x.push_back(t);
      pts.y.push_back(h.counts[i]);
      curve.x.push_back(t);
      curve.y.push_back(model[i]);
    }
    p.chart = {"Time-resolved photoluminescence", "time (ns)", "counts per bin", {pts, curve}};
  } else if (kind == "displacement") {
    const auto d = read_displacement_document(data);
    const double a = par("A"), r0 = par("r0_nm");
    const auto centres = doc.at("derived").at("bin_centres_nm").get<std::vector<double>>();
    const auto counts = doc.at("derived").at("counts").get<std::vector<double>>();
    (void)d;
    return plot_displacement_histogram(centres, counts, a, r0);
  } else if (kind == "localize") {
    const auto img = read_image_document(data);
    const std::array<double, 5> pv{par("amplitude"), par("x_nm"), par("y_nm"), par("sigma_nm"), par("offset")};
    const auto row = static_cast<Eigen::Index>(
        std::clamp(std::llround(pv[2] / img.pixel_nm), 0LL, static_cast<long long>(img.counts.rows() - 1)));
    p.csv = "x_nm,counts,model\n";
    for (Eigen::Index c = 0; c < img.counts.cols(); ++c) {
      const Vec2 at{c * img.pixel_nm, row * img.pixel_nm};
      p.csv += detail::csv_line({format_number(at.x), format_number(img.counts(row, c)),
                                 format_number(Gaussian2DCurve{}.value(at, pv))});
      pts.x.push_back(at.x);
      pts.y.push_back(img.counts(row, c));
    }
    fine(0.0, (img.counts.cols() - 1) * img.pixel_nm,
         [&](double x) { return Gaussian2DCurve{}.value({x, row * img.pixel_nm}, pv); });
    p.chart = {"Confocal spot, row through the fitted centre", "x (nm)", "counts", {pts, curve}};
  } else {
    throw SchemaError("fit_kind", "unknown fit kind '" + kind + "'");
  }
  return p;
}

// ---------------------------------------------------------------------------
// Output files

/// RFC 3339 UTC time; SOURCE_DATE_EPOCH overrides the clock.
inline std::string generation_timestamp() {
  std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  if (const char* env = std::getenv("SOURCE_DATE_EPOCH")) {
    char* end = nullptr;
    const long long v = std::strtoll(env, &end, 10);
    if (end && *end == '\0' && end != env) t = static_cast<std::time_t>(v);
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Relative path -> file contents.
using FileSet = std::map<std::string, std::string>;

/// Every file a campaign writes.
inline FileSet campaign_files(const GridReport& report, const std::string& generated_at) {
  const json doc = report_to_json(report, generated_at);
  FileSet files;
  files["report.json"] = doc.dump(2) + "\n";
  files["rows.csv"] = rows_csv(doc);
  files["sites.csv"] = sites_csv(doc);
  for (const auto& [name, plot] : plot_report(doc)) {
    files["plots/" + name + ".csv"] = plot.csv;
    files["plots/" + name + ".svg"] = plot.svg();
  }
  return files;
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.close();
  if (!out) throw IoError("write error on " + path.string());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

/// Writes the files into a sibling temporary directory and renames it over
/// `dir`, so a failure never leaves a partial output behind.
inline void write_directory_atomically(const std::filesystem::path& dir, const FileSet& files) {
  namespace fs = std::filesystem;
  const fs::path target = fs::absolute(dir).lexically_normal();
  const fs::path parent = target.parent_path();
  std::error_code ec;
  fs::create_directories(parent, ec);
  if (ec) throw IoError("cannot create " + parent.string() + ": " + ec.message());
  std::random_device rd;
  const std::string tag = std::to_string(rd()) + std::to_string(rd());
  const fs::path tmp = parent / ("." + target.filename().string() + ".tmp-" + tag);
  const fs::path old = parent / ("." + target.filename().string() + ".old-" + tag);
  try {
    fs::create_directory(tmp);
    for (const auto& [rel, bytes] : files) {
      const fs::path p = tmp / rel;
      fs::create_directories(p.parent_path());
      write_file(p, bytes);
    }
    const bool existed = fs::exists(target);
    if (existed) fs::rename(target, old);
    fs::rename(tmp, target);
    if (existed) fs::remove_all(old);
  } catch (const fs::filesystem_error& e) {
    fs::remove_all(tmp, ec);
    throw IoError(e.what());
  } catch (...) {
    fs::remove_all(tmp, ec);
    throw;
  }
}

}  // namespace nvforge
