#pragma once

// The nvforge command line. Kept in a header so tests can drive it in
// process; tools/nvforge.cpp only forwards argv.
//
// Exit codes: 0 success, 1 report verification mismatch or internal error,
// 2 configuration / schema / input validation error, 3 fit did not converge,
// 4 I/O error.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "nvforge/anneal.hpp"
#include "nvforge/artifacts.hpp"
#include "nvforge/campaign.hpp"
#include "nvforge/config.hpp"
#include "nvforge/error.hpp"
#include "nvforge/fabrication.hpp"
#include "nvforge/photophysics.hpp"
#include "nvforge/statistics.hpp"
#include "nvforge/timestamp_io.hpp"

namespace nvforge::cli {

enum ExitCode : int { kOk = 0, kMismatch = 1, kConfigError = 2, kFitError = 3, kIoError = 4 };

/// Seed stage for the one-shot simulations of `simulate`.
inline constexpr std::uint64_t kSimulateStage = 16;

struct GlobalOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string format;
};

inline RunConfig resolve_config(const GlobalOptions& g) {
  RunConfig cfg;
  if (!g.config_path.empty()) {
    cfg = load_config(g.config_path);
  } else if (!g.seed) {
    throw SchemaError("master_seed", "required field is missing (pass --seed or --config)");
  }
  if (g.seed) cfg.master_seed = *g.seed;
  cfg.validate();
  return cfg;
}

/// Writes to --out (via a temporary file and rename) or to stdout.
inline void emit(const GlobalOptions& g, const std::string& bytes, std::ostream& out) {
  if (g.out.empty()) {
    out << bytes;
    return;
  }
  namespace fs = std::filesystem;
  const fs::path target(g.out);
  if (target.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(target.parent_path(), ec);
  }
  const fs::path tmp = target.string() + ".tmp";
  write_file(tmp, bytes);
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot write " + target.string());
  }
}

inline std::string format_or(const GlobalOptions& g, const std::string& fallback,
                             std::initializer_list<const char*> allowed) {
  const std::string f = g.format.empty() ? fallback : g.format;
  for (const char* a : allowed)
    if (f == a) return f;
  std::string list;
  for (const char* a : allowed) list += std::string(list.empty() ? "" : ", ") + a;
  throw SchemaError("--format", "'" + f + "' is not valid here (expected " + list + ")");
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

inline json provenance(const RunConfig& cfg) {
  return {{"tool", "nvforge"}, {"version", kVersion}, {"config_hash", config_hash(cfg)}, {"master_seed", cfg.master_seed}};
}

inline json vec3_json(const Vec3& v) { return {v.x, v.y, v.z}; }

// ---------------------------------------------------------------------------
// Subcommands

inline int cmd_simulate(const GlobalOptions& g, const std::string& kind, int emitters, std::optional<double> duration_s,
                        std::ostream& out) {
  const RunConfig cfg = resolve_config(g);
  const std::uint64_t seed = derive_seed(cfg.master_seed, {kSimulateStage});
  if (kind == "grid") {
    format_or(g, "json", {"json"});
    json sites = json::array();
    for (const auto& c : simulate_grid(cfg.grid, cfg.yield, cfg.master_seed)) {
      json pos = json::array();
      for (const auto& p : c.positions_nm) pos.push_back(vec3_json(p));
      sites.push_back({{"row", c.site.row},
                       {"col", c.site.col},
                       {"pulse_energy_nj", c.pulse_energy_nj},
                       {"damage", std::string(to_string(c.damage))},
                       {"vacancy_positions_nm", pos}});
    }
    emit(g, dump({{"kind", "vacancy_grid"}, {"provenance", provenance(cfg)}, {"sites", sites}}), out);
    return kOk;
  }
  if (emitters < 1) throw SchemaError("--emitters", "must be at least 1");
  const double dur = duration_s.value_or(cfg.hbt.duration_s);
  if (!(dur > 0.0)) throw SchemaError("--duration-s", "must be positive");
  if (kind == "photons") {
    const auto fmt = parse_timestamp_format(format_or(g, "csv", {"csv", "nvps"}));
    const auto duration_ps = static_cast<std::int64_t>(std::llround(dur * 1e12));
    std::vector<PhotonStream> streams;
    for (int i = 0; i < emitters; ++i)
      streams.push_back(simulate_photon_stream(cfg.emitter, duration_ps, cfg.hbt.background_cps / emitters,
                                               derive_seed(seed, {1, static_cast<std::uint64_t>(i)})));
    auto [a, b] = beamsplit(merge_streams(streams), derive_seed(seed, {2}));
    a.channel = 0;
    b.channel = 1;
    const PhotonStream both[] = {a, b};
    emit(g, encode_timestamps(both, fmt), out);
    return kOk;
  }
  format_or(g, "json", {"json"});
  json doc;
  if (kind == "g2") {
    doc = g2_document(simulate_hbt(cfg.emitter, static_cast<std::size_t>(emitters), dur, cfg.hbt.background_cps,
                                   cfg.analysis.g2_bin_width_ns, cfg.analysis.g2_window_ns, derive_seed(seed, {3})));
  } else if (kind == "ple") {
    doc = ple_document(simulate_ple_stack(cfg.ple, derive_seed(seed, {4})));
  } else if (kind == "echo") {
    doc = echo_document(simulate_echo_curve(cfg.echo, derive_seed(seed, {5})));
  } else if (kind == "trpl") {
    const auto& t = cfg.trpl;
    TrplData d;
    d.irf = gaussian_irf(t.irf_fwhm_ns, t.bin_width_ns, t.bins, t.irf_centre_ns);
    d.signal = simulate_trpl(t.t1_ns, d.irf, t.total_counts, derive_seed(seed, {6}));
    doc = trpl_document(d);
  } else if (kind == "image") {
    doc = image_document({simulate_spot_image(cfg.image, derive_seed(seed, {7})), cfg.image.pixel_nm});
  } else {
    throw SchemaError("--kind", "unknown kind '" + kind + "'");
  }
  emit(g, dump(doc), out);
  return kOk;
}

inline int cmd_anneal(const GlobalOptions& g, std::ostream& out) {
  format_or(g, "json", {"json"});
  const RunConfig cfg = resolve_config(g);
  json sites = json::array();
  for (int k = 0; k < cfg.grid.site_count(); ++k) {
    const SiteIndex site{k / cfg.grid.cols, k % cfg.grid.cols};
    const auto cloud = simulate_grid_site(cfg.grid, cfg.yield, cfg.master_seed, site);
    const auto a = anneal_grid_site(cfg, cloud);
    json nvs = json::array();
    for (const auto& nv : a.nvs) nvs.push_back(vec3_json(nv.position_nm));
    sites.push_back({{"row", site.row},
                     {"col", site.col},
                     {"pulse_energy_nj", a.pulse_energy_nj},
                     {"damage", std::string(to_string(cloud.damage))},
                     {"vacancy_count", a.vacancy_count},
                     {"nv_positions_nm", nvs}});
  }
  emit(g,
       dump({{"kind", "annealed_grid"},
             {"provenance", provenance(cfg)},
             {"diffusivity_cm2_s", cfg.anneal.diffusivity_cm2_s()},
             {"sqrt_dt_nm", std::sqrt(cfg.anneal.dt_nm2())},
             {"sites", sites}}),
       out);
  return kOk;
}

inline int cmd_characterize(const GlobalOptions& g, const std::string& input, const std::string& input_format,
                            std::vector<int> channels, std::ostream& out, std::ostream& err) {
  format_or(g, "json", {"json"});
  const RunConfig cfg = resolve_config(g);
  const auto streams = read_timestamps(input, parse_timestamp_format(input_format));
  auto find = [&](int ch) -> const PhotonStream& {
    for (const auto& s : streams)
      if (s.channel == ch) return s;
    throw ValidationError("file has no channel " + std::to_string(ch));
  };
  CorrelationHistogram h;
  if (channels.empty()) {
    if (streams.size() == 2) {
      h = correlate(streams[0], streams[1], cfg.analysis.g2_bin_width_ns, cfg.analysis.g2_window_ns);
    } else if (streams.size() == 1) {
      const auto [a, b] = beamsplit(streams[0], derive_seed(cfg.master_seed, {kSimulateStage, 8}));
      h = correlate(a, b, cfg.analysis.g2_bin_width_ns, cfg.analysis.g2_window_ns);
    } else {
      throw ValidationError("file holds " + std::to_string(streams.size()) + " channels; pass --channels a,b");
    }
  } else {
    if (channels.size() != 2) throw SchemaError("--channels", "expected two channels");
    h = correlate(find(channels[0]), find(channels[1]), cfg.analysis.g2_bin_width_ns, cfg.analysis.g2_window_ns);
  }
  const FitRun run = run_fit("g2", g2_document(h), G2Form::rescaled, cfg.analysis.thresholds);
  if (!run.converged()) {
    err << "g2 fit did not converge: " << run.document["fit"]["status"].get<std::string>() << "\n";
    return kFitError;
  }
  json doc = run.document;
  doc["kind"] = "characterization";
  emit(g, dump(doc), out);
  return kOk;
}

inline int cmd_fit(const GlobalOptions& g, const std::string& kind, const std::string& input, const std::string& form,
                   std::ostream& out, std::ostream& err) {
  format_or(g, "json", {"json"});
  G2Form f = G2Form::rescaled;
  if (form == "published") f = G2Form::published;
  else if (form != "rescaled") throw SchemaError("--form", "expected rescaled or published");
  ClassificationThresholds thresholds;
  if (!g.config_path.empty()) thresholds = load_config(g.config_path).analysis.thresholds;
  const FitRun run = run_fit(kind, load_json_file(input), f, thresholds);
  if (!run.converged()) {
    err << kind << " fit did not converge: " << run.document["fit"]["status"].get<std::string>() << "\n";
    return kFitError;
  }
  emit(g, dump(run.document), out);
  return kOk;
}

inline int cmd_stats(const GlobalOptions& g, const std::string& input, bool ceiling, std::ostream& out) {
  const std::string fmt = format_or(g, "csv", {"csv", "json"});
  if (ceiling) {
    const auto m = max_poisson_single_probability();
    emit(g, dump({{"poisson_single_probability_max", m.value}, {"at_mean", m.argument}}), out);
    return kOk;
  }
  if (input.empty()) throw SchemaError("input", "a report file is required");
  const json report = load_json_file(input);
  if (!report.is_object() || report.value("kind", "") != "grid_report")
    throw SchemaError("kind", "expected a grid_report document");
  emit(g, fmt == "csv" ? rows_csv(report) : dump(report.at("rows")), out);
  return kOk;
}

struct ArrheniusArgs {
  std::optional<double> diffusivity_cm2_s;
  std::optional<double> activation_ev;
  std::optional<double> length_nm;
  double d0_cm2_s = kReportedD0Cm2S;
  std::optional<double> temperature_k;
  std::optional<double> temperature_c;
  double duration_s = kStandardAnnealSeconds;
};

inline int cmd_arrhenius(const GlobalOptions& g, const ArrheniusArgs& a, std::ostream& out) {
  format_or(g, "json", {"json"});
  if (a.temperature_k && a.temperature_c) throw SchemaError("--temperature-k", "give a temperature only once");
  const double t_k = a.temperature_k ? *a.temperature_k
                                     : celsius_to_kelvin(a.temperature_c.value_or(kStandardAnnealCelsius));
  const int given = int(a.diffusivity_cm2_s.has_value()) + int(a.activation_ev.has_value()) + int(a.length_nm.has_value());
  if (given != 1) throw SchemaError("arrhenius", "give exactly one of --diffusivity-cm2-s, --activation-ev, --length-nm");
  ArrheniusResult r;
  if (a.activation_ev) {
    r = arrhenius_from_activation(*a.activation_ev, a.d0_cm2_s, t_k, a.duration_s);
  } else {
    const double d = a.diffusivity_cm2_s ? *a.diffusivity_cm2_s : diffusivity_from_length(*a.length_nm, a.duration_s);
    r = arrhenius_from_diffusivity(d, a.d0_cm2_s, t_k, a.duration_s);
  }
  emit(g,
       dump({{"temperature_k", t_k},
             {"duration_s", a.duration_s},
             {"d0_cm2_s", a.d0_cm2_s},
             {"diffusivity_cm2_s", r.diffusivity_cm2_s},
             {"activation_energy_ev", r.activation_energy_ev},
             {"sqrt_dt_nm", r.diffusion_length_nm}}),
       out);
  return kOk;
}

inline int cmd_report(const GlobalOptions& g, const std::string& verify_dir, std::optional<std::uint64_t> shuffle,
                      std::ostream& out, std::ostream& err) {
  format_or(g, "json", {"json"});
  CampaignOptions opt;
  opt.shuffle_seed = shuffle;
  if (!verify_dir.empty()) {
    namespace fs = std::filesystem;
    const json doc = load_json_file((fs::path(verify_dir) / "report.json").string());
    if (!doc.is_object() || doc.value("kind", "") != "grid_report")
      throw SchemaError("kind", "expected a grid_report document");
    const RunConfig cfg = config_from_json(doc.at("config"));
    const std::string hash = config_hash(cfg);
    if (hash != doc.at("provenance").at("config_hash").get<std::string>()) {
      err << "config hash mismatch: embedded " << doc["provenance"]["config_hash"].get<std::string>()
          << ", recomputed " << hash << "\n";
      return kMismatch;
    }
    const FileSet files = campaign_files(run_campaign(cfg, opt), doc.at("generated_at").get<std::string>());
    int bad = 0;
    for (const auto& [rel, bytes] : files) {
      const fs::path p = fs::path(verify_dir) / rel;
      if (!fs::exists(p) || read_file(p) != bytes) {
        err << "differs: " << rel << "\n";
        ++bad;
      }
    }
    if (bad) return kMismatch;
    out << "verified " << files.size() << " files (config " << hash << ")\n";
    return kOk;
  }
  if (g.out.empty()) throw SchemaError("--out", "report needs an output directory");
  const RunConfig cfg = resolve_config(g);
  const GridReport report = run_campaign(cfg, opt);
  write_directory_atomically(g.out, campaign_files(report, generation_timestamp()));
  int singles = 0;
  for (const auto& r : report.rows) singles += r.singles;
  out << "wrote " << g.out << ": " << report.sites.size() << " sites, " << singles << " single NVs";
  if (report.displacement) out << ", r0 = " << format_number(report.displacement->r0_nm) << " nm";
  out << "\n";
  return kOk;
}

inline int cmd_plot(const GlobalOptions& g, const std::string& input, std::ostream& out) {
  format_or(g, "json", {"json"});
  if (g.out.empty()) throw SchemaError("--out", "plot needs an output directory");
  const json doc = load_json_file(input);
  if (!doc.is_object() || !doc.contains("kind")) throw SchemaError("kind", "required field is missing");
  const std::string kind = doc["kind"].get<std::string>();
  FileSet files;
  if (kind == "grid_report") {
    for (const auto& [name, p] : plot_report(doc)) {
      files[name + ".csv"] = p.csv;
      files[name + ".svg"] = p.svg();
    }
  } else if (kind == "fit" || kind == "characterization") {
    const PlotData p = plot_fit(doc);
    const std::string name = doc.at("fit_kind").get<std::string>();
    files[name + ".csv"] = p.csv;
    files[name + ".svg"] = p.svg();
  } else {
    throw SchemaError("kind", "cannot plot a '" + kind + "' document");
  }
  write_directory_atomically(g.out, files);
  out << "wrote " << files.size() << " files to " << g.out << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"nvforge: laser-written NV centre fabrication simulator and analysis toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));
  GlobalOptions g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config_path, "Run configuration (JSON)")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "Master seed; overrides the configuration");
  app.add_option("--out", g.out, "Output file or directory (default: stdout where possible)");
  app.add_option("--format", g.format, "Output format: json, csv or nvps depending on the command");

  auto* sim = app.add_subcommand("simulate", "Simulate a grid or a synthetic data set");
  std::string sim_kind = "grid";
  int emitters = 1;
  double duration = 0.0;
  sim->add_option("--kind", sim_kind, "grid | photons | g2 | ple | echo | trpl | image")
      ->check(CLI::IsMember({"grid", "photons", "g2", "ple", "echo", "trpl", "image"}));
  sim->add_option("--emitters", emitters, "Emitters in the spot (photons, g2)");
  auto* dur_opt = sim->add_option("--duration-s", duration, "Acquisition time (photons, g2)");

  auto* ann = app.add_subcommand("anneal", "Fabricate and anneal the grid; NV positions per site");

  auto* chr = app.add_subcommand("characterize", "Correlate a timestamp file and classify the emitter count");
  std::string chr_input, chr_format = "csv";
  std::vector<int> channels;
  chr->add_option("input", chr_input, "Timestamp file")->required();
  chr->add_option("--input-format", chr_format, "csv | nvps")->check(CLI::IsMember({"csv", "nvps"}));
  chr->add_option("--channels", channels, "Two channels to correlate")->delimiter(',');

  auto* fit = app.add_subcommand("fit", "Fit a data document");
  std::string fit_kind, fit_input, g2_form = "rescaled";
  fit->add_option("kind", fit_kind, "g2 | ple | echo | trpl | displacement | localize")
      ->required()
      ->check(CLI::IsMember(fit_kinds()));
  fit->add_option("input", fit_input, "Input document (JSON)")->required();
  fit->add_option("--form", g2_form, "g2 model: rescaled | published");

  auto* st = app.add_subcommand("stats", "Per-row statistics of a report");
  std::string st_input;
  bool ceiling = false;
  st->add_option("input", st_input, "report.json");
  st->add_flag("--poisson-ceiling", ceiling, "Print the best single-NV probability of a Poisson count");

  auto* arr = app.add_subcommand("arrhenius", "Arrhenius / diffusion-length conversions");
  ArrheniusArgs aa;
  arr->add_option("--diffusivity-cm2-s", aa.diffusivity_cm2_s, "Vacancy diffusivity D");
  arr->add_option("--activation-ev", aa.activation_ev, "Activation energy");
  arr->add_option("--length-nm", aa.length_nm, "Diffusion length sqrt(Dt)");
  arr->add_option("--d0-cm2-s", aa.d0_cm2_s, "Pre-exponential factor D0")->capture_default_str();
  arr->add_option("--temperature-k", aa.temperature_k, "Anneal temperature (K)");
  arr->add_option("--temperature-c", aa.temperature_c, "Anneal temperature (C)");
  arr->add_option("--duration-s", aa.duration_s, "Anneal time")->capture_default_str();

  auto* rep = app.add_subcommand("report", "Run the full campaign and write the report directory");
  std::string verify_dir;
  std::uint64_t shuffle = 0;
  rep->add_option("--verify", verify_dir, "Regenerate a report directory and compare it byte for byte");
  auto* shuffle_opt = rep->add_option("--shuffle-seed", shuffle, "Process sites in a shuffled order");

  auto* plt = app.add_subcommand("plot", "CSV + SVG plot data from a report or a fit result");
  std::string plot_input;
  plt->add_option("input", plot_input, "report.json or fit result")->required();

  for (auto* s : {sim, ann, chr, fit, st, arr, rep, plt}) s->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }
  if (*seed_opt) g.seed = seed;

  try {
    if (*sim) return cmd_simulate(g, sim_kind, emitters, *dur_opt ? std::optional(duration) : std::nullopt, out);
    if (*ann) return cmd_anneal(g, out);
    if (*chr) return cmd_characterize(g, chr_input, chr_format, channels, out, err);
    if (*fit) return cmd_fit(g, fit_kind, fit_input, g2_form, out, err);
    if (*st) return cmd_stats(g, st_input, ceiling, out);
    if (*arr) return cmd_arrhenius(g, aa, out);
    if (*rep) return cmd_report(g, verify_dir, *shuffle_opt ? std::optional(shuffle) : std::nullopt, out, err);
    if (*plt) return cmd_plot(g, plot_input, out);
  } catch (const SchemaError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const ValidationError& e) {
    err << "invalid input: " << e.what() << "\n";
    return kConfigError;
  } catch (const InvalidArgument& e) {
    err << "invalid input: " << e.what() << "\n";
    return kConfigError;
  } catch (const json::exception& e) {
    err << "malformed document: " << e.what() << "\n";
    return kConfigError;
  } catch (const FitError& e) {
    err << "fit error: " << e.what() << "\n";
    return kFitError;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return kIoError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kMismatch;
  }
  return kOk;
}

}  // namespace nvforge::cli
