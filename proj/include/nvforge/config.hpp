#pragma once

// Run configuration: JSON document with unit-suffixed keys, strict
// validation with field paths, and a canonical serialisation used for the
// report's config hash.

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nvforge/analysis.hpp"
#include "nvforge/anneal.hpp"
#include "nvforge/error.hpp"
#include "nvforge/fabrication.hpp"
#include "nvforge/photophysics.hpp"

namespace nvforge {

using json = nlohmann::json;

/// HBT acquisition per characterised site.
struct HbtConfig {
  double duration_s = 0.05;
  double background_cps = 1000.0;
};

struct TrplConfig {
  double t1_ns = kReportedT1Ns;
  double irf_fwhm_ns = 0.35;
  double bin_width_ns = 0.025;
  int bins = 6000;
  double irf_centre_ns = 2.0;
  double total_counts = 1e5;
};

struct AnalysisConfig {
  ClassificationThresholds thresholds;
  double g2_bin_width_ns = 1.0;
  double g2_window_ns = 500.0;
  double resolution_nm = 500.0;
  double displacement_binning_nm = 20.0;
};

struct RunConfig {
  std::uint64_t master_seed = 0;
  PulseGridSpec grid = PulseGridSpec::standard();
  YieldModelParams yield;
  AnnealConfig anneal;
  EmitterRates emitter = EmitterRates::standard();
  HbtConfig hbt;
  PLEScanConfig ple;
  EchoConfig echo = EchoConfig::standard();
  TrplConfig trpl;
  SpotImageConfig image;
  AnalysisConfig analysis;
  double magnetic_field_mt = 6.7;  ///< recorded only

  void validate() const;
};

namespace detail {

// Reads one JSON object, remembering which keys were consumed so unknown
// keys can be reported.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw SchemaError(path_.empty() ? "$" : path_, "expected an object");
  }

  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const std::string& path() const { return path_; }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json* get(const std::string& key) {
    used_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  double number(const std::string& key, double fallback) {
    const json* v = get(key);
    if (!v) return fallback;
    if (!v->is_number()) throw SchemaError(child(key), "expected a number");
    return v->get<double>();
  }

  std::int64_t integer(const std::string& key, std::int64_t fallback) {
    const json* v = get(key);
    if (!v) return fallback;
    if (!v->is_number_integer()) throw SchemaError(child(key), "expected an integer");
    return v->get<std::int64_t>();
  }

  std::string string(const std::string& key, const std::string& fallback) {
    const json* v = get(key);
    if (!v) return fallback;
    if (!v->is_string()) throw SchemaError(child(key), "expected a string");
    return v->get<std::string>();
  }

  std::vector<double> numbers(const std::string& key, std::vector<double> fallback) {
    const json* v = get(key);
    if (!v) return fallback;
    if (!v->is_array()) throw SchemaError(child(key), "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v->size(); ++i) {
      if (!(*v)[i].is_number()) throw SchemaError(child(key) + "[" + std::to_string(i) + "]", "expected a number");
      out.push_back((*v)[i].get<double>());
    }
    return out;
  }

  std::vector<int> integers(const std::string& key, std::vector<int> fallback) {
    const json* v = get(key);
    if (!v) return fallback;
    if (!v->is_array()) throw SchemaError(child(key), "expected an array of integers");
    std::vector<int> out;
    for (std::size_t i = 0; i < v->size(); ++i) {
      if (!(*v)[i].is_number_integer())
        throw SchemaError(child(key) + "[" + std::to_string(i) + "]", "expected an integer");
      out.push_back((*v)[i].get<int>());
    }
    return out;
  }

  std::optional<ObjectReader> object(const std::string& key) {
    const json* v = get(key);
    if (!v) return std::nullopt;
    return ObjectReader(*v, child(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) throw SchemaError(child(it.key()), "unknown field");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

// Runs a validate() and re-raises its message against a field path.
template <class F>
void check_section(const std::string& path, F&& validate) {
  try {
    validate();
  } catch (const InvalidArgument& e) {
    throw SchemaError(path, e.what());
  }
}

inline void read_grid(ObjectReader r, PulseGridSpec& g) {
  g.rows = static_cast<int>(r.integer("rows", g.rows));
  g.cols = static_cast<int>(r.integer("cols", g.cols));
  g.spacing_um = r.number("spacing_um", g.spacing_um);
  g.depth_um = r.number("depth_um", g.depth_um);
  g.energies_nj = r.numbers("energies_nj", g.energies_nj);
  r.finish();
  if (g.rows < 1) throw SchemaError(r.child("rows"), "must be at least 1");
  if (g.cols < 1) throw SchemaError(r.child("cols"), "must be at least 1");
  if (!(g.spacing_um > 0.0)) throw SchemaError(r.child("spacing_um"), "must be positive");
  if (g.energies_nj.size() != static_cast<std::size_t>(g.rows))
    throw SchemaError(r.child("energies_nj"), "needs exactly one energy per row (" + std::to_string(g.rows) + ")");
  for (std::size_t i = 0; i < g.energies_nj.size(); ++i)
    if (!(g.energies_nj[i] >= 0.0))
      throw SchemaError(r.child("energies_nj") + "[" + std::to_string(i) + "]", "must be non-negative");
}

inline void read_yield(ObjectReader r, YieldModelParams& y) {
  y.threshold_nj = r.number("threshold_nj", y.threshold_nj);
  y.gamma = r.number("gamma", y.gamma);
  y.scale = r.number("scale", y.scale);
  y.e1_nj = r.number("e1_nj", y.e1_nj);
  y.e2_nj = r.number("e2_nj", y.e2_nj);
  y.focal_fwhm_xy_nm = r.number("focal_fwhm_xy_nm", y.focal_fwhm_xy_nm);
  y.focal_fwhm_z_um = r.number("focal_fwhm_z_um", y.focal_fwhm_z_um);
  const std::string model = r.string("count_model", y.count_model == CountModel::poisson ? "poisson" : "binomial");
  if (model == "poisson")
    y.count_model = CountModel::poisson;
  else if (model == "binomial")
    y.count_model = CountModel::binomial;
  else
    throw SchemaError(r.child("count_model"), "must be \"poisson\" or \"binomial\"");
  y.n_traps = static_cast<int>(r.integer("n_traps", y.n_traps));
  r.finish();
  check_section(r.path(), [&] { y.validate(); });
}

inline void read_anneal(ObjectReader r, AnnealConfig& a) {
  if (r.has("temperature_c") && r.has("temperature_k"))
    throw SchemaError(r.child("temperature_k"), "give temperature_c or temperature_k, not both");
  if (r.has("temperature_k")) a.temperature_k = r.number("temperature_k", a.temperature_k);
  if (r.has("temperature_c")) a.temperature_k = celsius_to_kelvin(r.number("temperature_c", 0.0));
  a.duration_s = r.number("duration_s", a.duration_s);
  a.d0_cm2_s = r.number("d0_cm2_s", a.d0_cm2_s);
  a.boltzmann_ev_per_k = r.number("boltzmann_ev_per_k", a.boltzmann_ev_per_k);
  if (r.has("activation_energy_ev") && r.has("diffusivity_convention"))
    throw SchemaError(r.child("diffusivity_convention"), "give activation_energy_ev or diffusivity_convention, not both");
  if (r.has("diffusivity_convention")) {
    const std::string c = r.string("diffusivity_convention", "");
    DiffusivityConvention conv;
    if (c == "fit_length")
      conv = DiffusivityConvention::from_fit_length;
    else if (c == "reported")
      conv = DiffusivityConvention::as_reported;
    else
      throw SchemaError(r.child("diffusivity_convention"), "must be \"fit_length\" or \"reported\"");
    a.activation_energy_ev = activation_energy_ev(reference_diffusivity(conv), a.d0_cm2_s, a.temperature_k,
                                                  a.boltzmann_ev_per_k);
  } else {
    a.activation_energy_ev = r.number("activation_energy_ev", a.activation_energy_ev);
  }
  a.conversion_probability = r.number("conversion_probability", a.conversion_probability);
  a.survival_probability = r.number("survival_probability", a.survival_probability);
  r.finish();
}

inline void read_emitter(ObjectReader r, EmitterRates& e) {
  e.k_rad = r.number("k_rad_per_ns", e.k_rad);
  e.k_isc = r.number("k_isc_per_ns", e.k_isc);
  e.k_deshelve = r.number("k_deshelve_per_ns", e.k_deshelve);
  e.detection_efficiency = r.number("detection_efficiency", e.detection_efficiency);
  if (r.has("k_exc_per_ns") && r.has("excitation_saturation_fraction"))
    throw SchemaError(r.child("k_exc_per_ns"), "give k_exc_per_ns or excitation_saturation_fraction, not both");
  if (r.has("k_exc_per_ns"))
    e.k_exc = r.number("k_exc_per_ns", e.k_exc);
  else
    e.k_exc = r.number("excitation_saturation_fraction", 0.87) * e.saturation_excitation();
  r.finish();
}

inline void read_hbt(ObjectReader r, HbtConfig& h) {
  h.duration_s = r.number("duration_s", h.duration_s);
  h.background_cps = r.number("background_cps", h.background_cps);
  r.finish();
  if (!(h.duration_s > 0.0)) throw SchemaError(r.child("duration_s"), "must be positive");
  if (!(h.background_cps >= 0.0)) throw SchemaError(r.child("background_cps"), "must be non-negative");
}

inline void read_ple(ObjectReader r, PLEScanConfig& p) {
  p.homogeneous_fwhm_mhz = r.number("homogeneous_fwhm_mhz", p.homogeneous_fwhm_mhz);
  p.scan_range_mhz = r.number("scan_range_mhz", p.scan_range_mhz);
  p.points_per_sweep = static_cast<int>(r.integer("points_per_sweep", p.points_per_sweep));
  p.sweeps = static_cast<int>(r.integer("sweeps", p.sweeps));
  p.jitter_sigma_mhz = r.number("jitter_sigma_mhz", p.jitter_sigma_mhz);
  p.jump_probability = r.number("jump_probability", p.jump_probability);
  p.jump_magnitude_mhz = r.number("jump_magnitude_mhz", p.jump_magnitude_mhz);
  p.peak_counts = r.number("peak_counts", p.peak_counts);
  p.background_counts = r.number("background_counts", p.background_counts);
  p.forced_jump_sweeps = r.integers("forced_jump_sweeps", p.forced_jump_sweeps);
  r.finish();
}

inline void read_echo(ObjectReader r, EchoConfig& e) {
  e.t2_us = r.number("t2_us", e.t2_us);
  e.exponent = r.number("exponent", e.exponent);
  e.y0 = r.number("y0", e.y0);
  e.y1 = r.number("y1", e.y1);
  e.tau_grid_us = r.numbers("tau_grid_us", e.tau_grid_us);
  e.counts_per_point = r.number("counts_per_point", e.counts_per_point);
  r.finish();
}

inline void read_trpl(ObjectReader r, TrplConfig& t) {
  t.t1_ns = r.number("t1_ns", t.t1_ns);
  t.irf_fwhm_ns = r.number("irf_fwhm_ns", t.irf_fwhm_ns);
  t.bin_width_ns = r.number("bin_width_ns", t.bin_width_ns);
  t.bins = static_cast<int>(r.integer("bins", t.bins));
  t.irf_centre_ns = r.number("irf_centre_ns", t.irf_centre_ns);
  t.total_counts = r.number("total_counts", t.total_counts);
  r.finish();
  if (!(t.t1_ns > 0.0)) throw SchemaError(r.child("t1_ns"), "must be positive");
  if (!(t.irf_fwhm_ns > 0.0)) throw SchemaError(r.child("irf_fwhm_ns"), "must be positive");
  if (!(t.bin_width_ns > 0.0)) throw SchemaError(r.child("bin_width_ns"), "must be positive");
  if (t.bins < 4) throw SchemaError(r.child("bins"), "must be at least 4");
  if (!(t.total_counts >= 0.0)) throw SchemaError(r.child("total_counts"), "must be non-negative");
}

inline void read_image(ObjectReader r, SpotImageConfig& c) {
  c.rows = static_cast<int>(r.integer("rows", c.rows));
  c.cols = static_cast<int>(r.integer("cols", c.cols));
  c.pixel_nm = r.number("pixel_nm", c.pixel_nm);
  c.spot_fwhm_nm = r.number("spot_fwhm_nm", c.spot_fwhm_nm);
  c.peak_counts = r.number("peak_counts", c.peak_counts);
  c.background_counts = r.number("background_counts", c.background_counts);
  c.centre_nm.x = r.number("centre_x_nm", c.centre_nm.x);
  c.centre_nm.y = r.number("centre_y_nm", c.centre_nm.y);
  r.finish();
  if (c.rows < 3 || c.cols < 3) throw SchemaError(r.child("rows"), "image must be at least 3x3");
  if (!(c.pixel_nm > 0.0)) throw SchemaError(r.child("pixel_nm"), "must be positive");
  if (!(c.spot_fwhm_nm > 0.0)) throw SchemaError(r.child("spot_fwhm_nm"), "must be positive");
}

inline void read_analysis(ObjectReader r, AnalysisConfig& a) {
  if (auto t = r.object("thresholds")) {
    a.thresholds.one_two = t->number("one_two", a.thresholds.one_two);
    a.thresholds.two_three = t->number("two_three", a.thresholds.two_three);
    a.thresholds.upper = t->number("upper", a.thresholds.upper);
    t->finish();
    if (!(0.0 < a.thresholds.one_two && a.thresholds.one_two < a.thresholds.two_three &&
          a.thresholds.two_three < a.thresholds.upper))
      throw SchemaError(r.child("thresholds"), "need 0 < one_two < two_three < upper");
  }
  a.g2_bin_width_ns = r.number("g2_bin_width_ns", a.g2_bin_width_ns);
  a.g2_window_ns = r.number("g2_window_ns", a.g2_window_ns);
  a.resolution_nm = r.number("resolution_nm", a.resolution_nm);
  a.displacement_binning_nm = r.number("displacement_binning_nm", a.displacement_binning_nm);
  r.finish();
  if (!(a.g2_bin_width_ns > 0.0)) throw SchemaError(r.child("g2_bin_width_ns"), "must be positive");
  if (!(a.g2_window_ns >= 4.0 * a.g2_bin_width_ns))
    throw SchemaError(r.child("g2_window_ns"), "must span at least 4 bins");
  if (!(a.resolution_nm >= 0.0)) throw SchemaError(r.child("resolution_nm"), "must be non-negative");
  if (!(a.displacement_binning_nm > 0.0)) throw SchemaError(r.child("displacement_binning_nm"), "must be positive");
}

}  // namespace detail

inline void RunConfig::validate() const {
  detail::check_section("grid", [&] { grid.validate(); });
  detail::check_section("yield", [&] { yield.validate(); });
  detail::check_section("anneal", [&] { anneal.validate(); });
  detail::check_section("photophysics.emitter", [&] { emitter.validate(); });
  detail::check_section("photophysics.ple", [&] { ple.validate(); });
  detail::check_section("photophysics.echo", [&] { echo.validate(); });
}

/// Builds a RunConfig from a parsed document. Missing sections take the
/// defaults; master_seed is required.
inline RunConfig config_from_json(const json& doc) {
  detail::ObjectReader root(doc, "");
  RunConfig cfg;
  const json* seed = root.get("master_seed");
  if (!seed) throw SchemaError("master_seed", "required field is missing");
  if (!seed->is_number_unsigned() && !(seed->is_number_integer() && seed->get<std::int64_t>() >= 0))
    throw SchemaError("master_seed", "expected a non-negative integer");
  cfg.master_seed = seed->get<std::uint64_t>();
  root.string("$schema", "");
  root.string("description", "");

  if (auto g = root.object("grid")) detail::read_grid(*g, cfg.grid);
  if (auto y = root.object("yield")) detail::read_yield(*y, cfg.yield);
  if (auto a = root.object("anneal")) detail::read_anneal(*a, cfg.anneal);
  if (auto p = root.object("photophysics")) {
    if (auto e = p->object("emitter")) detail::read_emitter(*e, cfg.emitter);
    if (auto h = p->object("hbt")) detail::read_hbt(*h, cfg.hbt);
    if (auto l = p->object("ple")) detail::read_ple(*l, cfg.ple);
    if (auto e = p->object("echo")) detail::read_echo(*e, cfg.echo);
    if (auto t = p->object("trpl")) detail::read_trpl(*t, cfg.trpl);
    if (auto i = p->object("image")) detail::read_image(*i, cfg.image);
    p->finish();
  }
  if (auto a = root.object("analysis")) detail::read_analysis(*a, cfg.analysis);
  cfg.magnetic_field_mt = root.number("magnetic_field_mt", cfg.magnetic_field_mt);
  root.finish();
  cfg.validate();
  return cfg;
}

inline json load_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw SchemaError("$", std::string("not valid JSON: ") + e.what());
  }
}

inline RunConfig load_config(const std::string& path) { return config_from_json(load_json_file(path)); }

/// Fully resolved configuration; reading it back gives the same RunConfig.
inline json config_to_json(const RunConfig& c) {
  json j;
  j["master_seed"] = c.master_seed;
  j["grid"] = {{"rows", c.grid.rows},
               {"cols", c.grid.cols},
               {"spacing_um", c.grid.spacing_um},
               {"depth_um", c.grid.depth_um},
               {"energies_nj", c.grid.energies_nj}};
  j["yield"] = {{"threshold_nj", c.yield.threshold_nj},
                {"gamma", c.yield.gamma},
                {"scale", c.yield.scale},
                {"e1_nj", c.yield.e1_nj},
                {"e2_nj", c.yield.e2_nj},
                {"focal_fwhm_xy_nm", c.yield.focal_fwhm_xy_nm},
                {"focal_fwhm_z_um", c.yield.focal_fwhm_z_um},
                {"count_model", c.yield.count_model == CountModel::poisson ? "poisson" : "binomial"},
                {"n_traps", c.yield.n_traps}};
  j["anneal"] = {{"temperature_k", c.anneal.temperature_k},
                 {"duration_s", c.anneal.duration_s},
                 {"d0_cm2_s", c.anneal.d0_cm2_s},
                 {"activation_energy_ev", c.anneal.activation_energy_ev},
                 {"boltzmann_ev_per_k", c.anneal.boltzmann_ev_per_k},
                 {"conversion_probability", c.anneal.conversion_probability},
                 {"survival_probability", c.anneal.survival_probability}};
  json p;
  p["emitter"] = {{"k_exc_per_ns", c.emitter.k_exc},
                  {"k_rad_per_ns", c.emitter.k_rad},
                  {"k_isc_per_ns", c.emitter.k_isc},
                  {"k_deshelve_per_ns", c.emitter.k_deshelve},
                  {"detection_efficiency", c.emitter.detection_efficiency}};
  p["hbt"] = {{"duration_s", c.hbt.duration_s}, {"background_cps", c.hbt.background_cps}};
  p["ple"] = {{"homogeneous_fwhm_mhz", c.ple.homogeneous_fwhm_mhz},
              {"scan_range_mhz", c.ple.scan_range_mhz},
              {"points_per_sweep", c.ple.points_per_sweep},
              {"sweeps", c.ple.sweeps},
              {"jitter_sigma_mhz", c.ple.jitter_sigma_mhz},
              {"jump_probability", c.ple.jump_probability},
              {"jump_magnitude_mhz", c.ple.jump_magnitude_mhz},
              {"peak_counts", c.ple.peak_counts},
              {"background_counts", c.ple.background_counts},
              {"forced_jump_sweeps", c.ple.forced_jump_sweeps}};
  p["echo"] = {{"t2_us", c.echo.t2_us},
               {"exponent", c.echo.exponent},
               {"y0", c.echo.y0},
               {"y1", c.echo.y1},
               {"tau_grid_us", c.echo.tau_grid_us},
               {"counts_per_point", c.echo.counts_per_point}};
  p["trpl"] = {{"t1_ns", c.trpl.t1_ns},
               {"irf_fwhm_ns", c.trpl.irf_fwhm_ns},
               {"bin_width_ns", c.trpl.bin_width_ns},
               {"bins", c.trpl.bins},
               {"irf_centre_ns", c.trpl.irf_centre_ns},
               {"total_counts", c.trpl.total_counts}};
  p["image"] = {{"rows", c.image.rows},
                {"cols", c.image.cols},
                {"pixel_nm", c.image.pixel_nm},
                {"spot_fwhm_nm", c.image.spot_fwhm_nm},
                {"peak_counts", c.image.peak_counts},
                {"background_counts", c.image.background_counts},
                {"centre_x_nm", c.image.centre_nm.x},
                {"centre_y_nm", c.image.centre_nm.y}};
  j["photophysics"] = p;
  j["analysis"] = {{"thresholds",
                    {{"one_two", c.analysis.thresholds.one_two},
                     {"two_three", c.analysis.thresholds.two_three},
                     {"upper", c.analysis.thresholds.upper}}},
                   {"g2_bin_width_ns", c.analysis.g2_bin_width_ns},
                   {"g2_window_ns", c.analysis.g2_window_ns},
                   {"resolution_nm", c.analysis.resolution_nm},
                   {"displacement_binning_nm", c.analysis.displacement_binning_nm}};
  j["magnetic_field_mt"] = c.magnetic_field_mt;
  return j;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Hash of the canonical (sorted-key, compact) resolved configuration.
inline std::string config_hash(const RunConfig& c) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << fnv1a64(config_to_json(c).dump());
  return os.str();
}

}  // namespace nvforge
