#pragma once

// Scenario files: one JSON document, every key spelled with its unit.
// Unknown keys are rejected with their path so typos never pass silently.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "darkfringe/errors.hpp"
#include "darkfringe/fit.hpp"

namespace darkfringe {

/// Motion of foil 1 for the spectrum and time commands.
struct MotionSpec {
  enum class Kind { none, step, window, knots };
  Kind kind = Kind::none;
  double start_ns = 10.0;
  double end_ns = 110.0;     // window only
  double phase_rad = pi;     // phase reached after the step
  double rise_ns = 0.0;
  std::vector<std::pair<double, double>> knots_ns_pm;

  [[nodiscard]] MotionProfile profile(double wavelength_pm) const {
    const double dz = phase_rad / two_pi * wavelength_pm;
    MotionProfile p;
    p.wavelength_pm = wavelength_pm;
    switch (kind) {
      case Kind::none: break;
      case Kind::step: p = MotionProfile::step(start_ns, dz, rise_ns); break;
      case Kind::window:
        p.knots = {{std::min(0.0, start_ns), 0.0}, {start_ns, 0.0}, {start_ns + rise_ns, dz},
                   {end_ns, dz}, {end_ns + rise_ns, 0.0}};
        break;
      case Kind::knots: p.knots = knots_ns_pm; break;
    }
    p.wavelength_pm = wavelength_pm;
    p.validate();
    return p;
  }
};

struct SpectrumSettings {
  std::optional<double> gate_start_ns;
  std::optional<double> gate_end_ns;
  double span_gamma = 100.0;
  double analyzer_leakage = 0.0;
  double peak_threshold = 0.05;  // relative to the highest point
  double merge_gamma = 6.0;      // maxima closer than this count as one line
};

struct EnhancementSettings {
  double floor_counts = 10.0;
  double background_counts_per_bin = 0.0;
};

struct FitSettings {
  FitModelKind model = FitModelKind::single_target;
  Objective objective = Objective::poisson;
  Channel channel = Channel::sigma_sigma;
  FitMask free;
  std::string data_csv;
  int bunch_index = 1;
  double initial_sigma_det_gamma = 0.1;
  int max_iterations = 5000;
  double tolerance = 1e-10;
  int restarts = 3;
  double prompt_veto_ns = 16.0;
  double t_max_ns = 192.0;
  int quadrature_order = 41;
};

struct ScenarioConfig {
  NuclearConstants nuclear;
  TargetSpec target1{1.0, 33.0, pi / 4};
  TargetSpec target2{1.0, 33.0, -pi / 4};
  MotionSpec motion;
  VoltagePattern voltage;
  PlateSpec plate;
  ResidualMotionModel residual;
  BunchCycleConfig cycle;
  std::optional<TimeGrid> grid;  // each command has its own default
  SpectrumSettings spectrum;
  EnhancementSettings enhancement;
  FitSettings fit;
  std::optional<std::uint64_t> seed;
  std::uint64_t cycles = 0;
  std::string output_dir = ".";

  /// Grid used by a command whose default resolution is n_default samples.
  [[nodiscard]] TimeGrid grid_or(std::size_t n_default) const {
    return grid ? *grid : TimeGrid{0.0, 0.25, n_default, 0.2};
  }
};

namespace detail {

using nlohmann::json;

/// Reads fields of one JSON object and remembers which keys were used.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  [[nodiscard]] bool has(const std::string& k) const { return j_.contains(k); }

  template <class T>
  void get(const std::string& k, T& out) {
    if (!j_.contains(k)) return;
    used_.insert(k);
    try {
      out = j_.at(k).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where(k) + ": wrong type");
    }
  }

  void get_number(const std::string& k, double& out) {
    if (!j_.contains(k)) return;
    if (!j_.at(k).is_number()) throw ConfigError(where(k) + ": expected a number");
    get(k, out);
  }

  template <class E>
  void get_enum(const std::string& k, E& out, const std::vector<std::pair<std::string, E>>& names) {
    if (!j_.contains(k)) return;
    std::string s;
    get(k, s);
    for (const auto& [n, v] : names)
      if (n == s) {
        out = v;
        return;
      }
    std::string allowed;
    for (const auto& [n, v] : names) allowed += (allowed.empty() ? "" : ", ") + n;
    throw ConfigError(where(k) + ": unknown value '" + s + "' (allowed: " + allowed + ")");
  }

  ObjectReader child(const std::string& k) {
    used_.insert(k);
    return {j_.at(k), where(k)};
  }

  [[nodiscard]] std::string where(const std::string& k) const { return path_ + "." + k; }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!used_.count(k)) throw ConfigError(where(k) + ": unknown key");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

inline void read_nuclear(ObjectReader r, NuclearConstants& c) {
  r.get_number("gamma_neV", c.gamma_neV);
  r.get_number("lifetime_ns", c.lifetime_ns);
  r.get_number("energy_keV", c.energy_keV);
  r.get_number("ground_moment_muN", c.ground_moment_muN);
  r.get_number("excited_moment_muN", c.excited_moment_muN);
  r.get_number("cross_section_cm2", c.cross_section_cm2);
  r.get_number("iron_number_density_per_cm3", c.iron_number_density_per_cm3);
  r.finish();
}

inline void read_angle(ObjectReader& r, const std::string& stem, double& out) {
  if (r.has(stem + "_rad") && r.has(stem + "_pi"))
    throw ConfigError(r.where(stem) + ": give either " + stem + "_rad or " + stem + "_pi, not both");
  r.get_number(stem + "_rad", out);
  if (r.has(stem + "_pi")) {
    double v = 0.0;
    r.get_number(stem + "_pi", v);
    out = v * pi;
  }
}

inline void read_target(ObjectReader r, TargetSpec& t) {
  r.get_number("thickness_um", t.thickness_um);
  r.get_number("b_field_T", t.b_field_T);
  read_angle(r, "alpha", t.alpha_rad);
  r.get_number("mu_e_d", t.mu_e_d);
  r.get_number("enrichment", t.enrichment);
  r.get_number("lamb_moessbauer", t.lamb_moessbauer);
  r.finish();
}

inline void read_motion(ObjectReader r, MotionSpec& m) {
  r.get_enum("kind", m.kind,
             {{"none", MotionSpec::Kind::none}, {"step", MotionSpec::Kind::step}, {"window", MotionSpec::Kind::window},
              {"knots", MotionSpec::Kind::knots}});
  r.get_number("start_ns", m.start_ns);
  r.get_number("end_ns", m.end_ns);
  read_angle(r, "phase", m.phase_rad);
  r.get_number("rise_ns", m.rise_ns);
  r.get("knots_ns_pm", m.knots_ns_pm);
  r.finish();
  if (m.kind == MotionSpec::Kind::window && !(m.end_ns > m.start_ns))
    throw ConfigError("motion: window needs end_ns > start_ns");
  if (m.kind == MotionSpec::Kind::knots && m.knots_ns_pm.empty()) throw ConfigError("motion: knots_ns_pm is empty");
  if (!(m.rise_ns >= 0.0)) throw ConfigError("motion: rise_ns must be >= 0");
}

inline void read_voltage(ObjectReader r, VoltagePattern& v) {
  r.get_enum("kind", v.kind,
             {{"none", VoltagePattern::Kind::none}, {"single", VoltagePattern::Kind::single},
              {"double", VoltagePattern::Kind::double_pulse}});
  r.get_number("tau1_ns", v.tau1_ns);
  r.get_number("pulse_width_ns", v.pulse_width_ns);
  r.get_number("tau2_ns", v.tau2_ns);
  r.get_number("amplitude_pm", v.amplitude_pm);
  r.get_number("rise_time_ns", v.rise_time_ns);
  r.get_number("residual_fraction", v.residual_fraction);
  r.finish();
}

inline void read_plate(ObjectReader r, PlateSpec& p) {
  r.get_number("thickness_mm", p.thickness_mm);
  r.get_number("sound_velocity_m_per_s", p.sound_velocity_m_per_s);
  r.get_number("reflection_loss", p.reflection_loss);
  r.get_number("kick_amplitude_pm", p.kick_amplitude_pm);
  r.get_number("kick_rise_ns", p.kick_rise_ns);
  r.get_number("kick_duration_ns", p.kick_duration_ns);
  r.get_number("dispersion_ns", p.dispersion_ns);
  r.finish();
}

inline void read_residual(ObjectReader r, ResidualMotionModel& m) {
  r.get_number("sigma_det_gamma", m.sigma_det);
  r.get("quadrature_order", m.quadrature_order);
  r.get("max_order", m.max_order);
  r.get_number("tolerance", m.tolerance);
  r.get_number("window_ns", m.window_ns);
  r.get("adaptive", m.adaptive);
  r.finish();
}

inline void read_cycle(ObjectReader r, BunchCycleConfig& c) {
  r.get("n_bunches", c.n_bunches);
  r.get_number("bunch_spacing_ns", c.bunch_spacing_ns);
  r.get("signal_bunch_index", c.signal_bunch_index);
  r.get("reference_bunch_index", c.reference_bunch_index);
  r.get_number("prompt_veto_ns", c.prompt_veto_ns);
  r.get_number("bin_width_ns", c.bin_width_ns);
  r.get_number("counts_per_unit_intensity", c.counts_per_unit_intensity);
  r.finish();
}

inline void read_grid(ObjectReader r, TimeGrid& g) {
  r.get_number("dt_ns", g.dt);
  r.get("n_samples", g.n_samples);
  r.get_number("tail_decay_per_ns", g.tail_decay_per_ns);
  r.finish();
}

inline void read_spectrum(ObjectReader r, SpectrumSettings& s) {
  double v = 0.0;
  if (r.has("gate_start_ns")) {
    r.get_number("gate_start_ns", v);
    s.gate_start_ns = v;
  }
  if (r.has("gate_end_ns")) {
    r.get_number("gate_end_ns", v);
    s.gate_end_ns = v;
  }
  r.get_number("span_gamma", s.span_gamma);
  r.get_number("analyzer_leakage", s.analyzer_leakage);
  r.get_number("peak_threshold", s.peak_threshold);
  r.get_number("merge_gamma", s.merge_gamma);
  r.finish();
  if (!(s.span_gamma > 0.0)) throw ConfigError("spectrum.span_gamma must be positive");
  if (!(s.merge_gamma >= 0.0)) throw ConfigError("spectrum.merge_gamma must be >= 0");
  if (!(s.analyzer_leakage >= 0.0 && s.analyzer_leakage <= 1.0))
    throw ConfigError("spectrum.analyzer_leakage must be in [0,1]");
  if (s.gate_start_ns && s.gate_end_ns && !(*s.gate_end_ns > *s.gate_start_ns))
    throw ConfigError("spectrum: gate_end_ns must exceed gate_start_ns");
}

inline void read_enhancement(ObjectReader r, EnhancementSettings& e) {
  r.get_number("floor_counts", e.floor_counts);
  r.get_number("background_counts_per_bin", e.background_counts_per_bin);
  r.finish();
  if (!(e.background_counts_per_bin >= 0.0)) throw ConfigError("enhancement.background_counts_per_bin must be >= 0");
}

inline void read_fit(ObjectReader r, FitSettings& f) {
  r.get_enum("model", f.model, {{"single_target", FitModelKind::single_target}, {"two_target", FitModelKind::two_target}});
  r.get_enum("objective", f.objective, {{"poisson", Objective::poisson}, {"least_squares", Objective::least_squares}});
  r.get_enum("channel", f.channel,
             {{"sigma_sigma", Channel::sigma_sigma}, {"sigma_pi", Channel::sigma_pi}, {"pi_pi", Channel::pi_pi},
              {"pi_sigma", Channel::pi_sigma}});
  if (r.has("free")) {
    std::vector<std::string> names;
    r.get("free", names);
    for (const auto& n : names) {
      if (n == "thickness_um") f.free.thickness_um = true;
      else if (n == "b_field_T") f.free.b_field_T = true;
      else if (n == "alpha_rad") f.free.alpha_rad = true;
      else if (n == "mu_e_d") f.free.mu_e_d = true;
      else if (n == "sigma_det_gamma") f.free.sigma_det = true;
      else throw ConfigError("fit.free: unknown parameter '" + n + "'");
    }
  }
  r.get("data_csv", f.data_csv);
  r.get("bunch_index", f.bunch_index);
  r.get_number("initial_sigma_det_gamma", f.initial_sigma_det_gamma);
  r.get("max_iterations", f.max_iterations);
  r.get_number("tolerance", f.tolerance);
  r.get("restarts", f.restarts);
  r.get_number("prompt_veto_ns", f.prompt_veto_ns);
  r.get_number("t_max_ns", f.t_max_ns);
  r.get("quadrature_order", f.quadrature_order);
  r.finish();
  if (f.max_iterations < 1 || f.restarts < 0) throw ConfigError("fit: max_iterations >= 1 and restarts >= 0 required");
}

}  // namespace detail

/// Parses and validates a scenario. Any problem is a ConfigError.
inline ScenarioConfig parse_config(const std::string& text, const std::string& name = "config") {
  using detail::json;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(name + ": " + e.what());
  }
  ScenarioConfig c;
  detail::ObjectReader r(j, name);
  try {
    if (r.has("nuclear")) detail::read_nuclear(r.child("nuclear"), c.nuclear);
    if (r.has("target1")) detail::read_target(r.child("target1"), c.target1);
    if (r.has("target2")) detail::read_target(r.child("target2"), c.target2);
    if (r.has("motion")) detail::read_motion(r.child("motion"), c.motion);
    if (r.has("voltage")) detail::read_voltage(r.child("voltage"), c.voltage);
    if (r.has("plate")) detail::read_plate(r.child("plate"), c.plate);
    if (r.has("residual")) detail::read_residual(r.child("residual"), c.residual);
    if (r.has("cycle")) detail::read_cycle(r.child("cycle"), c.cycle);
    if (r.has("grid")) {
      TimeGrid g;
      detail::read_grid(r.child("grid"), g);
      c.grid = g;
    }
    if (r.has("spectrum")) detail::read_spectrum(r.child("spectrum"), c.spectrum);
    if (r.has("enhancement")) detail::read_enhancement(r.child("enhancement"), c.enhancement);
    if (r.has("fit")) detail::read_fit(r.child("fit"), c.fit);
    if (r.has("seed")) {
      std::uint64_t s = 0;
      r.get("seed", s);
      c.seed = s;
    }
    r.get("cycles", c.cycles);
    r.get("output_dir", c.output_dir);
    r.finish();

    // model-level validation, reported as configuration errors
    c.target1.validate();
    c.target2.validate();
    make_model(c.target1, c.nuclear).validate();
    c.voltage.validate();
    c.plate.validate();
    c.residual.validate();
    c.cycle.validate();
    if (c.grid) c.grid->validate();
    static_cast<void>(c.motion.profile(c.nuclear.wavelength_pm()));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(name + ": " + e.what());
  }
  return c;
}

inline ScenarioConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  auto c = parse_config(ss.str(), path);
  // relative data and output paths are taken from the config's directory
  const auto base = std::filesystem::path(path).parent_path();
  if (!c.fit.data_csv.empty() && std::filesystem::path(c.fit.data_csv).is_relative())
    c.fit.data_csv = (base / c.fit.data_csv).string();
  if (std::filesystem::path(c.output_dir).is_relative()) c.output_dir = (base / c.output_dir).lexically_normal().string();
  return c;
}

}  // namespace darkfringe
