#pragma once

// The four scenario commands. Each writes CSV files into an output
// directory and returns what it wrote so callers can inspect results
// without parsing files.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "darkfringe/config.hpp"
#include "darkfringe/csv.hpp"

namespace darkfringe {

namespace detail {

inline std::filesystem::path prepare_dir(const std::string& dir) {
  std::filesystem::path p(dir);
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir + ": " + ec.message());
  return p;
}

/// Full Jones response of the two-foil setup with foil 1 detuned and moving.
inline ResponseMatrix setup_matrix(const Foil& f1, const Foil& f2, double delta, const MotionProfile& motion,
                                   const TimeGrid& g) {
  const Foil f1d{f1.spec, f1.model.detuned(delta)};
  return compose_time(apply_motion(single_target_matrix(f1d, g), motion), single_target_matrix(f2, g));
}

}  // namespace detail

struct SpectrumResult {
  IntensitySpectrum gated;
  IntensitySpectrum reference;
  std::vector<Peak> peaks;
  std::vector<std::string> files;
};

/// Spectrum of the light behind the analyzer, restricted to the gate, and
/// of the transmitted light without analyzer.
inline SpectrumResult cmd_spectrum(const ScenarioConfig& c, const std::string& out_dir) {
  const TimeGrid g = c.grid_or(1u << 15);
  const Foil f1 = make_foil(c.target1, c.nuclear), f2 = make_foil(c.target2, c.nuclear);
  const MotionProfile motion = c.motion.profile(c.nuclear.wavelength_pm());
  const double t0 = c.spectrum.gate_start_ns.value_or(0.0);
  const double t1 = c.spectrum.gate_end_ns.value_or(g.window());
  const double tau = c.nuclear.lifetime_ns;

  SpectrumResult r;
  auto power = [&](double delta) {
    const auto m = detail::setup_matrix(f1, f2, delta, motion, g);
    auto s = gated_spectrum(m.ps, t0, t1, c.spectrum.span_gamma, tau);
    if (c.spectrum.analyzer_leakage > 0.0) {
      const auto l = gated_spectrum(m.ss, t0, t1, c.spectrum.span_gamma, tau);
      for (std::size_t k = 0; k < s.intensity.size(); ++k) s.intensity[k] += c.spectrum.analyzer_leakage * l.intensity[k];
    }
    return s;
  };
  const auto first = power(0.0);
  r.gated.detuning = first.detuning;
  r.gated.intensity = c.residual.sigma_det > 0.0
                          ? average_over_detuning(c.residual, g, [&](double d) { return power(d).intensity; })
                          : first.intensity;
  r.reference = reference_spectrum(detail::setup_matrix(f1, f2, 0.0, MotionProfile::still(), g), c.spectrum.span_gamma, tau);
  // a dark output holds only round-off; lines are sought only above a
  // floor tied to the unit incident intensity
  const double gated_max = *std::max_element(r.gated.intensity.begin(), r.gated.intensity.end());
  if (gated_max > 1e-12) r.peaks = merge_peaks(find_peaks(r.gated, c.spectrum.peak_threshold), c.spectrum.merge_gamma);

  const auto dir = detail::prepare_dir(out_dir);
  csv::Table gated;
  gated.add("detuning_gamma", r.gated.detuning);
  gated.add("intensity_arb", r.gated.intensity);
  csv::write((dir / "gated_spectrum.csv").string(), gated);
  csv::Table ref;
  ref.add("detuning_gamma", r.reference.detuning);
  ref.add("transmission", r.reference.intensity);
  csv::write((dir / "reference_spectrum.csv").string(), ref);
  csv::Table peaks;
  std::vector<double> pos, h, w;
  for (const auto& p : r.peaks) {
    pos.push_back(p.position);
    h.push_back(p.height);
    w.push_back(p.fwhm);
  }
  peaks.add("position_gamma", pos);
  peaks.add("height_arb", h);
  peaks.add("fwhm_gamma", w);
  csv::write((dir / "gated_peaks.csv").string(), peaks);
  r.files = {"gated_spectrum.csv", "reference_spectrum.csv", "gated_peaks.csv"};
  return r;
}

struct TimeResult {
  TimeGrid grid;
  std::vector<double> t_ns;
  std::vector<double> intensity;  // behind the analyzer, per ns relative to the incident pulse
  std::vector<std::string> files;
};

/// Time-dependent intensity behind the analyzer over one bunch spacing.
inline TimeResult cmd_time(const ScenarioConfig& c, const std::string& out_dir) {
  TimeResult r;
  r.grid = c.grid_or(1u << 15);
  const Foil f1 = make_foil(c.target1, c.nuclear), f2 = make_foil(c.target2, c.nuclear);
  const MotionProfile motion = c.motion.profile(c.nuclear.wavelength_pm());
  std::vector<double> I;
  if (c.spectrum.analyzer_leakage == 0.0) {
    I = TwoTargetPropagator(f1, f2, r.grid).averaged(c.residual, motion);
  } else {
    I = average_over_detuning(c.residual, r.grid, [&](double d) {
      return analyzer_intensity(detail::setup_matrix(f1, f2, d, motion, r.grid), c.spectrum.analyzer_leakage);
    });
  }
  for (std::size_t k = 0; k < I.size() && r.grid.time(k) < c.cycle.bunch_spacing_ns - 1e-9; ++k) {
    r.t_ns.push_back(r.grid.time(k));
    r.intensity.push_back(I[k]);
  }
  const auto dir = detail::prepare_dir(out_dir);
  csv::Table t;
  t.add("t_ns", r.t_ns);
  t.add("intensity_per_ns", r.intensity);
  csv::write((dir / "time_spectrum.csv").string(), t);

  csv::Table m;
  std::vector<double> mt, mz;
  for (const auto& t_ : r.t_ns) {
    mt.push_back(t_);
    mz.push_back(motion.z_right(t_));
  }
  m.add("t_ns", mt);
  m.add("z_pm", mz);
  csv::write((dir / "motion.csv").string(), m);
  r.files = {"time_spectrum.csv", "motion.csv"};
  return r;
}

struct CycleOutput {
  CycleResult cycle;
  std::vector<std::vector<double>> sampled;  // folded events [bunch - 1][bin], empty without events
  EnhancementTrace enhancement;
  EnhancementTrace background_enhancement;
  std::vector<std::string> files;
};

/// Simulates control cycles, folds the sampled events per bunch and forms
/// the signal/reference enhancement.
inline CycleOutput cmd_cycle(const ScenarioConfig& c, const std::string& out_dir) {
  if (c.cycles > 0 && !c.seed) throw ConfigError("cycle: event sampling needs a seed");
  CycleOutput r;
  const TimeGrid g = c.grid_or(1u << 13);
  const Foil f1 = make_foil(c.target1, c.nuclear), f2 = make_foil(c.target2, c.nuclear);
  r.cycle = simulate_control_cycle(f1, f2, c.voltage, c.plate, c.residual, c.cycle, g, c.cycles, c.seed.value_or(0));
  const auto& cy = r.cycle;
  const std::size_t nbins = c.cycle.bins_per_bunch();
  const auto nb = static_cast<std::size_t>(c.cycle.n_bunches);

  // counts per bunch and bin: sampled events if any, otherwise expectations
  std::vector<std::vector<double>> counts;
  if (c.cycles > 0) {
    r.sampled = fold_events(cy.events, c.cycle.n_bunches, c.cycle.bin_width_ns, nbins);
    counts = r.sampled;
  } else {
    counts = cy.rates;
  }
  const auto& sig = counts[static_cast<std::size_t>(c.cycle.signal_bunch_index - 1)];
  const auto& ref = counts[static_cast<std::size_t>(c.cycle.reference_bunch_index - 1)];
  // bins inside the prompt veto carry no information
  std::vector<double> sig_v, ref_v, t_v;
  for (std::size_t k = 0; k < nbins; ++k) {
    if (cy.bin_start_ns[k] < c.cycle.prompt_veto_ns) continue;
    t_v.push_back(cy.bin_start_ns[k]);
    sig_v.push_back(sig[k]);
    ref_v.push_back(ref[k]);
  }
  // Expected rates are per cycle, so the count floor only applies to
  // sampled counts. A trace with nothing above the floor is written fully
  // masked instead of aborting the run.
  const double floor = c.cycles > 0 ? c.enhancement.floor_counts : 0.0;
  auto guarded = [&](double rho) {
    try {
      return background_enhancement(sig_v, ref_v, std::vector<double>(sig_v.size(), rho), floor);
    } catch (const AnalysisError&) {
      EnhancementTrace e;
      e.floor = floor;
      e.xi.assign(sig_v.size(), std::numeric_limits<double>::quiet_NaN());
      e.masked.assign(sig_v.size(), true);
      return e;
    }
  };
  r.enhancement = guarded(0.0);
  r.background_enhancement = guarded(c.enhancement.background_counts_per_bin);

  const auto dir = detail::prepare_dir(out_dir);
  const double n_scale = c.cycles > 0 ? static_cast<double>(c.cycles) : 1.0;
  {
    csv::Table t;
    std::vector<double> b, tt, e, s;
    for (std::size_t i = 0; i < nb; ++i)
      for (std::size_t k = 0; k < nbins; ++k) {
        b.push_back(static_cast<double>(i + 1));
        tt.push_back(cy.bin_start_ns[k]);
        e.push_back(cy.rates[i][k] * n_scale);
        s.push_back(r.sampled.empty() ? 0.0 : r.sampled[i][k]);
      }
    t.add("bunch_index", b);
    t.add("t_ns", tt);
    t.add("expected_counts", e);
    t.add("sampled_counts", s);
    csv::write((dir / "bunch_spectra.csv").string(), t);
  }
  {
    csv::Table t;
    std::vector<double> b, e, s;
    for (std::size_t i = 0; i < nb; ++i) {
      b.push_back(static_cast<double>(i + 1));
      e.push_back(cy.integrated[i] * n_scale);
      double acc = 0.0;
      if (!r.sampled.empty())
        for (double v : r.sampled[i]) acc += v;
      s.push_back(acc);
    }
    t.add("bunch_index", b);
    t.add("expected_counts", e);
    t.add("sampled_counts", s);
    csv::write((dir / "bunch_counts.csv").string(), t);
  }
  if (!r.sampled.empty()) {
    // same layout the fit command reads
    std::ofstream os(dir / "histogram.csv", std::ios::binary);
    if (!os) throw std::runtime_error("cannot write histogram.csv");
    os << "bunch_index,t_ns,counts\n";
    for (std::size_t i = 0; i < nb; ++i)
      for (std::size_t k = 0; k < nbins; ++k)
        os << i + 1 << ',' << csv::number(cy.bin_start_ns[k]) << ',' << csv::number(r.sampled[i][k]) << '\n';
    r.files.push_back("histogram.csv");
  }
  {
    csv::Table t;
    std::vector<double> m1;
    for (std::size_t k = 0; k < t_v.size(); ++k) m1.push_back(r.enhancement.masked[k] ? 1.0 : 0.0);
    t.add("t_ns", t_v);
    t.add("signal_counts", sig_v);
    t.add("reference_counts", ref_v);
    t.add("xi", r.enhancement.xi);
    t.add("xi_background", r.background_enhancement.xi);
    t.add("masked", m1);
    csv::write((dir / "enhancement.csv").string(), t);
  }
  {
    csv::Table t;
    std::vector<double> tt, z;
    for (double s = 0.0; s < c.cycle.cycle_length_ns(); s += 1.0) {
      tt.push_back(s);
      z.push_back(cy.motion.z_right(s));
    }
    t.add("t_ns", tt);
    t.add("z_pm", z);
    csv::write((dir / "cycle_motion.csv").string(), t);
  }
  r.files.insert(r.files.end(), {"bunch_spectra.csv", "bunch_counts.csv", "enhancement.csv", "cycle_motion.csv"});
  return r;
}

struct FitOutput {
  FitResult fit;
  std::vector<std::string> files;
};

/// Fits the configured model to one bunch of a measured histogram.
inline FitOutput cmd_fit(const ScenarioConfig& c, const std::string& data_csv, const std::string& out_dir) {
  const auto& fs = c.fit;
  const std::string path = data_csv.empty() ? fs.data_csv : data_csv;
  if (path.empty()) throw ConfigError("fit: no data file given");
  const auto data = csv::select_bunch(csv::read_histogram(path), fs.bunch_index);
  const auto& m = fs.free;  // the scale is always free

  FitOptions o;
  o.model = fs.model;
  o.objective = fs.objective;
  o.channel = fs.channel;
  o.prompt_veto_ns = fs.prompt_veto_ns;
  o.t_max_ns = fs.t_max_ns;
  o.max_iterations = fs.max_iterations;
  o.tolerance = fs.tolerance;
  o.restarts = fs.restarts;
  o.grid = c.grid_or(1u << 13);
  o.residual = ResidualMotionModel{c.residual.sigma_det, fs.quadrature_order, fs.quadrature_order, 1e-6,
                                   c.cycle.bunch_spacing_ns, false};
  o.constants = c.nuclear;

  FitOutput r;
  try {
    r.fit = fit_targets(data, c.target1, m, o, c.target2, fs.model == FitModelKind::two_target
                                                               ? (m.sigma_det ? fs.initial_sigma_det_gamma : c.residual.sigma_det)
                                                               : 0.0);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("fit: ") + e.what());
  }

  const auto dir = detail::prepare_dir(out_dir);
  {
    std::ofstream os(dir / "fit_parameters.csv", std::ios::binary);
    if (!os) throw std::runtime_error("cannot write fit_parameters.csv");
    os << "parameter,value,uncertainty\n";
    for (std::size_t i = 0; i < r.fit.names.size(); ++i) {
      const std::string n = r.fit.names[i] == "sigma_det" ? "sigma_det_gamma" : r.fit.names[i];
      os << n << ',' << csv::number(r.fit.values[i]) << ',' << csv::number(r.fit.errors[i]) << '\n';
    }
  }
  {
    csv::Table t;
    std::vector<double> tt, n, e;
    for (std::size_t j = 0; j < r.fit.used_bins.size(); ++j) {
      tt.push_back(data.t_ns[r.fit.used_bins[j]]);
      n.push_back(data.counts[r.fit.used_bins[j]]);
      e.push_back(r.fit.expected[j]);
    }
    t.add("t_ns", tt);
    t.add("counts", n);
    t.add("expected_counts", e);
    csv::write((dir / "fit_curve.csv").string(), t);
  }
  {
    std::ofstream os(dir / "fit_report.txt", std::ios::binary);
    if (!os) throw std::runtime_error("cannot write fit_report.txt");
    os << "data: " << path << " (bunch " << fs.bunch_index << ", " << r.fit.used_bins.size() << " bins)\n";
    os << "model: " << (fs.model == FitModelKind::single_target ? "single_target" : "two_target") << "\n";
    os << "objective: " << (fs.objective == Objective::poisson ? "poisson deviance" : "weighted chi2") << " = "
       << csv::number(r.fit.objective) << "\n";
    os << "status: " << r.fit.message << " after " << r.fit.iterations << " iterations, " << r.fit.evaluations
       << " model evaluations\n";
    for (std::size_t i = 0; i < r.fit.names.size(); ++i)
      os << "  " << r.fit.names[i] << " = " << csv::number(r.fit.values[i]) << " +- " << csv::number(r.fit.errors[i])
         << "\n";
  }
  r.files = {"fit_parameters.csv", "fit_curve.csv", "fit_report.txt"};
  return r;
}

}  // namespace darkfringe
