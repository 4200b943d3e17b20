#pragma once

// The 40-bunch control cycle: piezo voltage pattern in the signal bunch,
// acoustic echoes in later bunches, residual vibrations throughout, and
// the signal/reference enhancement analysis.

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <vector>

#include "darkfringe/acoustics.hpp"

namespace darkfringe {

struct VoltagePattern {
  enum class Kind { none, single, double_pulse };
  Kind kind = Kind::single;
  double tau1_ns = 32.0;
  double pulse_width_ns = 20.0;
  double tau2_ns = 60.0;          // delay of the opposite pulse (double only)
  double amplitude_pm = 43.0125;  // plateau displacement; half a wavelength by default
  double rise_time_ns = 5.0;
  double residual_fraction = 0.0;  // displacement left after the pulse, as a fraction of the amplitude

  void validate() const {
    if (!(pulse_width_ns > 0.0) || !(rise_time_ns >= 0.0))
      throw std::domain_error("VoltagePattern: width must be positive and rise time >= 0");
    if (kind == Kind::double_pulse && !(tau2_ns > 0.0))
      throw std::domain_error("VoltagePattern: double pattern needs tau2 > 0");
  }
};

namespace detail {
inline MotionProfile pulse_motion(double t0, double amp, const VoltagePattern& p) {
  const double r = p.rise_time_ns, w = p.pulse_width_ns;
  MotionProfile m;
  m.knots = {{std::min(0.0, t0), 0.0}, {t0, 0.0}, {t0 + r, amp}, {t0 + r + w, amp}, {t0 + 2 * r + w, amp * p.residual_fraction}};
  return m;
}
}  // namespace detail

/// Displacement of foil 1 in cycle time (t = 0 at the signal pulse).
/// single: ramp up over the rise time at tau1, hold for the pulse width,
/// ramp back to residual_fraction * amplitude. double: the same plus an
/// opposite-polarity copy starting at tau1 + tau2.
inline MotionProfile voltage_to_motion(const VoltagePattern& p, double wavelength_pm = 86.025) {
  p.validate();
  MotionProfile m;
  m.wavelength_pm = wavelength_pm;
  if (p.kind == VoltagePattern::Kind::none || p.amplitude_pm == 0.0) return m;
  m = detail::pulse_motion(p.tau1_ns, p.amplitude_pm, p);
  if (p.kind == VoltagePattern::Kind::double_pulse) m = m + detail::pulse_motion(p.tau1_ns + p.tau2_ns, -p.amplitude_pm, p);
  m.wavelength_pm = wavelength_pm;
  return m;
}

struct EnhancementTrace {
  std::vector<double> xi;  // NaN where masked
  std::vector<bool> masked;
  double floor = 0.0;

  [[nodiscard]] std::size_t valid_count() const {
    return static_cast<std::size_t>(std::count(masked.begin(), masked.end(), false));
  }
};

/// (signal + rho) / (reference + rho), masked where reference + rho < floor.
inline EnhancementTrace background_enhancement(const std::vector<double>& signal, const std::vector<double>& reference,
                                               const std::vector<double>& rho, double floor = 10.0) {
  if (signal.size() != reference.size() || rho.size() != signal.size())
    throw std::invalid_argument("enhancement: traces must share the same binning");
  EnhancementTrace e;
  e.floor = floor;
  for (std::size_t i = 0; i < signal.size(); ++i) {
    if (!(rho[i] >= 0.0)) throw std::domain_error("enhancement: background must be >= 0");
    const double den = reference[i] + rho[i];
    const bool m = !(den >= floor) || den <= 0.0;
    e.masked.push_back(m);
    e.xi.push_back(m ? std::numeric_limits<double>::quiet_NaN() : (signal[i] + rho[i]) / den);
  }
  if (e.valid_count() == 0) throw AnalysisError("enhancement: every bin is below the count floor");
  return e;
}

inline EnhancementTrace enhancement(const std::vector<double>& signal, const std::vector<double>& reference,
                                    double floor = 10.0) {
  return background_enhancement(signal, reference, std::vector<double>(signal.size(), 0.0), floor);
}

struct CycleResult {
  BunchCycleConfig cycle;
  MotionProfile motion;                     // foil 1 displacement in cycle time
  std::vector<double> bin_start_ns;         // within a bunch
  std::vector<std::vector<double>> rates;   // expected counts per cycle [bunch - 1][bin]
  std::vector<double> integrated;           // expected counts per cycle and bunch
  EventStream events;
  std::uint64_t n_cycles = 0;
};

/// Foil 1 motion over one cycle: the voltage pattern plus acoustic echoes of
/// the kick it launches, including late echoes of kicks from earlier cycles.
inline MotionProfile cycle_motion(const VoltagePattern& pattern, const PlateSpec& plate, const BunchCycleConfig& cycle,
                                  double wavelength_pm = 86.025) {
  MotionProfile m = voltage_to_motion(pattern, wavelength_pm);
  if (pattern.kind == VoltagePattern::Kind::none || plate.kick_amplitude_pm == 0.0 || plate.reflection_loss >= 1.0)
    return m;
  const double period = cycle.cycle_length_ns();
  const int max_cycles_back = 20;
  for (int c = 0; c <= max_cycles_back; ++c) {
    const double t_kick = pattern.tau1_ns - c * period;
    MotionProfile e = acoustic_motion(plate, t_kick, period, false, 1.0, wavelength_pm);
    // keep only the part of the train inside this cycle
    MotionProfile clipped = e.relative_to(0.0).truncated(period);
    bool moving = !TwoTargetPropagator::is_still(clipped);
    if (moving) m = m + clipped;
    const int first_j = static_cast<int>(std::ceil(c * period / (roundtrip_time(plate) * 1e3)));
    if (c > 0 && std::pow(1.0 - plate.reflection_loss, first_j) < 1e-6) break;
  }
  return m;
}

/// Runs n_cycles control cycles. Every bunch sees the cycle motion relative
/// to its arrival time; bunches are independent (no carry-over of nuclear
/// decay into the next bunch). Residual vibrations enter as one Doppler
/// detuning per cycle drawn on the quadrature nodes, so the expected rates
/// equal the quadrature average.
inline CycleResult simulate_control_cycle(const Foil& f1, const Foil& f2, const VoltagePattern& pattern,
                                          const PlateSpec& plate, const ResidualMotionModel& residual,
                                          const BunchCycleConfig& cycle, const TimeGrid& g, std::uint64_t n_cycles,
                                          std::uint64_t seed) {
  cycle.validate();
  residual.validate();
  g.validate();
  if (g.window() < cycle.bunch_spacing_ns) throw ConfigError("time grid shorter than the bunch spacing");

  CycleResult res;
  res.cycle = cycle;
  res.n_cycles = n_cycles;
  res.motion = cycle_motion(pattern, plate, cycle);

  const auto rule = detuning_rule(residual.sigma_det, residual.quadrature_order);
  const TwoTargetPropagator prop(f1, f2, g);
  const std::size_t nbins = cycle.bins_per_bunch();
  for (std::size_t b = 0; b < nbins; ++b) res.bin_start_ns.push_back(cycle.bin_width_ns * static_cast<double>(b));

  auto binned = [&](const std::vector<double>& I) {
    std::vector<double> r(nbins, 0.0);
    for (std::size_t k = 0; k < I.size(); ++k) {
      const double t = g.time(k);
      const auto bin = static_cast<std::size_t>(t / cycle.bin_width_ns);
      if (bin >= nbins) break;
      if (cycle.bin_width_ns * static_cast<double>(bin) < cycle.prompt_veto_ns) continue;
      r[bin] += cycle.counts_per_unit_intensity * I[k] * g.dt;
    }
    return r;
  };

  // per node, per bunch rate tables; still bunches share one evaluation
  std::vector<RateTable> tables(rule.nodes.size());
  for (auto& t : tables) {
    t.bin_width_ns = cycle.bin_width_ns;
    t.rates.resize(static_cast<std::size_t>(cycle.n_bunches));
  }
  std::vector<std::vector<double>> still_cache;
  for (int b = 1; b <= cycle.n_bunches; ++b) {
    const MotionProfile rel = res.motion.relative_to(cycle.bunch_start(b)).truncated(cycle.bunch_spacing_ns);
    const bool still = TwoTargetPropagator::is_still(rel);
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
      std::vector<double> r;
      if (still) {
        if (still_cache.size() <= i) still_cache.push_back(binned(prop.intensity(rule.nodes[i])));
        r = still_cache[i];
      } else {
        r = binned(prop.intensity(rule.nodes[i], rel));
      }
      tables[i].rates[static_cast<std::size_t>(b - 1)] = std::move(r);
    }
  }

  res.rates.assign(static_cast<std::size_t>(cycle.n_bunches), std::vector<double>(nbins, 0.0));
  for (std::size_t i = 0; i < rule.nodes.size(); ++i)
    for (std::size_t b = 0; b < res.rates.size(); ++b)
      for (std::size_t k = 0; k < nbins; ++k) res.rates[b][k] += rule.weights[i] * tables[i].rates[b][k];
  for (const auto& r : res.rates) {
    double s = 0.0;
    for (double v : r) s += v;
    res.integrated.push_back(s);
  }
  if (n_cycles > 0) res.events = poisson_events_mixture(tables, rule.weights, n_cycles, seed, cycle.bunch_spacing_ns);
  return res;
}

}  // namespace darkfringe
