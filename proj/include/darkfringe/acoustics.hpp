#pragma once

// Sound pulse launched by the piezo kick, bouncing in the acrylic support
// plate. Each roundtrip returns a weaker copy of the kick to the foil.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "darkfringe/stochastics.hpp"

namespace darkfringe {

struct BunchCycleConfig {
  int n_bunches = 40;
  double bunch_spacing_ns = 192.0;
  int signal_bunch_index = 1;
  int reference_bunch_index = 40;
  double prompt_veto_ns = 16.0;
  double bin_width_ns = 1.0;
  double counts_per_unit_intensity = 1.0;  // expected counts per ns of unit relative intensity, per cycle

  void validate() const {
    if (n_bunches < 1) throw std::domain_error("BunchCycleConfig: need at least one bunch");
    if (!(bunch_spacing_ns > 0.0)) throw std::domain_error("BunchCycleConfig: spacing must be positive");
    for (int i : {signal_bunch_index, reference_bunch_index})
      if (i < 1 || i > n_bunches) throw std::domain_error("BunchCycleConfig: bunch index outside 1..n_bunches");
    if (!(bin_width_ns > 0.0) || bin_width_ns > bunch_spacing_ns)
      throw std::domain_error("BunchCycleConfig: invalid bin width");
    if (!(prompt_veto_ns >= 0.0)) throw std::domain_error("BunchCycleConfig: veto must be >= 0");
    if (!(counts_per_unit_intensity >= 0.0)) throw std::domain_error("BunchCycleConfig: negative flux");
  }

  [[nodiscard]] std::size_t bins_per_bunch() const {
    return static_cast<std::size_t>(std::floor(bunch_spacing_ns / bin_width_ns + 1e-9));
  }
  [[nodiscard]] double cycle_length_ns() const { return bunch_spacing_ns * n_bunches; }
  [[nodiscard]] double bunch_start(int bunch) const { return bunch_spacing_ns * (bunch - 1); }
  /// 1-based bunch whose interval contains t.
  [[nodiscard]] int bunch_of(double t) const { return 1 + static_cast<int>(std::floor(t / bunch_spacing_ns)); }
};

struct PlateSpec {
  double thickness_mm = 4.0;
  double sound_velocity_m_per_s = 2740.0;
  double reflection_loss = 0.5;  // fraction lost per roundtrip
  double kick_amplitude_pm = 43.0;
  double kick_rise_ns = 5.0;     // raised-cosine edges
  double kick_duration_ns = 20.0;
  double dispersion_ns = 0.0;    // Gaussian broadening per roundtrip, 0 = none

  void validate() const {
    if (!(thickness_mm > 0.0)) throw std::domain_error("PlateSpec: thickness must be positive");
    if (!(sound_velocity_m_per_s > 0.0)) throw std::domain_error("PlateSpec: sound velocity must be positive");
    if (!(reflection_loss >= 0.0 && reflection_loss <= 1.0))
      throw std::domain_error("PlateSpec: reflection loss outside [0,1]");
    if (!(kick_rise_ns >= 0.0) || !(kick_duration_ns > 0.0) || 2 * kick_rise_ns > kick_duration_ns)
      throw std::domain_error("PlateSpec: kick needs duration > 0 and 2 rise <= duration");
    if (!(dispersion_ns >= 0.0)) throw std::domain_error("PlateSpec: dispersion must be >= 0");
  }
};

/// 2 d / v_s in microseconds.
inline double roundtrip_time(const PlateSpec& p) {
  p.validate();
  return 2.0 * p.thickness_mm * 1e-3 / p.sound_velocity_m_per_s * 1e6;
}

/// Kick shape: raised-cosine edges of length rise around a flat top, total
/// length duration, unit height.
inline double kick_shape(double t, const PlateSpec& p) {
  if (t <= 0.0 || t >= p.kick_duration_ns) return 0.0;
  const double r = p.kick_rise_ns;
  if (r > 0.0 && t < r) return 0.5 * (1.0 - std::cos(pi * t / r));
  if (r > 0.0 && t > p.kick_duration_ns - r) return 0.5 * (1.0 - std::cos(pi * (p.kick_duration_ns - t) / r));
  return 1.0;
}

/// Arrival time (ns) of echo j of a kick launched at t_kick.
inline double echo_time(const PlateSpec& p, double t_kick, int j) { return t_kick + j * roundtrip_time(p) * 1e3; }

/// Displacement (pm) at times t: the kick at t_kick (if include_kick) plus
/// echoes j >= 1 scaled by (1 - loss)^j. With dispersion the j-th echo is
/// smoothed by a Gaussian of width dispersion * sqrt(j).
inline std::vector<double> displacement_history(const PlateSpec& p, const std::vector<double>& t, double t_kick = 0.0,
                                                bool include_kick = true) {
  p.validate();
  std::vector<double> z(t.size(), 0.0);
  if (t.empty()) return z;
  const double trt = roundtrip_time(p) * 1e3;
  const double t_end = *std::max_element(t.begin(), t.end());
  for (int j = include_kick ? 0 : 1;; ++j) {
    const double t0 = t_kick + j * trt;
    if (t0 > t_end) break;
    const double amp = p.kick_amplitude_pm * std::pow(1.0 - p.reflection_loss, j);
    if (amp == 0.0) break;
    const double sigma = p.dispersion_ns * std::sqrt(static_cast<double>(j));
    for (std::size_t k = 0; k < t.size(); ++k) {
      const double u = t[k] - t0;
      if (sigma == 0.0) {
        z[k] += amp * kick_shape(u, p);
        continue;
      }
      // Gaussian smoothing by direct quadrature over +-5 sigma
      const int n = 101;
      const double h = 10.0 * sigma / (n - 1);
      double acc = 0.0, norm = 0.0;
      for (int i = 0; i < n; ++i) {
        const double s = -5.0 * sigma + i * h;
        const double w = std::exp(-0.5 * s * s / (sigma * sigma));
        acc += w * kick_shape(u - s, p);
        norm += w;
      }
      z[k] += amp * acc / norm;
    }
  }
  return z;
}

/// Piecewise-linear motion sampled from displacement_history every
/// sample_ns, knots only where something moves.
inline MotionProfile acoustic_motion(const PlateSpec& p, double t_kick, double t_end, bool include_kick = true,
                                     double sample_ns = 1.0, double wavelength_pm = 86.025) {
  std::vector<double> t;
  for (double s = std::min(0.0, t_kick); s <= t_end + 1e-9; s += sample_ns) t.push_back(s);
  const auto z = displacement_history(p, t, t_kick, include_kick);
  MotionProfile m;
  m.wavelength_pm = wavelength_pm;
  m.knots.clear();
  for (std::size_t k = 0; k < t.size(); ++k) {
    const bool flat_before = k > 0 && z[k - 1] == z[k];
    const bool flat_after = k + 1 < t.size() && z[k + 1] == z[k];
    if (k == 0 || k + 1 == t.size() || !(flat_before && flat_after)) m.knots.emplace_back(t[k], z[k]);
  }
  return m;
}

/// Integrated pi intensity (relative to the incident pulse, in ns) per
/// bunch for a displacement history of foil 1 given in cycle time. Each
/// bunch sees the motion relative to the position at its arrival.
inline std::vector<double> revival_counts(const MotionProfile& history, const Foil& f1, const Foil& f2,
                                          const ResidualMotionModel& residual, const BunchCycleConfig& cycle,
                                          const TimeGrid& g) {
  cycle.validate();
  const TwoTargetPropagator prop(f1, f2, g);
  const auto upto = static_cast<std::size_t>(std::floor(cycle.bunch_spacing_ns / g.dt));
  auto integrate = [&](const std::vector<double>& I) {
    double acc = 0.0;
    for (std::size_t k = 0; k < std::min(upto, I.size()); ++k) acc += I[k] * g.dt;
    return acc;
  };
  std::vector<double> out(static_cast<std::size_t>(cycle.n_bunches));
  double still_value = -1.0;
  for (int b = 1; b <= cycle.n_bunches; ++b) {
    const MotionProfile rel = history.relative_to(cycle.bunch_start(b)).truncated(cycle.bunch_spacing_ns);
    auto& slot = out[static_cast<std::size_t>(b - 1)];
    if (TwoTargetPropagator::is_still(rel)) {
      if (still_value < 0.0) still_value = integrate(prop.averaged(residual));
      slot = still_value;
    } else {
      slot = integrate(prop.averaged(residual, rel));
    }
  }
  return out;
}

}  // namespace darkfringe
