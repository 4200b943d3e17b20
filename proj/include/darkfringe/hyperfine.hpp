#pragma once

// Single-foil nuclear response of a magnetically split 57Fe target.
//
// The six Zeeman lines are grouped by the polarization they couple to:
// lines 2 and 5 (delta m = 0) act on light polarized along the
// magnetization, lines 1, 3, 4, 6 (delta m = +-1) on light perpendicular
// to it. Each group enters the transmission as the exponential of a sum of
// Lorentzians weighted by Clebsch-Gordan factors.

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

#include "darkfringe/series.hpp"
#include "darkfringe/units.hpp"

namespace darkfringe {

enum class Transition { linear, circular };

/// Line parameters of one foil. Frequencies are detunings in units of the
/// natural linewidth gamma; collective_width is Gamma_c in the same unit.
struct NuclearModel {
  double gamma_neV = 4.7;
  double collective_width = 1.0;
  std::array<double, 6> line_positions{};
  std::array<double, 2> linear_weights{1.0, 1.0};                   // lines 2, 5
  std::array<double, 4> circular_weights{0.75, 0.25, 0.25, 0.75};   // lines 1, 3, 4, 6
  double reference_energy_keV = 14.4;
  double lifetime_ns = 141.0;

  void validate() const {
    if (!(gamma_neV > 0.0)) throw std::domain_error("NuclearModel: gamma must be positive");
    if (!(collective_width >= 0.0)) throw std::domain_error("NuclearModel: collective width must be >= 0");
    if (!(lifetime_ns > 0.0)) throw std::domain_error("NuclearModel: lifetime must be positive");
    if (!std::is_sorted(line_positions.begin(), line_positions.end()))
      throw std::domain_error("NuclearModel: line positions must be sorted ascending");
  }

  /// Exponent weight of line i (1..6) in the response of the given class,
  /// zero if the line belongs to the other class.
  [[nodiscard]] double weight(int line, Transition cls) const {
    switch (line) {
      case 2: return cls == Transition::linear ? linear_weights[0] : 0.0;
      case 5: return cls == Transition::linear ? linear_weights[1] : 0.0;
      case 1: return cls == Transition::circular ? circular_weights[0] : 0.0;
      case 3: return cls == Transition::circular ? circular_weights[1] : 0.0;
      case 4: return cls == Transition::circular ? circular_weights[2] : 0.0;
      case 6: return cls == Transition::circular ? circular_weights[3] : 0.0;
      default: throw std::domain_error("line index must be in 1..6, got " + std::to_string(line));
    }
  }

  /// Copy with every line shifted by delta (a Doppler detuning of the foil).
  [[nodiscard]] NuclearModel detuned(double delta) const {
    NuclearModel m = *this;
    for (auto& w : m.line_positions) w += delta;
    return m;
  }
};

/// Physical description of one foil.
struct TargetSpec {
  double thickness_um = 1.0;
  double b_field_T = 33.0;
  double alpha_rad = pi / 4;
  double mu_e_d = 0.0;
  double enrichment = 0.95;
  double lamb_moessbauer = 0.8;

  void validate() const {
    if (!(thickness_um > 0.0)) throw std::domain_error("TargetSpec: thickness must be positive");
    if (!(b_field_T >= 0.0)) throw std::domain_error("TargetSpec: field must be >= 0");
    if (!(enrichment >= 0.0 && enrichment <= 1.0)) throw std::domain_error("TargetSpec: enrichment outside [0,1]");
    if (!(lamb_moessbauer >= 0.0 && lamb_moessbauer <= 1.0))
      throw std::domain_error("TargetSpec: Lamb-Moessbauer factor outside [0,1]");
    if (!(mu_e_d >= 0.0)) throw std::domain_error("TargetSpec: electronic absorption must be >= 0");
  }
};

/// Maps an angle to (-pi, pi].
inline double normalize_angle(double a) {
  double r = std::remainder(a, two_pi);
  if (r <= -pi) r += two_pi;
  return r;
}

/// Zeeman line positions in gamma, ordered 1..6 (ascending for the
/// standard 57Fe moments). Energy of a sublevel is -(mu/I) m B.
inline std::array<double, 6> line_positions_from_field(double b_field_T, const NuclearConstants& c = {}) {
  if (!(b_field_T >= 0.0)) throw std::domain_error("line_positions_from_field: negative field");
  const double g_ground = c.ground_moment_muN / 0.5;
  const double g_excited = c.excited_moment_muN / 1.5;
  const double scale = b_field_T * units::nuclear_magneton_eV_per_T / (c.gamma_neV * 1e-9);
  // (m_ground, m_excited) for lines 1..6
  constexpr std::array<std::array<double, 2>, 6> levels{{
      {-0.5, -1.5}, {-0.5, -0.5}, {-0.5, 0.5}, {0.5, -0.5}, {0.5, 0.5}, {0.5, 1.5}}};
  std::array<double, 6> out{};
  for (std::size_t i = 0; i < 6; ++i) {
    const auto [mg, me] = levels[i];
    out[i] = scale * (-g_excited * me + g_ground * mg);
  }
  return out;
}

/// Gamma_c / gamma = sigma0 * n57 * f_LM * d / 4.
inline double collective_width(const TargetSpec& t, const NuclearConstants& c = {}) {
  const double n57 = c.iron_number_density_per_cm3 * t.enrichment;
  const double d_cm = t.thickness_um * 1e-4;
  return c.cross_section_cm2 * n57 * t.lamb_moessbauer * d_cm / 4.0;
}

inline NuclearModel make_model(const TargetSpec& t, const NuclearConstants& c = {}) {
  t.validate();
  NuclearModel m;
  m.gamma_neV = c.gamma_neV;
  m.collective_width = collective_width(t, c);
  m.line_positions = line_positions_from_field(t.b_field_T, c);
  m.reference_energy_keV = c.energy_keV;
  m.lifetime_ns = c.lifetime_ns;
  return m;
}

/// A foil bundles its geometry with the line model derived from it (or
/// supplied directly, e.g. with fitted line positions).
struct Foil {
  TargetSpec spec;
  NuclearModel model;

  [[nodiscard]] double attenuation() const { return std::exp(-0.5 * spec.mu_e_d); }
};

inline Foil make_foil(const TargetSpec& t, const NuclearConstants& c = {}) { return {t, make_model(t, c)}; }

/// i Gamma_c / (w - w_i - i gamma/2), with w in gamma.
inline cplx lorentzian(double omega, int line, const NuclearModel& m) {
  if (line < 1 || line > 6) throw std::domain_error("lorentzian: line index must be in 1..6");
  const double wi = m.line_positions[static_cast<std::size_t>(line - 1)];
  return I * m.collective_width / cplx{omega - wi, -0.5};
}

inline cplx response(double omega, const NuclearModel& m, Transition cls) {
  cplx sum{};
  for (int line = 1; line <= 6; ++line) {
    const double w = m.weight(line, cls);
    if (w != 0.0) sum += w * lorentzian(omega, line, m);
  }
  return std::exp(sum);
}

inline cplx response_linear(double omega, const NuclearModel& m) { return response(omega, m, Transition::linear); }
inline cplx response_circular(double omega, const NuclearModel& m) { return response(omega, m, Transition::circular); }

inline cplx scattered_part(cplx r) { return r - 1.0; }

/// Large-frequency expansion of the response in z = 1/(kappa + i w) with w
/// in rad/ns. Each Lorentzian is a pole a/(w - p) with a = i Gamma_c/tau0
/// and p = (w_i + i/2)/tau0; the response is the series exponential.
inline TailSeries response_series(const NuclearModel& m, Transition cls, double kappa) {
  TailSeries exponent;
  const double tau0 = m.lifetime_ns;
  for (int line = 1; line <= 6; ++line) {
    const double w = m.weight(line, cls);
    if (w == 0.0) continue;
    const cplx a = I * m.collective_width * w / tau0;
    const cplx p = cplx{m.line_positions[static_cast<std::size_t>(line - 1)], 0.5} / tau0;
    exponent += TailSeries::pole(a, p, kappa);
  }
  return exponent.exp();
}

}  // namespace darkfringe
