#pragma once

// Physical constants and unit conventions shared by every module.
//
// Internal conventions:
//   * detunings are measured in units of the natural linewidth gamma,
//   * times are in ns,
//   * the gamma <-> rad/ns conversion uses the natural lifetime tau0,
//     i.e. a detuning of w (in gamma) oscillates as exp(i w t / tau0),
//   * the Fourier pair is F(w) = int f(t) exp(-i w t) dt and
//     f(t) = (1/2pi) int F(w) exp(+i w t) dw. With this sign the
//     resonant Lorentzians i*Gc/(w - w_i - i*gamma/2) are causal.

#include <complex>
#include <numbers>

namespace darkfringe {

using cplx = std::complex<double>;

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;
inline constexpr cplx I{0.0, 1.0};

namespace units {
inline constexpr double speed_of_light_mm_per_s = 299792458.0e3;
inline constexpr double nuclear_magneton_eV_per_T = 3.15245125844e-8;
inline constexpr double hc_eV_pm = 1239841.98;  // h*c in eV*pm
}  // namespace units

/// Configuration block for the 57Fe constants. Defaults are standard
/// literature values; everything here can be overridden from a scenario file.
struct NuclearConstants {
  double gamma_neV = 4.7;          // natural linewidth
  double lifetime_ns = 141.0;      // natural lifetime tau0
  double energy_keV = 14.4;        // transition energy
  double ground_moment_muN = 0.0906;    // I = 1/2
  double excited_moment_muN = -0.1549;  // I = 3/2
  double cross_section_cm2 = 2.56e-18;  // resonant cross-section sigma0
  double iron_number_density_per_cm3 = 8.49e22;  // alpha-Fe

  /// Wavelength of the resonant photon in pm (86.1 pm at 14.4 keV).
  [[nodiscard]] double wavelength_pm() const { return units::hc_eV_pm / (energy_keV * 1e3); }

  /// Conversion factor from a detuning in gamma to angular frequency in rad/ns.
  [[nodiscard]] double rad_per_ns_per_gamma() const { return 1.0 / lifetime_ns; }
};

}  // namespace darkfringe
