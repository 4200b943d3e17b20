#pragma once

// Frequency-domain polarimetry: 2x2 Jones matrices acting on (sigma, pi)
// amplitude vectors, the two-foil interferometer and its pathway ledger.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "darkfringe/hyperfine.hpp"

namespace darkfringe {

/// Entry m_rc maps input component c to output component r.
struct JonesMatrix {
  cplx ss{1.0}, sp{}, ps{}, pp{1.0};

  static JonesMatrix identity() { return {}; }
  static JonesMatrix zero() { return {cplx{}, cplx{}, cplx{}, cplx{}}; }

  friend JonesMatrix operator*(const JonesMatrix& a, const JonesMatrix& b) {
    return {a.ss * b.ss + a.sp * b.ps, a.ss * b.sp + a.sp * b.pp,
            a.ps * b.ss + a.pp * b.ps, a.ps * b.sp + a.pp * b.pp};
  }
  friend JonesMatrix operator*(cplx k, const JonesMatrix& a) { return {k * a.ss, k * a.sp, k * a.ps, k * a.pp}; }
  friend JonesMatrix operator+(const JonesMatrix& a, const JonesMatrix& b) {
    return {a.ss + b.ss, a.sp + b.sp, a.ps + b.ps, a.pp + b.pp};
  }
  [[nodiscard]] cplx determinant() const { return ss * pp - sp * ps; }
};

/// (cos a, sin a; -sin a, cos a)
inline JonesMatrix rotation(double alpha) {
  const double c = std::cos(alpha), s = std::sin(alpha);
  return {c, s, -s, c};
}

/// Projector onto the polarization coupled to transitions of class cls for
/// magnetization angle alpha: g_a diag(1, 0) g_a^-1 or g_a diag(0, 1) g_a^-1.
inline JonesMatrix transition_projector(double alpha, Transition cls) {
  const double c = std::cos(alpha), s = std::sin(alpha);
  if (cls == Transition::linear) return {c * c, -c * s, -c * s, s * s};
  return {s * s, c * s, c * s, c * c};
}

/// g_a diag(rl, rc) g_a^-1
inline JonesMatrix rotated_response(cplx rl, cplx rc, double alpha) {
  return rl * transition_projector(alpha, Transition::linear) + rc * transition_projector(alpha, Transition::circular);
}

/// Jones matrix of one foil, including its electronic attenuation. The phase
/// jump phi multiplies only the scattered part of each response.
inline JonesMatrix target_matrix(const TargetSpec& t, const NuclearModel& m, double omega, double phi = 0.0) {
  const cplx shift = std::polar(1.0, phi);
  const cplx rl = 1.0 + scattered_part(response_linear(omega, m)) * shift;
  const cplx rc = 1.0 + scattered_part(response_circular(omega, m)) * shift;
  return cplx{std::exp(-0.5 * t.mu_e_d)} * rotated_response(rl, rc, t.alpha_rad);
}

inline JonesMatrix target_matrix(const Foil& f, double omega, double phi = 0.0) {
  return target_matrix(f.spec, f.model, omega, phi);
}

/// Pathway decomposition of the two-foil field for sigma input, in units of
/// E/4 where E is the product of both attenuations. Superscripts count the
/// number of scattering foils. Two-foil paths are split into same-class
/// terms (S2, P2: both foils scatter on L lines or both on C lines) and the
/// L<->C cross terms, which vanish only for well separated lines.
struct PathwayLedger {
  cplx S0, S1, S2, S_cross;
  cplx P1, P2, P_cross;

  [[nodiscard]] cplx sigma_sum() const { return S0 + S1 + S2 + S_cross; }
  [[nodiscard]] cplx pi_sum() const { return P1 + P2 + P_cross; }
};

struct TwoTargetSample {
  cplx sigma;  // output field amplitude for unit sigma input
  cplx pi;
  PathwayLedger ledger;
  cplx prefactor;  // E, product of attenuations
};

/// Foil 1 (carrying the phase jump phi) followed by foil 2.
inline TwoTargetSample compose_two_targets(const Foil& f1, const Foil& f2, double omega, double phi = 0.0) {
  const cplx shift = std::polar(1.0, phi);
  const cplx tl1 = scattered_part(response_linear(omega, f1.model)) * shift;
  const cplx tc1 = scattered_part(response_circular(omega, f1.model)) * shift;
  const cplx tl2 = scattered_part(response_linear(omega, f2.model));
  const cplx tc2 = scattered_part(response_circular(omega, f2.model));
  const double a1 = f1.spec.alpha_rad, a2 = f2.spec.alpha_rad;

  const JonesMatrix pl1 = transition_projector(a1, Transition::linear);
  const JonesMatrix pc1 = transition_projector(a1, Transition::circular);
  const JonesMatrix pl2 = transition_projector(a2, Transition::linear);
  const JonesMatrix pc2 = transition_projector(a2, Transition::circular);

  const JonesMatrix one = tl1 * pl1 + tc1 * pc1 + tl2 * pl2 + tc2 * pc2;
  const JonesMatrix same = (tl2 * tl1) * (pl2 * pl1) + (tc2 * tc1) * (pc2 * pc1);
  const JonesMatrix cross = (tl2 * tc1) * (pl2 * pc1) + (tc2 * tl1) * (pc2 * pl1);

  TwoTargetSample out;
  out.ledger = {4.0, 4.0 * one.ss, 4.0 * same.ss, 4.0 * cross.ss, 4.0 * one.ps, 4.0 * same.ps, 4.0 * cross.ps};
  out.prefactor = f1.attenuation() * f2.attenuation();
  out.sigma = out.prefactor / 4.0 * out.ledger.sigma_sum();
  out.pi = out.prefactor / 4.0 * out.ledger.pi_sum();
  return out;
}

/// Full two-foil Jones matrix M2 * M1 (phase jump on foil 1).
inline JonesMatrix two_target_matrix(const Foil& f1, const Foil& f2, double omega, double phi = 0.0) {
  return target_matrix(f2, omega) * target_matrix(f1, omega, phi);
}

inline bool is_canonical_pair(const Foil& f1, const Foil& f2, double tol = 1e-12) {
  return std::abs(normalize_angle(f1.spec.alpha_rad - pi / 4)) < tol &&
         std::abs(normalize_angle(f2.spec.alpha_rad + pi / 4)) < tol;
}

/// (E/2) [R_L1 R_C2 - R_L2 R_C1]. The matrix product of compose_two_targets
/// yields the same expression with the opposite overall sign; intensities
/// agree.
inline cplx dark_fringe_output(const Foil& f1, const Foil& f2, double omega) {
  if (!is_canonical_pair(f1, f2))
    throw std::domain_error("dark_fringe_output requires alpha1 = +pi/4 and alpha2 = -pi/4");
  const cplx e = f1.attenuation() * f2.attenuation();
  return e / 2.0 *
         (response_linear(omega, f1.model) * response_circular(omega, f2.model) -
          response_linear(omega, f2.model) * response_circular(omega, f1.model));
}

/// |E|^2 sin^2(phi/2) |T_C - T_L|^2 for two copies of the same foil.
inline double gated_intensity(const Foil& f, double omega, double phi) {
  const double e2 = std::pow(f.attenuation(), 4);
  const double s = std::sin(0.5 * phi);
  const cplx diff = scattered_part(response_circular(omega, f.model)) - scattered_part(response_linear(omega, f.model));
  return e2 * s * s * std::norm(diff);
}

struct PolarizedSpectrum {
  std::vector<double> omega;  // detuning in gamma, uniform
  std::vector<cplx> sigma;
  std::vector<cplx> pi;

  void validate() const {
    if (sigma.size() != omega.size() || pi.size() != omega.size())
      throw std::invalid_argument("PolarizedSpectrum: array lengths differ from grid");
    if (omega.size() < 2) return;
    const double d = omega[1] - omega[0];
    if (!(d > 0.0)) throw std::invalid_argument("PolarizedSpectrum: grid must be strictly increasing");
    for (std::size_t i = 1; i < omega.size(); ++i)
      if (std::abs(omega[i] - omega[i - 1] - d) > 1e-9 * std::max(1.0, std::abs(d)))
        throw std::invalid_argument("PolarizedSpectrum: grid must be uniform");
  }
};

inline std::vector<double> uniform_grid(double lo, double hi, std::size_t n) {
  if (n < 2 || !(hi > lo)) throw std::invalid_argument("uniform_grid: need n >= 2 and hi > lo");
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return g;
}

/// Static two-foil field for unit sigma input on a detuning grid.
inline PolarizedSpectrum two_target_spectrum(const Foil& f1, const Foil& f2, const std::vector<double>& omega,
                                             double phi = 0.0) {
  PolarizedSpectrum s{omega, std::vector<cplx>(omega.size()), std::vector<cplx>(omega.size())};
  for (std::size_t i = 0; i < omega.size(); ++i) {
    const JonesMatrix m = two_target_matrix(f1, f2, omega[i], phi);
    s.sigma[i] = m.ss;
    s.pi[i] = m.ps;
  }
  return s;
}

/// Ideal crossed analyzer passing pi; sigma is attenuated to sqrt(leakage).
inline PolarizedSpectrum analyzer_project(PolarizedSpectrum field, double leakage = 0.0) {
  if (!(leakage >= 0.0 && leakage <= 1.0)) throw std::domain_error("analyzer leakage must be in [0,1]");
  const double a = std::sqrt(leakage);
  for (auto& v : field.sigma) v *= a;
  return field;
}

}  // namespace darkfringe
