#pragma once

// Time-domain propagation of the polarimeter.
//
// A response is stored as
//     prompt * delta(t) + sum_b tail_b(t - tau_b) + regular(t)
// where each tail is a short TailSeries with a known analytic spectrum that
// carries every discontinuity (in value and the first few derivatives) of
// the response at tau_b. What remains, the regular part, is smooth and is
// sampled on the grid. Transforms only ever see the regular part, so no
// Gibbs ringing and no discretised delta spikes appear. Convolutions are
// linear: spectra live on a grid twice as long as the time window.

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "darkfringe/fft.hpp"
#include "darkfringe/jones.hpp"

namespace darkfringe {

struct TimeGrid {
  double t_start = 0.0;
  double dt = 0.25;              // ns
  std::size_t n_samples = 1u << 15;
  double tail_decay_per_ns = 0.2;  // kappa of the tail basis

  void validate() const {
    if (t_start != 0.0) throw std::invalid_argument("TimeGrid: responses start at the pulse, t_start must be 0");
    if (!(dt > 0.0)) throw std::invalid_argument("TimeGrid: dt must be positive");
    if (n_samples < 2 || (n_samples & (n_samples - 1)) != 0)
      throw std::invalid_argument("TimeGrid: n_samples must be a power of two");
    if (window() < 192.0) throw std::invalid_argument("TimeGrid: window must cover at least 192 ns");
    if (!(tail_decay_per_ns > 0.0)) throw std::invalid_argument("TimeGrid: tail decay must be positive");
  }

  [[nodiscard]] std::size_t padded() const { return 2 * n_samples; }
  [[nodiscard]] double window() const { return dt * static_cast<double>(n_samples); }
  [[nodiscard]] double time(std::size_t k) const { return t_start + dt * static_cast<double>(k); }
  [[nodiscard]] double d_omega() const { return two_pi / (dt * static_cast<double>(padded())); }
  /// Angular frequency (rad/ns) of spectral sample m, m in [0, 2n).
  [[nodiscard]] double omega(std::size_t m) const {
    return (static_cast<double>(m) - static_cast<double>(n_samples)) * d_omega();
  }

  friend bool operator==(const TimeGrid&, const TimeGrid&) = default;
};

inline std::vector<double> angular_frequencies(const TimeGrid& g) {
  std::vector<double> w(g.padded());
  for (std::size_t m = 0; m < w.size(); ++m) w[m] = g.omega(m);
  return w;
}

/// Spectral axis in units of gamma for a given lifetime.
inline std::vector<double> detuning_axis(const TimeGrid& g, double lifetime_ns = 141.0) {
  auto w = angular_frequencies(g);
  for (auto& v : w) v *= lifetime_ns;
  return w;
}

struct Breakpoint {
  double tau;          // ns
  TailSeries series;   // c0 unused; z^j terms start at tau
};

struct TimeResponse {
  TimeGrid grid;
  cplx prompt_weight{};
  std::vector<Breakpoint> tails;
  std::vector<cplx> regular;      // n_samples values
  double causality_residual = 0;  // max |regular| found in the wrap-around half

  static TimeResponse zero(const TimeGrid& g) { return {g, cplx{}, {}, std::vector<cplx>(g.n_samples), 0.0}; }
  static TimeResponse delta(const TimeGrid& g, cplx w) {
    TimeResponse r = zero(g);
    r.prompt_weight = w;
    return r;
  }

  /// Scattered (non-delta) amplitude at t, right limit at breakpoints.
  [[nodiscard]] cplx tails_at(double t, std::size_t deriv = 0) const {
    cplx acc{};
    const double kappa = grid.tail_decay_per_ns;
    for (const auto& b : tails)
      if (t >= b.tau - 1e-9) acc += b.series.time_derivative(std::max(0.0, t - b.tau), deriv, kappa);
    return acc;
  }

  [[nodiscard]] std::vector<cplx> scattered() const {
    std::vector<cplx> s(regular);
    for (std::size_t k = 0; k < s.size(); ++k) s[k] += tails_at(grid.time(k));
    return s;
  }
};

enum class Channel { sigma_sigma, sigma_pi, pi_pi, pi_sigma };

/// 2x2 array of responses; entry rc maps input c to output r. Channel
/// sigma_pi is sigma in, pi out (the entry ps).
struct ResponseMatrix {
  TimeResponse ss, sp, ps, pp;

  [[nodiscard]] const TimeResponse& operator[](Channel c) const {
    switch (c) {
      case Channel::sigma_sigma: return ss;
      case Channel::sigma_pi: return ps;
      case Channel::pi_pi: return pp;
      case Channel::pi_sigma: return sp;
    }
    return ss;
  }

  template <class F>
  void for_each(F&& f) {
    f(ss);
    f(sp);
    f(ps);
    f(pp);
  }
};

namespace detail {

inline std::vector<cplx> dtft(const std::vector<cplx>& h, const TimeGrid& g) {
  std::vector<cplx> x(g.padded());
  for (std::size_t k = 0; k < h.size(); ++k) x[k] = (k % 2 == 0 ? 1.0 : -1.0) * h[k];
  auto out = fft::transform(x, fft::Direction::forward);
  for (auto& v : out) v *= g.dt;
  return out;
}

/// Inverse of dtft; returns the first n samples and the largest magnitude
/// found in the discarded half.
inline std::pair<std::vector<cplx>, double> idft(const std::vector<cplx>& spec, const TimeGrid& g) {
  auto x = fft::transform(spec, fft::Direction::backward);
  const double norm = 1.0 / (g.dt * static_cast<double>(g.padded()));
  std::vector<cplx> h(g.n_samples);
  double wrap = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const cplx v = (k % 2 == 0 ? 1.0 : -1.0) * norm * x[k];
    if (k < g.n_samples) h[k] = v;
    else wrap = std::max(wrap, std::abs(v));
  }
  return {std::move(h), wrap};
}

inline std::vector<cplx> singular_spectrum(const TimeResponse& r) {
  const TimeGrid& g = r.grid;
  std::vector<cplx> s(g.padded(), r.prompt_weight);
  for (const auto& b : r.tails) {
    for (std::size_t m = 0; m < s.size(); ++m) {
      const double w = g.omega(m);
      s[m] += std::polar(1.0, -w * b.tau) * b.series.spectrum_tail(w, g.tail_decay_per_ns);
    }
  }
  return s;
}

inline void check_same_grid(const TimeResponse& a, const TimeResponse& b) {
  if (!(a.grid == b.grid)) throw std::invalid_argument("time responses live on different grids");
}

/// Singular terms as (tau, series) with the prompt stored as c0 at tau = 0.
using SingularList = std::vector<Breakpoint>;

inline SingularList singular_list(const TimeResponse& r) {
  SingularList l;
  l.push_back({0.0, TailSeries::constant(r.prompt_weight)});
  for (const auto& b : r.tails) {
    TailSeries s = b.series;
    s[0] = 0.0;
    l.push_back({b.tau, s});
  }
  return l;
}

inline void merge_into(SingularList& acc, double tau, const TailSeries& s) {
  for (auto& b : acc)
    if (std::abs(b.tau - tau) < 1e-9) {
      b.series += s;
      return;
    }
  acc.push_back({tau, s});
}

inline SingularList product(const SingularList& a, const SingularList& b) {
  SingularList out;
  for (const auto& x : a)
    for (const auto& y : b) merge_into(out, x.tau + y.tau, x.series * y.series);
  return out;
}

/// Builds a response from a full spectrum on the padded grid and its exact
/// singular content.
inline TimeResponse assemble(const TimeGrid& g, std::vector<cplx> spectrum, const SingularList& singular) {
  TimeResponse r = TimeResponse::zero(g);
  for (const auto& b : singular) {
    if (std::abs(b.tau) < 1e-9) r.prompt_weight += b.series[0];
    TailSeries s = b.series;
    s[0] = 0.0;
    if (!s.is_zero()) r.tails.push_back({b.tau, s});
  }
  std::sort(r.tails.begin(), r.tails.end(), [](const auto& x, const auto& y) { return x.tau < y.tau; });
  const auto sing = singular_spectrum(r);
  for (std::size_t m = 0; m < spectrum.size(); ++m) spectrum[m] -= sing[m];
  auto [h, wrap] = idft(spectrum, g);
  r.regular = std::move(h);
  r.causality_residual = wrap;
  return r;
}

inline double binomial(std::size_t n, std::size_t k) {
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return r;
}

}  // namespace detail

/// Full spectrum of a response on the padded grid (rad/ns axis).
inline std::vector<cplx> time_to_spectrum(const TimeResponse& r) {
  auto s = detail::singular_spectrum(r);
  const auto h = detail::dtft(r.regular, r.grid);
  for (std::size_t m = 0; m < s.size(); ++m) s[m] += h[m];
  return s;
}

struct TailFitOptions {
  double band_fraction = 0.4;  // outer fraction of each half of the axis used for the fit
};

/// Inverse transform of a spectrum sampled on angular_frequencies(grid).
/// The asymptotic series is fitted on the outer band of the axis, removed
/// analytically and the smooth remainder is transformed numerically.
inline TimeResponse spectrum_to_time(const std::vector<cplx>& spectrum, const TimeGrid& grid,
                                     const TailFitOptions& opt = {}) {
  grid.validate();
  if (spectrum.size() != grid.padded())
    throw std::invalid_argument("spectrum_to_time: spectrum must be sampled on the padded grid of the time grid");
  const double kappa = grid.tail_decay_per_ns;
  const double wmax = grid.omega(grid.padded() - 1);
  std::vector<std::size_t> band;
  for (std::size_t m = 0; m < spectrum.size(); ++m)
    if (std::abs(grid.omega(m)) >= (1.0 - opt.band_fraction) * wmax) band.push_back(m);

  constexpr std::size_t nc = TailSeries::order + 1;
  Eigen::MatrixXcd a(static_cast<Eigen::Index>(band.size()), static_cast<Eigen::Index>(nc));
  Eigen::VectorXcd rhs(static_cast<Eigen::Index>(band.size()));
  for (std::size_t i = 0; i < band.size(); ++i) {
    const cplx z = 1.0 / cplx{kappa, grid.omega(band[i])};
    cplx zj{1.0};
    for (std::size_t j = 0; j < nc; ++j) {
      a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = zj;
      zj *= z;
    }
    rhs(static_cast<Eigen::Index>(i)) = spectrum[band[i]];
  }
  Eigen::VectorXd scale = a.colwise().norm().transpose();
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    if (scale(j) > 0) a.col(j) /= scale(j);
  Eigen::VectorXcd c = a.colPivHouseholderQr().solve(rhs);

  TailSeries s;
  for (std::size_t j = 0; j < nc; ++j) {
    const double sj = scale(static_cast<Eigen::Index>(j));
    s[j] = sj > 0 ? c(static_cast<Eigen::Index>(j)) / sj : cplx{};
  }
  return detail::assemble(grid, spectrum, {{0.0, s}});
}

/// Overload that checks an explicitly supplied axis against the grid.
inline TimeResponse spectrum_to_time(const std::vector<double>& omega_rad_per_ns, const std::vector<cplx>& spectrum,
                                     const TimeGrid& grid, const TailFitOptions& opt = {}) {
  if (omega_rad_per_ns.size() != spectrum.size())
    throw std::invalid_argument("spectrum_to_time: axis and values differ in length");
  if (omega_rad_per_ns.size() >= 2) {
    const double d = omega_rad_per_ns[1] - omega_rad_per_ns[0];
    for (std::size_t i = 1; i < omega_rad_per_ns.size(); ++i)
      if (std::abs(omega_rad_per_ns[i] - omega_rad_per_ns[i - 1] - d) > 1e-9 * std::abs(d))
        throw std::invalid_argument("spectrum_to_time: non-uniform frequency grid");
  }
  if (omega_rad_per_ns.size() != grid.padded() || std::abs(omega_rad_per_ns.front() - grid.omega(0)) > 1e-9 * grid.d_omega() * static_cast<double>(grid.padded()) ||
      std::abs(omega_rad_per_ns[1] - omega_rad_per_ns[0] - grid.d_omega()) > 1e-9 * grid.d_omega())
    throw std::invalid_argument("spectrum_to_time: axis does not match the time grid");
  return spectrum_to_time(spectrum, grid, opt);
}

namespace detail {

struct ChannelWeights {
  double lin, circ;
};

inline ChannelWeights channel_weights(double alpha, Channel c) {
  const JonesMatrix pl = transition_projector(alpha, Transition::linear);
  const JonesMatrix pc = transition_projector(alpha, Transition::circular);
  switch (c) {
    case Channel::sigma_sigma: return {pl.ss.real(), pc.ss.real()};
    case Channel::sigma_pi: return {pl.ps.real(), pc.ps.real()};
    case Channel::pi_pi: return {pl.pp.real(), pc.pp.real()};
    case Channel::pi_sigma: return {pl.sp.real(), pc.sp.real()};
  }
  return {0, 0};
}

struct FoilSpectra {
  std::vector<cplx> rl, rc;
  TailSeries sl, sc;
};

inline FoilSpectra foil_spectra(const Foil& f, const TimeGrid& g) {
  FoilSpectra s{std::vector<cplx>(g.padded()), std::vector<cplx>(g.padded()),
                response_series(f.model, Transition::linear, g.tail_decay_per_ns),
                response_series(f.model, Transition::circular, g.tail_decay_per_ns)};
  for (std::size_t m = 0; m < g.padded(); ++m) {
    const double w = g.omega(m) * f.model.lifetime_ns;
    s.rl[m] = response_linear(w, f.model);
    s.rc[m] = response_circular(w, f.model);
  }
  return s;
}

inline TimeResponse channel_from(const FoilSpectra& s, const Foil& f, Channel c, const TimeGrid& g) {
  const auto w = channel_weights(f.spec.alpha_rad, c);
  const double a = f.attenuation();
  std::vector<cplx> spec(g.padded());
  for (std::size_t m = 0; m < spec.size(); ++m) spec[m] = a * (w.lin * s.rl[m] + w.circ * s.rc[m]);
  const TailSeries series = cplx{a * w.lin} * s.sl + cplx{a * w.circ} * s.sc;
  return assemble(g, std::move(spec), {{0.0, series}});
}

}  // namespace detail

/// Impulse response of one foil in one polarization channel.
inline TimeResponse single_target_time_response(const Foil& f, Channel c, const TimeGrid& g = {}) {
  g.validate();
  return detail::channel_from(detail::foil_spectra(f, g), f, c, g);
}

inline ResponseMatrix single_target_matrix(const Foil& f, const TimeGrid& g = {}) {
  g.validate();
  const auto s = detail::foil_spectra(f, g);
  return {detail::channel_from(s, f, Channel::sigma_sigma, g), detail::channel_from(s, f, Channel::pi_sigma, g),
          detail::channel_from(s, f, Channel::sigma_pi, g), detail::channel_from(s, f, Channel::pi_pi, g)};
}

// ---------------------------------------------------------------------------
// Motion and other multiplicative modulations of the scattered part.

/// Piecewise-linear displacement of a foil along the beam. Knot times are
/// non-decreasing; two knots at the same time describe a jump. Before the
/// first knot and after the last one the displacement is held constant.
struct MotionProfile {
  std::vector<std::pair<double, double>> knots{{0.0, 0.0}};  // (t_ns, z_pm)
  double wavelength_pm = 86.025;

  void validate() const {
    if (knots.empty()) throw std::invalid_argument("MotionProfile: no knots");
    if (!(wavelength_pm > 0)) throw std::invalid_argument("MotionProfile: wavelength must be positive");
    for (std::size_t i = 1; i < knots.size(); ++i)
      if (knots[i].first < knots[i - 1].first) throw std::invalid_argument("MotionProfile: knot times must not decrease");
  }

  static MotionProfile still() { return {}; }

  /// Displacement dz reached at t0 after a linear ramp of the given length
  /// (zero for an instantaneous jump).
  static MotionProfile step(double t0, double dz, double rise = 0.0) {
    MotionProfile p;
    p.knots = {{std::min(0.0, t0), 0.0}, {t0, 0.0}, {t0 + rise, dz}};
    return p;
  }

  [[nodiscard]] double z_right(double t) const {
    auto it = std::upper_bound(knots.begin(), knots.end(), t, [](double v, const auto& k) { return v < k.first; });
    if (it == knots.begin()) return knots.front().second;
    const auto& a = *(it - 1);
    if (it == knots.end()) return a.second;
    return a.second + (it->second - a.second) * (t - a.first) / (it->first - a.first);
  }
  [[nodiscard]] double z_left(double t) const {
    auto it = std::lower_bound(knots.begin(), knots.end(), t, [](const auto& k, double v) { return k.first < v; });
    if (it == knots.begin()) return knots.front().second;
    const auto& a = *(it - 1);
    if (it == knots.end()) return a.second;
    return a.second + (it->second - a.second) * (t - a.first) / (it->first - a.first);
  }
  [[nodiscard]] double slope_right(double t) const {
    auto it = std::upper_bound(knots.begin(), knots.end(), t, [](double v, const auto& k) { return v < k.first; });
    if (it == knots.begin() || it == knots.end()) return 0.0;
    const auto& a = *(it - 1);
    return (it->second - a.second) / (it->first - a.first);
  }
  [[nodiscard]] double phase(double t) const { return two_pi * z_right(t) / wavelength_pm; }

  /// The same motion seen from a pulse arriving at t0: time origin moved to
  /// t0 and displacement measured from the position at arrival.
  [[nodiscard]] MotionProfile relative_to(double t0) const {
    MotionProfile p;
    p.wavelength_pm = wavelength_pm;
    const double z0 = z_left(t0);
    p.knots = {{0.0, z_right(t0) - z0}};
    for (const auto& [t, z] : knots)
      if (t > t0) p.knots.emplace_back(t - t0, z - z0);
    return p;
  }

  /// Drops everything after t_end, holding the position reached there.
  [[nodiscard]] MotionProfile truncated(double t_end) const {
    MotionProfile p;
    p.wavelength_pm = wavelength_pm;
    p.knots.clear();
    for (const auto& k : knots)
      if (k.first < t_end) p.knots.push_back(k);
    p.knots.emplace_back(t_end, z_left(t_end));
    return p;
  }

  friend MotionProfile operator+(const MotionProfile& a, const MotionProfile& b) {
    std::vector<double> ts;
    for (const auto& k : a.knots) ts.push_back(k.first);
    for (const auto& k : b.knots) ts.push_back(k.first);
    std::sort(ts.begin(), ts.end());
    ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
    MotionProfile out;
    out.wavelength_pm = a.wavelength_pm;
    out.knots.clear();
    for (double t : ts) {
      const double zl = a.z_left(t) + b.z_left(t);
      const double zr = a.z_right(t) + b.z_right(t);
      out.knots.emplace_back(t, zl);
      if (zr != zl) out.knots.emplace_back(t, zr);
    }
    return out;
  }

  [[nodiscard]] MotionProfile scaled(double k) const {
    MotionProfile p = *this;
    for (auto& kn : p.knots) kn.second *= k;
    return p;
  }
};

/// Multiplier m(t) = A exp(i (phase + slope (t - start))) on consecutive
/// segments starting at t = 0. Slopes are in rad/ns.
struct Modulation {
  struct Segment {
    double start, amplitude, phase, slope;
  };
  std::vector<Segment> segments{{0.0, 1.0, 0.0, 0.0}};

  static Modulation identity() { return {}; }
  static Modulation constant_phase(double phi) { return {{{0.0, 1.0, phi, 0.0}}}; }
  static Modulation detuning(double rad_per_ns) { return {{{0.0, 1.0, 0.0, rad_per_ns}}}; }
  /// Passes [t0, t1), blocks elsewhere.
  static Modulation window(double t0, double t1) {
    Modulation m;
    m.segments = {{0.0, t0 > 0.0 ? 0.0 : 1.0, 0.0, 0.0}};
    if (t0 > 0.0) m.segments.push_back({t0, 1.0, 0.0, 0.0});
    m.segments.push_back({t1, 0.0, 0.0, 0.0});
    return m;
  }
  static Modulation from_motion(const MotionProfile& p) {
    p.validate();
    Modulation m;
    m.segments.clear();
    const double k = two_pi / p.wavelength_pm;
    m.segments.push_back({0.0, 1.0, k * p.z_right(0.0), k * p.slope_right(0.0)});
    double last = 0.0;
    for (const auto& kn : p.knots) {
      if (kn.first <= last) continue;
      last = kn.first;
      m.segments.push_back({kn.first, 1.0, k * p.z_right(kn.first), k * p.slope_right(kn.first)});
    }
    return m;
  }

  [[nodiscard]] const Segment& right(double t) const {
    std::size_t i = 0;
    while (i + 1 < segments.size() && segments[i + 1].start <= t) ++i;
    return segments[i];
  }
  [[nodiscard]] const Segment& left(double t) const {
    std::size_t i = 0;
    while (i + 1 < segments.size() && segments[i + 1].start < t) ++i;
    return segments[i];
  }
  static cplx eval(const Segment& s, double t, std::size_t deriv = 0) {
    cplx v = s.amplitude * std::polar(1.0, s.phase + s.slope * (t - s.start));
    for (std::size_t l = 0; l < deriv; ++l) v *= I * s.slope;
    return v;
  }
  [[nodiscard]] cplx value(double t) const { return eval(right(t), t); }

  friend Modulation operator*(const Modulation& a, const Modulation& b) {
    std::vector<double> ts;
    for (const auto& s : a.segments) ts.push_back(s.start);
    for (const auto& s : b.segments) ts.push_back(s.start);
    std::sort(ts.begin(), ts.end());
    ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
    Modulation out;
    out.segments.clear();
    for (double t : ts) {
      const auto& x = a.right(t);
      const auto& y = b.right(t);
      out.segments.push_back({t, x.amplitude * y.amplitude, x.phase + x.slope * (t - x.start) + y.phase + y.slope * (t - y.start),
                              x.slope + y.slope});
    }
    return out;
  }
};

namespace detail {

/// k-th derivative of the smooth sampled part at tau, evaluated spectrally.
inline std::array<cplx, TailSeries::order> regular_derivatives(const std::vector<cplx>& h_spec, const TimeGrid& g,
                                                               double tau) {
  std::array<cplx, TailSeries::order> d{};
  for (std::size_t m = 0; m < h_spec.size(); ++m) {
    const double w = g.omega(m);
    cplx term = h_spec[m] * std::polar(1.0, w * tau);
    for (std::size_t k = 0; k < d.size(); ++k) {
      d[k] += term;
      term *= I * w;
    }
  }
  const double norm = 1.0 / (g.dt * static_cast<double>(g.padded()));
  for (auto& v : d) v *= norm;
  return d;
}

}  // namespace detail

/// Multiplies the scattered part of a response by m(t). The prompt is left
/// untouched: it has passed before anything moves.
inline TimeResponse apply_modulation(const TimeResponse& f, const Modulation& mod) {
  constexpr std::size_t K = TailSeries::order;
  const TimeGrid& g = f.grid;
  const double kappa = g.tail_decay_per_ns;
  const double window = g.window();
  const auto hspec = detail::dtft(f.regular, g);

  std::vector<double> taus{0.0};
  for (const auto& b : f.tails)
    if (b.tau < window) taus.push_back(b.tau);
  for (const auto& s : mod.segments)
    if (s.start > 0.0 && s.start < window) taus.push_back(s.start);
  std::sort(taus.begin(), taus.end());
  taus.erase(std::unique(taus.begin(), taus.end(), [](double x, double y) { return std::abs(x - y) < 1e-9; }), taus.end());

  TimeResponse out = TimeResponse::zero(g);
  out.prompt_weight = f.prompt_weight;
  out.causality_residual = f.causality_residual;

  for (double tau : taus) {
    const auto reg = detail::regular_derivatives(hspec, g, tau);
    std::array<cplx, K> fr{}, fl{};
    for (std::size_t k = 0; k < K; ++k) {
      fr[k] = reg[k];
      fl[k] = tau > 0.0 ? reg[k] : cplx{};
      for (const auto& b : f.tails) {
        if (b.tau <= tau + 1e-9) fr[k] += b.series.time_derivative(std::max(0.0, tau - b.tau), k, kappa);
        if (tau > 0.0 && b.tau < tau - 1e-9) fl[k] += b.series.time_derivative(tau - b.tau, k, kappa);
      }
    }
    const auto& sr = mod.right(tau);
    const auto& sl = mod.left(tau);
    std::array<cplx, K> jumps{};
    bool any = false;
    for (std::size_t k = 0; k < K; ++k) {
      cplx gr{}, gl{};
      for (std::size_t l = 0; l <= k; ++l) {
        const double c = detail::binomial(k, l);
        gr += c * Modulation::eval(sr, tau, l) * fr[k - l];
        gl += c * Modulation::eval(sl, tau, l) * fl[k - l];
      }
      jumps[k] = gr - gl;
      any = any || jumps[k] != cplx{};
    }
    if (any) out.tails.push_back({tau, TailSeries::from_jumps(jumps, kappa)});
  }

  for (std::size_t k = 0; k < g.n_samples; ++k) {
    const double t = g.time(k);
    const cplx fk = f.regular[k] + f.tails_at(t);
    out.regular[k] = mod.value(t) * fk - out.tails_at(t);
  }
  return out;
}

inline TimeResponse apply_motion(const TimeResponse& f, const MotionProfile& p) {
  return apply_modulation(f, Modulation::from_motion(p));
}

inline ResponseMatrix apply_modulation(ResponseMatrix m, const Modulation& mod) {
  m.for_each([&](TimeResponse& r) { r = apply_modulation(r, mod); });
  return m;
}

inline ResponseMatrix apply_motion(const ResponseMatrix& m, const MotionProfile& p) {
  return apply_modulation(m, Modulation::from_motion(p));
}

// ---------------------------------------------------------------------------
// Composition.

/// Linear convolution a * b, delta terms multiplied symbolically.
inline TimeResponse compose_time(const TimeResponse& a, const TimeResponse& b) {
  detail::check_same_grid(a, b);
  const auto fa = time_to_spectrum(a);
  const auto fb = time_to_spectrum(b);
  std::vector<cplx> f(fa.size());
  for (std::size_t m = 0; m < f.size(); ++m) f[m] = fa[m] * fb[m];
  auto r = detail::assemble(a.grid, std::move(f), detail::product(detail::singular_list(a), detail::singular_list(b)));
  r.causality_residual = std::max({r.causality_residual, a.causality_residual, b.causality_residual});
  return r;
}

/// Matrix product m2 * m1 as convolutions: light passes m1 first.
inline ResponseMatrix compose_time(const ResponseMatrix& m1, const ResponseMatrix& m2) {
  const TimeResponse* first[2][2] = {{&m1.ss, &m1.sp}, {&m1.ps, &m1.pp}};
  const TimeResponse* second[2][2] = {{&m2.ss, &m2.sp}, {&m2.ps, &m2.pp}};
  std::vector<cplx> s1[2][2], s2[2][2];
  detail::SingularList l1[2][2], l2[2][2];
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) {
      detail::check_same_grid(*first[r][c], m1.ss);
      detail::check_same_grid(*second[r][c], m1.ss);
      s1[r][c] = time_to_spectrum(*first[r][c]);
      s2[r][c] = time_to_spectrum(*second[r][c]);
      l1[r][c] = detail::singular_list(*first[r][c]);
      l2[r][c] = detail::singular_list(*second[r][c]);
    }
  const TimeGrid& g = m1.ss.grid;
  double resid = 0.0;
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) resid = std::max({resid, first[r][c]->causality_residual, second[r][c]->causality_residual});

  TimeResponse out[2][2];
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) {
      std::vector<cplx> f(g.padded());
      for (std::size_t m = 0; m < f.size(); ++m) f[m] = s2[r][0][m] * s1[0][c][m] + s2[r][1][m] * s1[1][c][m];
      auto sing = detail::product(l2[r][0], l1[0][c]);
      for (const auto& b : detail::product(l2[r][1], l1[1][c])) detail::merge_into(sing, b.tau, b.series);
      out[r][c] = detail::assemble(g, std::move(f), sing);
      out[r][c].causality_residual = std::max(out[r][c].causality_residual, resid);
    }
  return {out[0][0], out[0][1], out[1][0], out[1][1]};
}

// ---------------------------------------------------------------------------
// Observables.

/// |scattered(t_k)|^2 on the grid; the delta-like prompt is not a sample.
inline std::vector<double> time_intensity(const TimeResponse& r) {
  const auto s = r.scattered();
  std::vector<double> out(s.size());
  for (std::size_t k = 0; k < s.size(); ++k) out[k] = std::norm(s[k]);
  return out;
}

/// Detected intensity behind the analyzer for sigma input: the pi output
/// plus the leaking fraction of the sigma output.
inline std::vector<double> analyzer_intensity(const ResponseMatrix& m, double leakage = 0.0) {
  if (!(leakage >= 0.0 && leakage <= 1.0)) throw std::domain_error("analyzer leakage must be in [0,1]");
  auto out = time_intensity(m.ps);
  if (leakage > 0.0) {
    const auto s = time_intensity(m.ss);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += leakage * s[k];
  }
  return out;
}

struct IntensitySpectrum {
  std::vector<double> detuning;  // gamma
  std::vector<double> intensity;
};

namespace detail {
inline IntensitySpectrum restrict_spectrum(const TimeGrid& g, const std::vector<double>& power, double span_gamma,
                                           double lifetime_ns) {
  IntensitySpectrum s;
  for (std::size_t m = 0; m < power.size(); ++m) {
    const double d = g.omega(m) * lifetime_ns;
    if (std::abs(d) <= span_gamma) {
      s.detuning.push_back(d);
      s.intensity.push_back(power[m]);
    }
  }
  return s;
}
}  // namespace detail

/// |FT of the field restricted to [t0, t1)|^2 on the detuning axis.
inline IntensitySpectrum gated_spectrum(const TimeResponse& field, double t0, double t1, double span_gamma = 100.0,
                                        double lifetime_ns = 141.0) {
  TimeResponse gated = apply_modulation(field, Modulation::window(t0, t1));
  if (t0 > 0.0) gated.prompt_weight = 0.0;
  const auto f = time_to_spectrum(gated);
  std::vector<double> p(f.size());
  for (std::size_t m = 0; m < f.size(); ++m) p[m] = std::norm(f[m]);
  return detail::restrict_spectrum(field.grid, p, span_gamma, lifetime_ns);
}

/// Transmitted spectrum without analyzer, |E_sigma|^2 + |E_pi|^2, prompt included.
inline IntensitySpectrum reference_spectrum(const ResponseMatrix& m, double span_gamma = 100.0,
                                            double lifetime_ns = 141.0) {
  const auto s = time_to_spectrum(m.ss);
  const auto p = time_to_spectrum(m.ps);
  std::vector<double> pw(s.size());
  for (std::size_t k = 0; k < s.size(); ++k) pw[k] = std::norm(s[k]) + std::norm(p[k]);
  return detail::restrict_spectrum(m.ss.grid, pw, span_gamma, lifetime_ns);
}

struct Peak {
  double position;  // gamma
  double height;
  double fwhm;      // gamma
};

/// Local maxima above rel_threshold of the global maximum, with their
/// full widths at half maximum found by linear interpolation.
inline std::vector<Peak> find_peaks(const IntensitySpectrum& s, double rel_threshold = 0.05) {
  std::vector<Peak> peaks;
  const auto& y = s.intensity;
  const auto& x = s.detuning;
  if (y.size() < 3) return peaks;
  const double ymax = *std::max_element(y.begin(), y.end());
  if (!(ymax > 0)) return peaks;
  for (std::size_t i = 1; i + 1 < y.size(); ++i) {
    if (!(y[i] > y[i - 1] && y[i] >= y[i + 1] && y[i] >= rel_threshold * ymax)) continue;
    const double half = 0.5 * y[i];
    std::size_t lo = i, hi = i;
    while (lo > 0 && y[lo] > half) --lo;
    while (hi + 1 < y.size() && y[hi] > half) ++hi;
    auto cross = [&](std::size_t a, std::size_t b) {
      if (y[a] == y[b]) return x[a];
      return x[a] + (half - y[a]) * (x[b] - x[a]) / (y[b] - y[a]);
    };
    const double xl = y[lo] <= half ? cross(lo, lo + 1) : x[lo];
    const double xr = y[hi] <= half ? cross(hi - 1, hi) : x[hi];
    peaks.push_back({x[i], y[i], xr - xl});
  }
  return peaks;
}

/// Groups maxima closer than merge_gamma into one spectral line and keeps
/// the highest. Thick foils split a gated line into a shallow doublet a few
/// gamma wide; Zeeman lines of iron are at least 17 gamma apart.
inline std::vector<Peak> merge_peaks(const std::vector<Peak>& peaks, double merge_gamma = 6.0) {
  std::vector<Peak> out;
  for (const auto& p : peaks) {
    if (!out.empty() && p.position - out.back().position < merge_gamma) {
      if (p.height > out.back().height) out.back() = p;
      continue;
    }
    out.push_back(p);
  }
  return out;
}

}  // namespace darkfringe
