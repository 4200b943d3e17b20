#pragma once

// Residual relative motion of the foils and photon counting statistics.
//
// Slow vibrations are treated as a constant Doppler detuning Delta of foil 1
// during each pulse, distributed as
//     p(Delta) = exp(-(Delta / 2 sigma)^2) / (2 sqrt(pi) sigma),
// so that sigma is not the standard deviation (that is sqrt(2) sigma).
// Averages over p use Gauss-Hermite nodes Delta = 2 sigma x.

#include <gsl/gsl_integration.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <future>
#include <memory>
#include <ostream>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "darkfringe/errors.hpp"
#include "darkfringe/timedomain.hpp"

namespace darkfringe {

struct ResidualMotionModel {
  double sigma_det = 0.0;      // gamma, width as in p(Delta) above
  int quadrature_order = 41;
  int max_order = 331;
  double tolerance = 1e-6;     // relative L2 change on doubling the order
  double window_ns = 192.0;    // where convergence is judged
  bool adaptive = true;

  void validate() const {
    if (!(sigma_det >= 0.0)) throw std::domain_error("ResidualMotionModel: sigma_det must be >= 0");
    if (quadrature_order < 5 || quadrature_order % 2 == 0)
      throw std::domain_error("ResidualMotionModel: quadrature order must be odd and >= 5");
  }
};

inline double detuning_density(double delta, double sigma) {
  if (!(sigma > 0.0)) throw std::domain_error("detuning_density: sigma must be positive");
  const double u = delta / (2.0 * sigma);
  return std::exp(-u * u) / (2.0 * std::sqrt(pi) * sigma);
}

/// Standard deviation of p(Delta) for width parameter sigma.
inline double detuning_std(double sigma) { return std::sqrt(2.0) * sigma; }

struct QuadratureRule {
  std::vector<double> nodes;    // detunings in gamma
  std::vector<double> weights;  // sum to 1
};

inline QuadratureRule detuning_rule(double sigma, int order) {
  if (order < 1) throw std::domain_error("detuning_rule: order must be positive");
  if (sigma == 0.0) return {{0.0}, {1.0}};
  std::unique_ptr<gsl_integration_fixed_workspace, decltype(&gsl_integration_fixed_free)> w(
      gsl_integration_fixed_alloc(gsl_integration_fixed_hermite, static_cast<std::size_t>(order), 0.0, 1.0, 0.0, 0.0),
      &gsl_integration_fixed_free);
  if (!w) throw std::runtime_error("Gauss-Hermite rule allocation failed");
  const double* x = gsl_integration_fixed_nodes(w.get());
  const double* wt = gsl_integration_fixed_weights(w.get());
  QuadratureRule r;
  for (int i = 0; i < order; ++i) {
    r.nodes.push_back(2.0 * sigma * x[i]);
    r.weights.push_back(wt[i] / std::sqrt(pi));
  }
  return r;
}

namespace detail {

/// f applied to every x, spread over the hardware threads. Results keep
/// the input order.
template <class F>
std::vector<std::vector<double>> parallel_map(const std::vector<double>& xs, F& f) {
  std::vector<std::vector<double>> out(xs.size());
  const std::size_t workers = std::min<std::size_t>(std::max(1u, std::thread::hardware_concurrency()), xs.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = f(xs[i]);
    return out;
  }
  std::vector<std::future<void>> jobs;
  for (std::size_t w = 0; w < workers; ++w)
    jobs.push_back(std::async(std::launch::async, [&, w] {
      for (std::size_t i = w; i < xs.size(); i += workers) out[i] = f(xs[i]);
    }));
  for (auto& j : jobs) j.get();
  return out;
}

inline double relative_l2(const std::vector<double>& a, const std::vector<double>& b, std::size_t upto) {
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < std::min({a.size(), b.size(), upto}); ++k) {
    num += (a[k] - b[k]) * (a[k] - b[k]);
    den += b[k] * b[k];
  }
  if (den == 0.0) return num == 0.0 ? 0.0 : INFINITY;
  return std::sqrt(num / den);
}

}  // namespace detail

/// Averages f(Delta) (a time trace on grid g) over p(Delta). With the
/// adaptive flag set the order is doubled until the trace over the
/// analysis window changes by less than the tolerance.
template <class F>
std::vector<double> average_over_detuning(const ResidualMotionModel& model, const TimeGrid& g, F&& f) {
  model.validate();
  if (model.sigma_det == 0.0) return f(0.0);
  auto integrate = [&](int order) {
    const auto rule = detuning_rule(model.sigma_det, order);
    const auto values = detail::parallel_map(rule.nodes, f);
    std::vector<double> acc(values.front().size(), 0.0);
    // summed in node order so the result does not depend on scheduling
    for (std::size_t i = 0; i < values.size(); ++i)
      for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += rule.weights[i] * values[i][k];
    return acc;
  };
  int order = model.quadrature_order;
  auto current = integrate(order);
  if (!model.adaptive) return current;
  const auto upto = static_cast<std::size_t>(std::ceil(model.window_ns / g.dt));
  double change = INFINITY;
  while (2 * order + 1 <= model.max_order) {
    order = 2 * order + 1;
    auto next = integrate(order);
    change = detail::relative_l2(current, next, upto);
    current = std::move(next);
    if (change < model.tolerance) return current;
  }
  throw QuadratureError("detuning average did not converge: relative change " + std::to_string(change) +
                        " at order " + std::to_string(order));
}

inline TimeResponse operator+(const TimeResponse& a, const TimeResponse& b) {
  detail::check_same_grid(a, b);
  TimeResponse r = a;
  r.prompt_weight += b.prompt_weight;
  for (const auto& t : b.tails) {
    bool merged = false;
    for (auto& u : r.tails)
      if (std::abs(u.tau - t.tau) < 1e-9) {
        u.series += t.series;
        merged = true;
        break;
      }
    if (!merged) r.tails.push_back(t);
  }
  for (std::size_t k = 0; k < r.regular.size(); ++k) r.regular[k] += b.regular[k];
  r.causality_residual = std::max(a.causality_residual, b.causality_residual);
  return r;
}

/// |[exp(i Delta t) E1(t)] * E2(t)|^2 averaged over the detuning
/// distribution, for scalar amplitudes E1 and E2.
inline std::vector<double> detuning_averaged_intensity(const TimeResponse& e1, const TimeResponse& e2,
                                                       const ResidualMotionModel& model, double lifetime_ns = 141.0) {
  return average_over_detuning(model, e1.grid, [&](double delta) {
    return time_intensity(compose_time(apply_modulation(e1, Modulation::detuning(delta / lifetime_ns)), e2));
  });
}

/// Matrix form: pi output for sigma input of m2 * (exp(i Delta t) m1).
inline std::vector<double> detuning_averaged_intensity(const ResponseMatrix& m1, const ResponseMatrix& m2,
                                                       const ResidualMotionModel& model, double lifetime_ns = 141.0) {
  return average_over_detuning(model, m1.ss.grid, [&](double delta) {
    const auto mod = Modulation::detuning(delta / lifetime_ns);
    const TimeResponse out =
        compose_time(apply_modulation(m1.ss, mod), m2.ps) + compose_time(apply_modulation(m1.ps, mod), m2.pp);
    return time_intensity(out);
  });
}

/// Detected pi intensity of the two-foil setup for one detuning of foil 1
/// and an optional motion of foil 1. Foil 2 data can be precomputed.
class TwoTargetPropagator {
 public:
  TwoTargetPropagator(const Foil& f1, const Foil& f2, const TimeGrid& g)
      : f1_(f1), f2_(f2), g_(g), s2_(detail::foil_spectra(f2, g)),
        ps2_(detail::channel_from(s2_, f2_, Channel::sigma_pi, g_)),
        pp2_(detail::channel_from(s2_, f2_, Channel::pi_pi, g_)) {
    g.validate();
  }

  [[nodiscard]] const TimeGrid& grid() const { return g_; }

  /// Pi output amplitude (sigma input) with foil 1 detuned by delta (gamma).
  [[nodiscard]] TimeResponse pi_output(double delta, const MotionProfile& motion = MotionProfile::still()) const {
    const Foil f1d{f1_.spec, f1_.model.detuned(delta)};
    const auto s1 = detail::foil_spectra(f1d, g_);
    if (is_still(motion)) return static_pi_output(s1, f1d);
    const auto ss1 = detail::channel_from(s1, f1d, Channel::sigma_sigma, g_);
    const auto ps1 = detail::channel_from(s1, f1d, Channel::sigma_pi, g_);
    const auto mod = Modulation::from_motion(motion);
    return compose_time(apply_modulation(ss1, mod), ps2_) + compose_time(apply_modulation(ps1, mod), pp2_);
  }

  [[nodiscard]] std::vector<double> intensity(double delta, const MotionProfile& motion = MotionProfile::still()) const {
    return time_intensity(pi_output(delta, motion));
  }

  [[nodiscard]] std::vector<double> averaged(const ResidualMotionModel& model,
                                             const MotionProfile& motion = MotionProfile::still()) const {
    return average_over_detuning(model, g_, [&](double d) { return intensity(d, motion); });
  }

  static bool is_still(const MotionProfile& p) {
    return std::all_of(p.knots.begin(), p.knots.end(), [](const auto& k) { return k.second == 0.0; });
  }

 private:
  // Without motion the product is formed directly from the analytic spectra.
  [[nodiscard]] TimeResponse static_pi_output(const detail::FoilSpectra& s1, const Foil& f1d) const {
    const auto w_ss1 = detail::channel_weights(f1d.spec.alpha_rad, Channel::sigma_sigma);
    const auto w_ps1 = detail::channel_weights(f1d.spec.alpha_rad, Channel::sigma_pi);
    const auto w_ps2 = detail::channel_weights(f2_.spec.alpha_rad, Channel::sigma_pi);
    const auto w_pp2 = detail::channel_weights(f2_.spec.alpha_rad, Channel::pi_pi);
    const double a = f1d.attenuation() * f2_.attenuation();
    std::vector<cplx> f(g_.padded());
    for (std::size_t m = 0; m < f.size(); ++m) {
      const cplx ss1 = w_ss1.lin * s1.rl[m] + w_ss1.circ * s1.rc[m];
      const cplx ps1 = w_ps1.lin * s1.rl[m] + w_ps1.circ * s1.rc[m];
      const cplx ps2 = w_ps2.lin * s2_.rl[m] + w_ps2.circ * s2_.rc[m];
      const cplx pp2 = w_pp2.lin * s2_.rl[m] + w_pp2.circ * s2_.rc[m];
      f[m] = a * (ps2 * ss1 + pp2 * ps1);
    }
    auto comb = [](const detail::ChannelWeights& w, const TailSeries& l, const TailSeries& c) {
      return cplx{w.lin} * l + cplx{w.circ} * c;
    };
    const TailSeries series = cplx{a} * (comb(w_ps2, s2_.sl, s2_.sc) * comb(w_ss1, s1.sl, s1.sc) +
                                         comb(w_pp2, s2_.sl, s2_.sc) * comb(w_ps1, s1.sl, s1.sc));
    return detail::assemble(g_, std::move(f), {{0.0, series}});
  }

  Foil f1_, f2_;
  TimeGrid g_;
  detail::FoilSpectra s2_;
  TimeResponse ps2_, pp2_;
};

/// Foil-level convenience: foil 1 detuned (and optionally moving), foil 2 static.
inline std::vector<double> detuning_averaged_intensity(const Foil& f1, const Foil& f2, const ResidualMotionModel& model,
                                                       const TimeGrid& g = {},
                                                       const MotionProfile& motion = MotionProfile::still()) {
  return TwoTargetPropagator(f1, f2, g).averaged(model, motion);
}

// ---------------------------------------------------------------------------
// Velocity and displacement scales.

/// Doppler velocity (mm/s) that detunes the resonance by delta linewidths.
inline double velocity_of_detuning(double delta, const NuclearModel& m = {}) {
  return units::speed_of_light_mm_per_s * delta * m.gamma_neV * 1e-9 / (m.reference_energy_keV * 1e3);
}

/// Displacement amplitude (nm) of a harmonic vibration at f Hz with
/// velocity spread sigma_v (mm/s).
inline double displacement_spread(double sigma_v_mm_per_s, double f_hz) {
  if (!(f_hz > 0.0)) throw std::domain_error("displacement_spread: frequency must be positive");
  return sigma_v_mm_per_s / (two_pi * f_hz) * 1e6;
}

// ---------------------------------------------------------------------------
// Photon events.

/// Expected counts per cycle, per bunch and time bin.
struct RateTable {
  double bin_width_ns = 1.0;
  std::vector<std::vector<double>> rates;  // [bunch - 1][bin]

  void validate(double bunch_spacing_ns) const {
    if (!(bin_width_ns > 0.0)) throw std::domain_error("RateTable: bin width must be positive");
    for (const auto& b : rates) {
      if (static_cast<double>(b.size()) * bin_width_ns > bunch_spacing_ns + 1e-9)
        throw std::domain_error("RateTable: bins extend past the bunch spacing");
      for (double r : b)
        if (!(r >= 0.0)) throw std::domain_error("RateTable: negative or NaN rate");
    }
  }
};

struct Event {
  std::uint64_t cycle;
  int bunch;    // 1-based
  double t_ns;  // time within the bunch
};

struct EventStream {
  std::vector<Event> events;
  std::uint64_t seed = 0;
};

namespace detail {

inline std::mt19937_64 cycle_engine(std::uint64_t seed, std::uint64_t cycle) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(cycle), static_cast<std::uint32_t>(cycle >> 32)};
  return std::mt19937_64(seq);
}

inline void draw_cycle(const RateTable& table, std::uint64_t cycle, std::mt19937_64& rng, std::vector<Event>& out) {
  for (std::size_t b = 0; b < table.rates.size(); ++b) {
    const auto& r = table.rates[b];
    double total = 0.0;
    for (double v : r) total += v;
    if (total <= 0.0) continue;
    const auto n = std::poisson_distribution<long long>(total)(rng);
    if (n == 0) continue;
    std::discrete_distribution<std::size_t> pick(r.begin(), r.end());
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (long long i = 0; i < n; ++i) {
      const auto bin = pick(rng);
      out.push_back({cycle, static_cast<int>(b + 1), table.bin_width_ns * (static_cast<double>(bin) + u(rng))});
    }
  }
}

}  // namespace detail

/// Independent Poisson counts per (cycle, bunch, bin), event times uniform
/// inside their bin. Each cycle has its own generator seeded from
/// (seed, cycle), so results do not depend on evaluation order.
inline EventStream poisson_events(const RateTable& table, std::uint64_t n_cycles, std::uint64_t seed,
                                  double bunch_spacing_ns = 192.0) {
  table.validate(bunch_spacing_ns);
  EventStream s;
  s.seed = seed;
  for (std::uint64_t c = 0; c < n_cycles; ++c) {
    auto rng = detail::cycle_engine(seed, c);
    detail::draw_cycle(table, c, rng, s.events);
  }
  return s;
}

/// As poisson_events, but each cycle first draws one of several rate tables
/// with the given probabilities (e.g. a residual detuning per cycle).
inline EventStream poisson_events_mixture(const std::vector<RateTable>& tables, const std::vector<double>& probabilities,
                                          std::uint64_t n_cycles, std::uint64_t seed, double bunch_spacing_ns = 192.0) {
  if (tables.empty() || tables.size() != probabilities.size())
    throw std::invalid_argument("poisson_events_mixture: need one probability per table");
  for (const auto& t : tables) t.validate(bunch_spacing_ns);
  EventStream s;
  s.seed = seed;
  std::discrete_distribution<std::size_t> which(probabilities.begin(), probabilities.end());
  for (std::uint64_t c = 0; c < n_cycles; ++c) {
    auto rng = detail::cycle_engine(seed, c);
    const auto& t = tables.size() == 1 ? tables[0] : tables[which(rng)];
    detail::draw_cycle(t, c, rng, s.events);
  }
  return s;
}

/// Histograms per bunch: result[bunch - 1][bin].
inline std::vector<std::vector<double>> fold_events(const EventStream& s, int n_bunches, double bin_width_ns,
                                                    std::size_t n_bins) {
  if (n_bunches < 1 || !(bin_width_ns > 0.0)) throw std::invalid_argument("fold_events: invalid binning");
  std::vector<std::vector<double>> h(static_cast<std::size_t>(n_bunches), std::vector<double>(n_bins, 0.0));
  for (const auto& e : s.events) {
    if (e.bunch < 1 || e.bunch > n_bunches) throw std::out_of_range("fold_events: event outside the fill pattern");
    if (e.t_ns < 0.0) throw std::out_of_range("fold_events: negative event time");
    const auto bin = static_cast<std::size_t>(e.t_ns / bin_width_ns);
    if (bin >= n_bins) throw std::out_of_range("fold_events: event time beyond the last bin");
    h[static_cast<std::size_t>(e.bunch - 1)][bin] += 1.0;
  }
  return h;
}

inline void write_events_csv(const EventStream& s, std::ostream& os) {
  os << "cycle,bunch,t_ns\n";
  char buf[64];
  for (const auto& e : s.events) {
    std::snprintf(buf, sizeof buf, "%.6f", e.t_ns);
    os << e.cycle << ',' << e.bunch << ',' << buf << '\n';
  }
}

}  // namespace darkfringe
