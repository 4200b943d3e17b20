#pragma once

// Parameter fits of foil models to binned time spectra.
//
// The overall count scale is always profiled out in closed form, the other
// free parameters are searched with the Nelder-Mead simplex on transformed
// coordinates (log for strictly positive quantities, |x| for quantities
// bounded below by zero). Uncertainties come from the inverse of the Fisher
// information at the optimum.

#include <gsl/gsl_multimin.h>

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "darkfringe/experiment.hpp"

namespace darkfringe {

enum class Objective { poisson, least_squares };
enum class FitModelKind { single_target, two_target };

/// Counts per bin; bins start at t_ns and have equal width.
struct BinnedSpectrum {
  std::vector<double> t_ns;
  std::vector<double> counts;
  double bin_width_ns = 1.0;

  void validate() const {
    if (t_ns.size() != counts.size()) throw std::invalid_argument("BinnedSpectrum: size mismatch");
    if (!(bin_width_ns > 0.0)) throw std::invalid_argument("BinnedSpectrum: bin width must be positive");
    for (double c : counts)
      if (!(c >= 0.0)) throw std::invalid_argument("BinnedSpectrum: counts must be nonnegative");
  }
};

/// Free-parameter mask. Names: thickness_um, b_field_T, alpha_rad, mu_e_d
/// (single target) or sigma_det (two targets); the scale is always free.
struct FitMask {
  bool thickness_um = false;
  bool b_field_T = false;
  bool alpha_rad = false;
  bool mu_e_d = false;
  bool sigma_det = false;
};

struct FitOptions {
  FitModelKind model = FitModelKind::single_target;
  Objective objective = Objective::poisson;
  Channel channel = Channel::sigma_sigma;
  double prompt_veto_ns = 16.0;
  double t_max_ns = 192.0;
  int max_iterations = 5000;
  double tolerance = 1e-10;  // simplex size in transformed coordinates
  int restarts = 3;
  TimeGrid grid{0.0, 0.25, 1u << 13, 0.2};
  ResidualMotionModel residual{0.0, 41, 41, 1e-6, 192.0, false};
  NuclearConstants constants{};
};

struct FitResult {
  bool converged = false;
  std::string message;
  std::vector<std::string> names;
  std::vector<double> values;
  std::vector<double> errors;
  std::vector<std::vector<double>> covariance;
  double objective = 0.0;  // deviance (Poisson) or chi^2 (least squares)
  int iterations = 0;
  int evaluations = 0;
  std::vector<double> expected;  // model counts on the fitted bins
  std::vector<std::size_t> used_bins;

  [[nodiscard]] double value(const std::string& n) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == n) return values[i];
    throw std::out_of_range("FitResult: no parameter " + n);
  }
  [[nodiscard]] double error(const std::string& n) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == n) return errors[i];
    throw std::out_of_range("FitResult: no parameter " + n);
  }
};

struct FitError : std::runtime_error {
  FitResult best;
  FitError(const std::string& what, FitResult r) : std::runtime_error(what), best(std::move(r)) {}
};

namespace detail {

/// Integrates a sampled intensity trace into the given bins.
inline std::vector<double> bin_trace(const std::vector<double>& I, const TimeGrid& g, const BinnedSpectrum& data,
                                     const std::vector<std::size_t>& bins) {
  std::vector<double> out(bins.size(), 0.0);
  for (std::size_t j = 0; j < bins.size(); ++j) {
    const double t0 = data.t_ns[bins[j]];
    const double t1 = t0 + data.bin_width_ns;
    const auto k0 = static_cast<std::size_t>(std::ceil(t0 / g.dt - 1e-9));
    for (std::size_t k = k0; k < I.size() && g.time(k) < t1 - 1e-9; ++k) out[j] += I[k] * g.dt;
  }
  return out;
}

struct Objectives {
  Objective kind;
  const std::vector<double>* n;

  [[nodiscard]] double weight(double c) const { return 1.0 / std::max(c, 1.0); }

  /// Best scale for a model shape m.
  [[nodiscard]] double profile_scale(const std::vector<double>& m) const {
    double a = 0.0, b = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (kind == Objective::poisson) {
        a += (*n)[i];
        b += m[i];
      } else {
        const double w = weight((*n)[i]);
        a += w * (*n)[i] * m[i];
        b += w * m[i] * m[i];
      }
    }
    return b > 0.0 ? a / b : 1.0;
  }

  [[nodiscard]] double operator()(const std::vector<double>& mu) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
      const double c = (*n)[i];
      const double m = mu[i];
      if (kind == Objective::poisson) {
        if (m <= 0.0) {
          if (c > 0.0) return std::numeric_limits<double>::infinity();
          continue;
        }
        acc += 2.0 * (m - c + (c > 0.0 ? c * std::log(c / m) : 0.0));
      } else {
        acc += (c - m) * (c - m) * weight(c);
      }
    }
    return acc;
  }
};

enum class Transform { log, abs, identity };

struct ParamSlot {
  std::string name;
  Transform tr;
  double* target;
};

inline double to_internal(Transform t, double v) {
  switch (t) {
    case Transform::log: return std::log(v);
    case Transform::abs: return v;
    case Transform::identity: return v;
  }
  return v;
}
inline double to_external(Transform t, double u) {
  switch (t) {
    case Transform::log: return std::exp(u);
    case Transform::abs: return std::abs(u);
    case Transform::identity: return u;
  }
  return u;
}

}  // namespace detail

/// Fits the time spectrum of one foil (single_target) or the pi output of
/// the two-foil setup averaged over residual detuning (two_target).
/// initial holds foil 1; foil2 is used only by the two-target model.
inline FitResult fit_targets(const BinnedSpectrum& data, const TargetSpec& initial, const FitMask& mask,
                             const FitOptions& opt = {}, const TargetSpec& foil2 = {}, double initial_sigma_det = 0.0) {
  data.validate();
  opt.grid.validate();
  if (opt.model == FitModelKind::single_target && mask.sigma_det)
    throw std::invalid_argument("fit_targets: sigma_det is a two-target parameter");
  if (opt.model == FitModelKind::two_target && (mask.thickness_um || mask.b_field_T || mask.alpha_rad || mask.mu_e_d))
    throw std::invalid_argument("fit_targets: the two-target model only fits sigma_det and the scale");

  std::vector<std::size_t> bins;
  for (std::size_t i = 0; i < data.t_ns.size(); ++i)
    if (data.t_ns[i] >= opt.prompt_veto_ns - 1e-9 && data.t_ns[i] + data.bin_width_ns <= opt.t_max_ns + 1e-9 &&
        data.t_ns[i] + data.bin_width_ns <= opt.grid.window())
      bins.push_back(i);
  if (bins.empty()) throw std::invalid_argument("fit_targets: no bins inside the fit window");
  std::vector<double> counts;
  for (auto i : bins) counts.push_back(data.counts[i]);

  TargetSpec spec = initial;
  double sigma = initial_sigma_det;
  std::vector<detail::ParamSlot> slots;
  if (mask.thickness_um) slots.push_back({"thickness_um", detail::Transform::log, &spec.thickness_um});
  if (mask.b_field_T) slots.push_back({"b_field_T", detail::Transform::log, &spec.b_field_T});
  if (mask.alpha_rad) slots.push_back({"alpha_rad", detail::Transform::identity, &spec.alpha_rad});
  if (mask.mu_e_d) slots.push_back({"mu_e_d", detail::Transform::abs, &spec.mu_e_d});
  if (mask.sigma_det) slots.push_back({"sigma_det", detail::Transform::abs, &sigma});

  std::unique_ptr<TwoTargetPropagator> prop;
  if (opt.model == FitModelKind::two_target)
    prop = std::make_unique<TwoTargetPropagator>(make_foil(initial, opt.constants), make_foil(foil2, opt.constants), opt.grid);

  const detail::Objectives obj{opt.objective, &counts};
  int evaluations = 0;

  // shape of the expected counts for the current parameter values
  auto shape = [&]() -> std::vector<double> {
    ++evaluations;
    std::vector<double> I;
    if (opt.model == FitModelKind::single_target) {
      I = time_intensity(single_target_time_response(make_foil(spec, opt.constants), opt.channel, opt.grid));
    } else {
      ResidualMotionModel r = opt.residual;
      r.sigma_det = sigma;
      I = prop->averaged(r);
    }
    return detail::bin_trace(I, opt.grid, data, bins);
  };
  auto evaluate = [&](double& scale_out) {
    const auto m = shape();
    scale_out = obj.profile_scale(m);
    std::vector<double> mu(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) mu[i] = scale_out * m[i];
    return obj(mu);
  };

  FitResult res;
  double scale = 1.0;
  int iterations = 0;
  std::string message = "converged";
  bool converged = true;

  if (!slots.empty()) {
    const std::size_t dim = slots.size();
    struct Ctx {
      std::vector<detail::ParamSlot>* slots;
      std::function<double()> f;
    } ctx{&slots, [&]() {
            double s;
            const double v = evaluate(s);
            return std::isfinite(v) ? v : 1e300;
          }};
    gsl_multimin_function fn;
    fn.n = dim;
    fn.params = &ctx;
    fn.f = [](const gsl_vector* x, void* p) {
      auto* c = static_cast<Ctx*>(p);
      for (std::size_t i = 0; i < c->slots->size(); ++i) {
        auto& s = (*c->slots)[i];
        *s.target = detail::to_external(s.tr, gsl_vector_get(x, i));
      }
      return c->f();
    };

    std::unique_ptr<gsl_vector, decltype(&gsl_vector_free)> x(gsl_vector_alloc(dim), &gsl_vector_free);
    std::unique_ptr<gsl_vector, decltype(&gsl_vector_free)> step(gsl_vector_alloc(dim), &gsl_vector_free);
    for (std::size_t i = 0; i < dim; ++i) gsl_vector_set(x.get(), i, detail::to_internal(slots[i].tr, *slots[i].target));

    std::unique_ptr<gsl_multimin_fminimizer, decltype(&gsl_multimin_fminimizer_free)> mm(
        gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, dim), &gsl_multimin_fminimizer_free);
    double best = std::numeric_limits<double>::infinity();
    for (int round = 0; round <= opt.restarts; ++round) {
      const double frac = round == 0 ? 0.05 : 0.01;
      for (std::size_t i = 0; i < dim; ++i) {
        const double u = gsl_vector_get(x.get(), i);
        double s = frac;
        if (slots[i].tr != detail::Transform::log) s = std::max(frac * std::abs(u), 0.02);
        gsl_vector_set(step.get(), i, s);
      }
      gsl_multimin_fminimizer_set(mm.get(), &fn, x.get(), step.get());
      int status = GSL_CONTINUE;
      int it = 0;
      while (status == GSL_CONTINUE && it < opt.max_iterations) {
        ++it;
        if (gsl_multimin_fminimizer_iterate(mm.get()) != GSL_SUCCESS) break;
        status = gsl_multimin_test_size(gsl_multimin_fminimizer_size(mm.get()), opt.tolerance);
      }
      iterations += it;
      gsl_vector_memcpy(x.get(), gsl_multimin_fminimizer_x(mm.get()));
      const double fval = gsl_multimin_fminimizer_minimum(mm.get());
      if (status != GSL_SUCCESS) {
        converged = false;
        message = "simplex did not reach the size tolerance within " + std::to_string(opt.max_iterations) + " iterations";
      }
      const bool stalled = std::abs(best - fval) <= 1e-12 * std::max(1.0, std::abs(fval));
      best = std::min(best, fval);
      if (round > 0 && stalled) break;
    }
    for (std::size_t i = 0; i < dim; ++i) *slots[i].target = detail::to_external(slots[i].tr, gsl_vector_get(x.get(), i));
    if (converged) message = "converged";
  }

  res.objective = evaluate(scale);
  const auto m = shape();
  res.expected.resize(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) res.expected[i] = scale * m[i];
  res.used_bins = bins;

  // Covariance from the Fisher information of the expected counts,
  // mu = scale * shape(p): F_ab = sum w_i dmu_i/dp_a dmu_i/dp_b with
  // w = 1/mu (Poisson) or the least-squares weights.
  std::vector<double*> targets;
  for (auto& s : slots) {
    res.names.push_back(s.name);
    targets.push_back(s.target);
  }
  res.names.push_back("scale");
  const std::size_t np = res.names.size();
  std::vector<double> p0;
  for (auto* t : targets) p0.push_back(*t);
  p0.push_back(scale);

  std::vector<std::vector<double>> grad(np);
  for (std::size_t a = 0; a + 1 < np; ++a) {
    const double h = 1e-4 * std::max(std::abs(p0[a]), 1e-2);
    *targets[a] = p0[a] + h;
    const auto up = shape();
    *targets[a] = p0[a] - h;
    const auto dn = shape();
    *targets[a] = p0[a];
    grad[a].resize(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) grad[a][i] = scale * (up[i] - dn[i]) / (2 * h);
  }
  grad[np - 1] = m;

  const auto n = static_cast<Eigen::Index>(np);
  Eigen::MatrixXd F = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double mu = res.expected[i];
    double w;
    if (opt.objective == Objective::poisson) {
      if (!(mu > 0.0)) continue;
      w = 1.0 / mu;
    } else {
      w = obj.weight(counts[i]);
    }
    for (Eigen::Index a = 0; a < n; ++a)
      for (Eigen::Index b = 0; b < n; ++b)
        F(a, b) += w * grad[static_cast<std::size_t>(a)][i] * grad[static_cast<std::size_t>(b)][i];
  }
  res.values = p0;
  res.errors.assign(np, std::numeric_limits<double>::quiet_NaN());
  res.covariance.assign(np, std::vector<double>(np, std::numeric_limits<double>::quiet_NaN()));
  // equilibrate before inverting; the scale entry is many orders smaller
  Eigen::VectorXd d = F.diagonal().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
  const Eigen::MatrixXd Fs = d.asDiagonal() * F * d.asDiagonal();
  Eigen::LDLT<Eigen::MatrixXd> ldlt(Fs);
  const bool ok = ldlt.info() == Eigen::Success && ldlt.isPositive() &&
                  ldlt.vectorD().minCoeff() > 1e-12 * ldlt.vectorD().maxCoeff();
  if (ok) {
    const Eigen::MatrixXd C = d.asDiagonal() * ldlt.solve(Eigen::MatrixXd::Identity(n, n)) * d.asDiagonal();
    for (std::size_t i = 0; i < np; ++i) {
      for (std::size_t j = 0; j < np; ++j)
        res.covariance[i][j] = C(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      res.errors[i] = std::sqrt(std::max(0.0, C(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i))));
    }
  } else {
    message += "; information matrix singular, no uncertainties";
  }
  res.converged = converged;
  res.message = message;
  res.iterations = iterations;
  res.evaluations = evaluations;
  if (!converged) throw FitError("fit did not converge: " + message, res);
  return res;
}

}  // namespace darkfringe
