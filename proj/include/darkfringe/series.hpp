#pragma once

// Truncated asymptotic expansions of causal spectra.
//
// A spectrum that behaves like c0 + c1 z + c2 z^2 + ... for large |w|, with
// z = 1/(kappa + i w), has the causal time-domain counterpart
//   c0 delta(t) + sum_j c_j t^(j-1)/(j-1)! exp(-kappa t),   t >= 0.
// The time-domain engine subtracts these terms before every discrete
// transform so that the remainder is smooth and the FFT does not ring.

#include <array>
#include <cmath>
#include <cstddef>

#include "darkfringe/units.hpp"

namespace darkfringe {

inline constexpr std::size_t tail_order = 6;

class TailSeries {
 public:
  static constexpr std::size_t order = tail_order;
  using Coeffs = std::array<cplx, order + 1>;

  TailSeries() { c_.fill(cplx{}); }
  explicit TailSeries(const Coeffs& c) : c_(c) {}

  static TailSeries constant(cplx c0) {
    TailSeries s;
    s.c_[0] = c0;
    return s;
  }

  /// Expansion of a / (w - p) in powers of z = 1/(kappa + i w).
  static TailSeries pole(cplx a, cplx p, double kappa) {
    TailSeries s;
    const cplx q = kappa + I * p;
    cplx qn{1.0, 0.0};
    for (std::size_t n = 1; n <= order; ++n) {
      s.c_[n] = I * a * qn;
      qn *= q;
    }
    return s;
  }

  /// Coefficients whose time functions reproduce the given jumps of the
  /// value and its first order-1 derivatives at the breakpoint.
  static TailSeries from_jumps(const std::array<cplx, order>& jumps, double kappa) {
    TailSeries s;
    for (std::size_t k = 0; k < order; ++k) {
      cplx acc = jumps[k];
      for (std::size_t j = 1; j <= k; ++j) acc -= s.c_[j] * basis_derivative_at_zero(j, k, kappa);
      s.c_[k + 1] = acc;  // diagonal entry is 1
    }
    return s;
  }

  [[nodiscard]] cplx& operator[](std::size_t i) { return c_[i]; }
  [[nodiscard]] const cplx& operator[](std::size_t i) const { return c_[i]; }
  [[nodiscard]] const Coeffs& coeffs() const { return c_; }

  [[nodiscard]] bool is_zero() const {
    for (const auto& v : c_)
      if (v != cplx{}) return false;
    return true;
  }

  TailSeries& operator+=(const TailSeries& o) {
    for (std::size_t i = 0; i <= order; ++i) c_[i] += o.c_[i];
    return *this;
  }
  TailSeries& operator*=(cplx s) {
    for (auto& v : c_) v *= s;
    return *this;
  }
  friend TailSeries operator+(TailSeries a, const TailSeries& b) { return a += b; }
  friend TailSeries operator-(TailSeries a, const TailSeries& b) { return a += b * cplx{-1.0}; }
  friend TailSeries operator*(TailSeries a, cplx s) { return a *= s; }
  friend TailSeries operator*(cplx s, TailSeries a) { return a *= s; }

  friend TailSeries operator*(const TailSeries& a, const TailSeries& b) {
    TailSeries r;
    for (std::size_t i = 0; i <= order; ++i)
      for (std::size_t j = 0; i + j <= order; ++j) r.c_[i + j] += a.c_[i] * b.c_[j];
    return r;
  }

  /// exp() of a series, truncated at the same order.
  [[nodiscard]] TailSeries exp() const {
    TailSeries r;
    r.c_[0] = std::exp(c_[0]);
    for (std::size_t n = 1; n <= order; ++n) {
      cplx acc{};
      for (std::size_t k = 1; k <= n; ++k) acc += static_cast<double>(k) * c_[k] * r.c_[n - k];
      r.c_[n] = acc / static_cast<double>(n);
    }
    return r;
  }

  /// Sum of the singular terms (z^1 and higher) at angular frequency w (rad/ns).
  [[nodiscard]] cplx spectrum_tail(double w, double kappa) const {
    const cplx z = 1.0 / cplx{kappa, w};
    cplx acc{};
    for (std::size_t j = order; j >= 1; --j) acc = (acc + c_[j]) * z;
    return acc;
  }

  /// Full expansion including the constant term.
  [[nodiscard]] cplx spectrum(double w, double kappa) const { return c_[0] + spectrum_tail(w, kappa); }

  /// k-th derivative of the time-domain tail at t >= 0 (right limit at 0).
  [[nodiscard]] cplx time_derivative(double t, std::size_t k, double kappa) const {
    const double e = std::exp(-kappa * t);
    if (e == 0.0) return {};
    cplx acc{};
    for (std::size_t j = 1; j <= order; ++j) {
      if (c_[j] == cplx{}) continue;
      acc += c_[j] * basis_derivative(j, k, t, kappa);
    }
    return acc * e;
  }

  [[nodiscard]] cplx time_value(double t, double kappa) const { return time_derivative(t, 0, kappa); }

 private:
  static double factorial(std::size_t n) {
    double f = 1.0;
    for (std::size_t i = 2; i <= n; ++i) f *= static_cast<double>(i);
    return f;
  }
  static double binomial(std::size_t n, std::size_t k) {
    return factorial(n) / (factorial(k) * factorial(n - k));
  }

  // d^k/dt^k [t^(j-1)/(j-1)!] e^{-kappa t}, without the exponential factor.
  static double basis_derivative(std::size_t j, std::size_t k, double t, double kappa) {
    double acc = 0.0;
    const std::size_t deg = j - 1;
    for (std::size_t l = 0; l <= std::min(k, deg); ++l) {
      const double poly = std::pow(t, static_cast<double>(deg - l)) / factorial(deg - l);
      acc += binomial(k, l) * poly * std::pow(-kappa, static_cast<double>(k - l));
    }
    return acc;
  }

  static double basis_derivative_at_zero(std::size_t j, std::size_t k, double kappa) {
    const std::size_t deg = j - 1;
    if (k < deg) return 0.0;
    return binomial(k, deg) * std::pow(-kappa, static_cast<double>(k - deg));
  }

  Coeffs c_;
};

}  // namespace darkfringe
