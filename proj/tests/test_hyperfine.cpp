#include <gtest/gtest.h>

#include <random>

#include "darkfringe/hyperfine.hpp"

using namespace darkfringe;

namespace {

NuclearModel model_with(double gamma_c, std::array<double, 6> lines) {
  NuclearModel m;
  m.collective_width = gamma_c;
  m.line_positions = lines;
  return m;
}

const std::array<double, 6> kLines{-54.0, -31.0, -8.0, 8.0, 31.0, 54.0};

}  // namespace

TEST(Lorentzian, OnResonanceIsMinusTwoGammaC) {
  const auto m = model_with(1.0, kLines);
  for (int i = 1; i <= 6; ++i) {
    const cplx v = lorentzian(kLines[static_cast<std::size_t>(i - 1)], i, m);
    EXPECT_NEAR(v.real(), -2.0, 1e-15);
    EXPECT_NEAR(v.imag(), 0.0, 1e-15);
  }
  EXPECT_NEAR(lorentzian(kLines[0], 1, model_with(3.5, kLines)).real(), -7.0, 1e-14);
}

TEST(Lorentzian, MatchesDirectComplexArithmetic) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> w(-100.0, 100.0), gc(0.01, 20.0);
  for (int k = 0; k < 10; ++k) {
    const double omega = w(rng), g = gc(rng);
    const auto m = model_with(g, kLines);
    // i G / (x - i/2) = i G (x + i/2) / (x^2 + 1/4)
    const double x = omega - kLines[2];
    const double den = x * x + 0.25;
    const cplx expect{-0.5 * g / den, g * x / den};
    const cplx got = lorentzian(omega, 3, m);
    EXPECT_NEAR(std::abs(got - expect), 0.0, 1e-13 * std::abs(expect));
  }
}

TEST(Lorentzian, DecaysMonotonicallyBeyondOutermostLine) {
  const auto m = model_with(2.0, kLines);
  double prev = std::abs(lorentzian(60.0, 6, m));
  for (double w = 61.0; w < 1e4; w *= 1.3) {
    const double v = std::abs(lorentzian(w, 6, m));
    EXPECT_LT(v, prev);
    prev = v;
  }
  EXPECT_LT(prev, 1e-3);
}

TEST(Lorentzian, RejectsInvalidLineIndex) {
  const auto m = model_with(1.0, kLines);
  EXPECT_THROW(lorentzian(0.0, 0, m), std::domain_error);
  EXPECT_THROW(lorentzian(0.0, 7, m), std::domain_error);
}

TEST(LinePositions, ZeroFieldCollapsesAllLines) {
  for (double p : line_positions_from_field(0.0)) EXPECT_EQ(p, 0.0);
}

TEST(LinePositions, LinearInField) {
  const auto a = line_positions_from_field(16.0), b = line_positions_from_field(32.0);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(b[i], 2.0 * a[i], 1e-12 * std::abs(b[i]));
}

TEST(LinePositions, OuterSplittingMatchesHandEvaluation) {
  // outer lines: (mg, me) = (-1/2, -3/2) and (+1/2, +3/2)
  const NuclearConstants c;
  const double B = 32.69;
  const double split_eV = B * 3.15245125844e-8 * (3.0 * std::abs(c.excited_moment_muN) / 1.5 + c.ground_moment_muN / 0.5);
  const double split_gamma = split_eV / (c.gamma_neV * 1e-9);
  const auto p = line_positions_from_field(B, c);
  EXPECT_NEAR(p[5] - p[0], split_gamma, 1e-9 * split_gamma);
  // the alpha-Fe calibration standard has its outer lines 10.6 mm/s apart at room temperature
  const double mm_per_s = (p[5] - p[0]) * c.gamma_neV * 1e-9 / (c.energy_keV * 1e3) * 299792458.0e3;
  EXPECT_NEAR(mm_per_s, 10.62 * B / 33.0, 0.1);
}

TEST(LinePositions, SortedAndSymmetric) {
  const auto p = line_positions_from_field(33.0);
  EXPECT_TRUE(std::is_sorted(p.begin(), p.end()));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(p[i], -p[5 - i], 1e-12);
}

TEST(LinePositions, RejectsNegativeField) { EXPECT_THROW(line_positions_from_field(-1.0), std::domain_error); }

TEST(Response, NoResonantMaterialIsTransparent) {
  const auto m = model_with(0.0, kLines);
  for (double w : {-80.0, -31.0, 0.0, 8.0, 500.0}) {
    EXPECT_EQ(response_linear(w, m), cplx(1.0));
    EXPECT_EQ(response_circular(w, m), cplx(1.0));
  }
}

TEST(Response, TransparentFarFromLines) {
  const auto m = make_model(TargetSpec{});
  for (double w : {-2e4, 1.2e4, 3e4}) {
    EXPECT_LT(std::abs(response_linear(w, m) - 1.0), 1e-3 * m.collective_width);
    EXPECT_LT(std::abs(response_circular(w, m) - 1.0), 1e-3 * m.collective_width);
  }
}

TEST(Response, PassiveOnTheRealAxis) {
  const auto m = make_model(TargetSpec{3.0, 33.0});
  for (double w = -200.0; w <= 200.0; w += 0.05) {
    EXPECT_LE(std::abs(response_linear(w, m)), 1.0 + 1e-15);
    EXPECT_LE(std::abs(response_circular(w, m)), 1.0 + 1e-15);
  }
}

TEST(Response, LinearLineCenterMatchesExponentialOfSum) {
  const auto m = model_with(1.0, kLines);
  const double w2 = kLines[1];
  auto lor = [](double w, double wi) { return cplx(0.0, 1.0) / cplx(w - wi, -0.5); };
  const cplx expect = std::exp(lor(w2, kLines[1]) + lor(w2, kLines[4]));
  EXPECT_NEAR(std::abs(response_linear(w2, m) - expect), 0.0, 1e-15);
}

TEST(Response, ScatteredPartIdentity) {
  EXPECT_EQ(scattered_part(cplx(1.0)), cplx(0.0));
  EXPECT_EQ(scattered_part(cplx(0.0)), cplx(-1.0));
  const auto m = make_model(TargetSpec{});
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> w(-60.0, 60.0);
  for (int k = 0; k < 10; ++k) {
    const double x = w(rng);
    const cplx r = response_linear(x, m);
    EXPECT_EQ(scattered_part(r), r - 1.0);
  }
}

TEST(Invariants, SingleLineIsolationAtDefaultField) {
  const auto m = make_model(TargetSpec{});
  for (int line : {2, 5}) {
    const double wl = m.line_positions[static_cast<std::size_t>(line - 1)];
    EXPECT_LT(std::abs(response_circular(wl, m) - 1.0), 0.05) << "line " << line;
  }
}

TEST(Invariants, WeightBookkeeping) {
  const NuclearModel m;
  double lin = 0.0, circ = 0.0;
  for (int i = 1; i <= 6; ++i) {
    lin += m.weight(i, Transition::linear);
    circ += m.weight(i, Transition::circular);
  }
  EXPECT_DOUBLE_EQ(lin, 2.0);
  EXPECT_DOUBLE_EQ(circ, 2.0);
  EXPECT_DOUBLE_EQ(lin + circ, 4.0);
}

TEST(TargetSpec, ValidationAndAngleNormalization) {
  EXPECT_THROW((TargetSpec{0.0}).validate(), std::domain_error);
  EXPECT_THROW((TargetSpec{1.0, 33.0, 0.0, 0.0, 1.5}).validate(), std::domain_error);
  EXPECT_THROW((TargetSpec{1.0, 33.0, 0.0, 0.0, 0.9, -0.1}).validate(), std::domain_error);
  EXPECT_DOUBLE_EQ(normalize_angle(pi), pi);
  EXPECT_DOUBLE_EQ(normalize_angle(-pi), pi);
  EXPECT_NEAR(normalize_angle(2.5 * pi), 0.5 * pi, 1e-15);
  EXPECT_NEAR(normalize_angle(-1.75 * pi), 0.25 * pi, 1e-15);
}

TEST(CollectiveWidth, ScalesWithThicknessAndFractions) {
  const double g1 = collective_width(TargetSpec{1.0});
  EXPECT_NEAR(g1, 2.56e-18 * 8.49e22 * 0.95 * 0.8 * 1e-4 / 4.0, 1e-12);
  EXPECT_NEAR(collective_width(TargetSpec{2.0}), 2.0 * g1, 1e-12);
  EXPECT_EQ(collective_width(TargetSpec{1.0, 33.0, 0.0, 0.0, 0.0}), 0.0);
}
