#include <gtest/gtest.h>

#include <random>

#include "darkfringe/jones.hpp"

using namespace darkfringe;

namespace {

// plain 2x2 arrays as an oracle independent of JonesMatrix
using M2 = std::array<std::array<cplx, 2>, 2>;

M2 mul(const M2& a, const M2& b) {
  M2 r{};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k) r[i][j] += a[i][k] * b[k][j];
  return r;
}

// rotation g_a = (c, s; -s, c), response g_a diag(rl, rc) g_a^-1
M2 oracle_target(cplx rl, cplx rc, double a, double atten) {
  const double c = std::cos(a), s = std::sin(a);
  const M2 g{{{c, s}, {-s, c}}};
  const M2 gi{{{c, -s}, {s, c}}};
  const M2 d{{{rl, 0.0}, {0.0, rc}}};
  M2 r = mul(mul(g, d), gi);
  for (auto& row : r)
    for (auto& v : row) v *= atten;
  return r;
}

Foil random_foil(std::mt19937_64& rng, double alpha) {
  std::uniform_real_distribution<double> d(0.3, 3.0), b(25.0, 35.0), mu(0.0, 0.5);
  return make_foil(TargetSpec{d(rng), b(rng), alpha, mu(rng)});
}

double max_abs(const JonesMatrix& m) {
  return std::max({std::abs(m.ss), std::abs(m.sp), std::abs(m.ps), std::abs(m.pp)});
}

}  // namespace

TEST(Rotation, Basics) {
  const auto r0 = rotation(0.0);
  EXPECT_EQ(r0.ss, cplx(1.0));
  EXPECT_EQ(r0.sp, cplx(0.0));
  EXPECT_EQ(r0.ps, cplx(0.0));
  EXPECT_EQ(r0.pp, cplx(1.0));
  const auto r90 = rotation(pi / 2);
  EXPECT_NEAR(r90.ss.real(), 0.0, 1e-16);
  EXPECT_NEAR(r90.sp.real(), 1.0, 1e-16);
  EXPECT_NEAR(r90.ps.real(), -1.0, 1e-16);
  const auto id = rotation(pi / 4) * rotation(-pi / 4);
  EXPECT_LT(max_abs(id + cplx(-1.0) * JonesMatrix::identity()), 1e-15);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> a(-pi, pi);
  for (int k = 0; k < 20; ++k) EXPECT_NEAR(std::abs(rotation(a(rng)).determinant() - 1.0), 0.0, 1e-15);
}

TEST(TargetMatrix, ZeroPhaseReproducesStatic) {
  const auto f = make_foil(TargetSpec{1.5, 33.0, 0.3, 0.2});
  for (double w : {-40.0, -8.6, 0.0, 31.5}) {
    const auto a = target_matrix(f, w), b = target_matrix(f, w, 0.0);
    EXPECT_EQ(a.ss, b.ss);
    EXPECT_EQ(a.ps, b.ps);
  }
}

TEST(TargetMatrix, NoResonanceLeavesOnlyAttenuation) {
  TargetSpec t{1.0, 33.0, 0.7, 0.4, 0.0};  // no 57Fe
  const auto f = make_foil(t);
  for (double phi : {0.0, 1.0, pi}) {
    const auto m = target_matrix(f, 3.0, phi);
    EXPECT_NEAR(std::abs(m.ss - std::exp(-0.2)), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(m.pp - std::exp(-0.2)), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(m.sp), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(m.ps), 0.0, 1e-15);
  }
}

TEST(TargetMatrix, MatchesMatrixProductOracle) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> a(-pi, pi), w(-70.0, 70.0);
  for (int k = 0; k < 50; ++k) {
    const auto f = random_foil(rng, a(rng));
    const double omega = w(rng);
    const auto m = target_matrix(f, omega);
    const auto o = oracle_target(response_linear(omega, f.model), response_circular(omega, f.model), f.spec.alpha_rad,
                                 f.attenuation());
    EXPECT_NEAR(std::abs(m.ss - o[0][0]), 0.0, 1e-14);
    EXPECT_NEAR(std::abs(m.sp - o[0][1]), 0.0, 1e-14);
    EXPECT_NEAR(std::abs(m.ps - o[1][0]), 0.0, 1e-14);
    EXPECT_NEAR(std::abs(m.pp - o[1][1]), 0.0, 1e-14);
  }
}

TEST(TargetMatrix, OffDiagonalAtQuarterPi) {
  const auto f = make_foil(TargetSpec{1.0, 33.0, pi / 4});
  const double w = 12.3;
  const auto m = target_matrix(f, w);
  const cplx half = 0.5 * (response_linear(w, f.model) - response_circular(w, f.model));
  EXPECT_NEAR(std::abs(std::abs(m.sp) - std::abs(half)), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(m.ps + half), 0.0, 1e-15);
}

TEST(TargetMatrix, PassiveSingularValues) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> a(-pi, pi), w(-70.0, 70.0);
  for (int k = 0; k < 100; ++k) {
    const auto f = random_foil(rng, a(rng));
    const auto m = target_matrix(f, w(rng));
    // largest singular value from the 2x2 Gram matrix
    const double t = std::norm(m.ss) + std::norm(m.sp) + std::norm(m.ps) + std::norm(m.pp);
    const double d = std::norm(m.determinant());
    const double smax2 = 0.5 * (t + std::sqrt(std::max(0.0, t * t - 4 * d)));
    EXPECT_LE(smax2, 1.0 + 1e-12);
  }
}

TEST(ComposeTwoTargets, IdenticalTargetsGiveDarkFringe) {
  const auto f1 = make_foil(TargetSpec{1.0, 33.0, pi / 4});
  const auto f2 = make_foil(TargetSpec{1.0, 33.0, -pi / 4});
  for (double w = -80.0; w <= 80.0; w += 0.37) {
    const auto s = compose_two_targets(f1, f2, w);
    EXPECT_NEAR(std::abs(s.ledger.P1), 0.0, 1e-15);
    EXPECT_LT(std::abs(s.pi), 1e-15);
  }
}

TEST(ComposeTwoTargets, SameClassTwoFoilPathsCancelForUnequalTargets) {
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> w(-80.0, 80.0), phi(0.0, two_pi);
  for (int k = 0; k < 200; ++k) {
    const auto f1 = random_foil(rng, pi / 4), f2 = random_foil(rng, -pi / 4);
    const auto s = compose_two_targets(f1, f2, w(rng), phi(rng));
    EXPECT_EQ(s.ledger.S0, cplx(4.0));
    EXPECT_LT(std::abs(s.ledger.S2), 1e-12 * std::abs(s.ledger.S0));
    EXPECT_LT(std::abs(s.ledger.P2), 1e-12 * std::abs(s.ledger.S0));
  }
}

TEST(ComposeTwoTargets, GeneralAnglesMatchMatrixProductAndReconstruct) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> a(-pi, pi), w(-80.0, 80.0), phi(0.0, two_pi);
  int p2_nonzero = 0;
  for (int k = 0; k < 100; ++k) {
    const auto f1 = random_foil(rng, a(rng)), f2 = random_foil(rng, a(rng));
    const double omega = w(rng), ph = phi(rng);
    const auto s = compose_two_targets(f1, f2, omega, ph);
    // oracle: foil 2 times foil 1, phase applied to the scattered parts of foil 1
    const cplx e = std::polar(1.0, ph);
    const auto m1 = oracle_target(1.0 + (response_linear(omega, f1.model) - 1.0) * e,
                                  1.0 + (response_circular(omega, f1.model) - 1.0) * e, f1.spec.alpha_rad, f1.attenuation());
    const auto m2 = oracle_target(response_linear(omega, f2.model), response_circular(omega, f2.model), f2.spec.alpha_rad,
                                  f2.attenuation());
    const auto m = mul(m2, m1);
    const double scale = std::max(std::abs(m[0][0]), 1e-3);
    EXPECT_NEAR(std::abs(s.sigma - m[0][0]), 0.0, 1e-12 * scale);
    EXPECT_NEAR(std::abs(s.pi - m[1][0]), 0.0, 1e-12 * scale);
    // ledger reconstruction
    EXPECT_NEAR(std::abs(s.prefactor / 4.0 * s.ledger.sigma_sum() - s.sigma), 0.0, 1e-12 * scale);
    EXPECT_NEAR(std::abs(s.prefactor / 4.0 * s.ledger.pi_sum() - s.pi), 0.0, 1e-12 * scale);
    if (std::abs(s.ledger.P2) > 1e-6) ++p2_nonzero;
  }
  EXPECT_GT(p2_nonzero, 50);
}

TEST(DarkFringeOutput, IdenticalTargetsVanish) {
  const auto f1 = make_foil(TargetSpec{1.0, 33.0, pi / 4});
  const auto f2 = make_foil(TargetSpec{1.0, 33.0, -pi / 4});
  for (double w = -60.0; w <= 60.0; w += 1.1) EXPECT_EQ(dark_fringe_output(f1, f2, w), cplx(0.0));
}

TEST(DarkFringeOutput, AntisymmetricUnderExchange) {
  const auto a = make_foil(TargetSpec{1.89, 32.65, pi / 4});
  const auto b = make_foil(TargetSpec{1.92, 32.69, -pi / 4});
  auto a2 = a, b2 = b;
  a2.spec.alpha_rad = -pi / 4;
  b2.spec.alpha_rad = pi / 4;
  for (double w : {-54.0, -31.2, 0.5, 8.6, 54.1}) {
    const cplx x = dark_fringe_output(a, b, w), y = dark_fringe_output(b2, a2, w);
    EXPECT_NEAR(std::abs(x + y), 0.0, 1e-15);
    EXPECT_NEAR(std::norm(x), std::norm(y), 1e-15);
  }
}

TEST(DarkFringeOutput, ThicknessMismatchMatchesComposition) {
  // thicknesses of the two characterized foils, same field
  const auto f1 = make_foil(TargetSpec{1.89, 33.0, pi / 4});
  const auto f2 = make_foil(TargetSpec{1.92, 33.0, -pi / 4});
  std::vector<cplx> df, out;
  double peak = 0.0;
  for (double w = -60.0; w <= 60.0; w += 0.25) {
    df.push_back(dark_fringe_output(f1, f2, w));
    out.push_back(compose_two_targets(f1, f2, w).pi);
    peak = std::max(peak, std::abs(df.back()));
  }
  EXPECT_GT(peak, 1e-3);
  // the matrix product carries the opposite overall sign
  for (std::size_t i = 0; i < df.size(); ++i) EXPECT_LT(std::abs(df[i] + out[i]), 1e-12 * peak);
}

TEST(DarkFringeOutput, RequiresCanonicalAngles) {
  const auto f1 = make_foil(TargetSpec{1.0, 33.0, 0.2});
  const auto f2 = make_foil(TargetSpec{1.0, 33.0, -pi / 4});
  EXPECT_THROW(dark_fringe_output(f1, f2, 0.0), std::domain_error);
}

TEST(GatedIntensity, SineSquaredLaw) {
  const auto f = make_foil(TargetSpec{1.0, 33.0, pi / 4});
  for (double w : {-31.0, 8.5, 54.5}) {
    EXPECT_EQ(gated_intensity(f, w, 0.0), 0.0);
    EXPECT_NEAR(gated_intensity(f, w, pi) / gated_intensity(f, w, pi / 2), 2.0, 1e-12);
    EXPECT_NEAR(gated_intensity(f, w, two_pi), 0.0, 1e-25);
    for (double phi : {0.3, 1.7, 2.9}) {
      EXPECT_NEAR(gated_intensity(f, w, phi), gated_intensity(f, w, -phi), 1e-16);
      EXPECT_NEAR(gated_intensity(f, w, phi), gated_intensity(f, w, phi + two_pi), 1e-14);
    }
  }
}

TEST(GatedIntensity, ExactWhenCrossPathsAreDropped) {
  // Same T's in both foils: the same-class two-foil terms cancel, the one-foil
  // terms give the gating law; the remaining difference is the L x C cross term.
  TargetSpec t{1.0, 33.0, pi / 4};
  const auto f1 = make_foil(t);
  t.alpha_rad = -pi / 4;
  const auto f2 = make_foil(t);
  for (double w : {-31.5, 8.6, 54.3})
    for (double phi : {0.5, pi / 2, pi}) {
      const auto s = compose_two_targets(f1, f2, w, phi);
      const cplx without_cross = s.prefactor / 4.0 * (s.ledger.P1 + s.ledger.P2);
      EXPECT_NEAR(std::norm(without_cross), gated_intensity(f1, w, phi), 1e-12);
    }
}

TEST(AnalyzerProject, LeakageLimits) {
  PolarizedSpectrum s{uniform_grid(-1.0, 1.0, 3), {1.0, 1.0, 1.0}, {0.0, 0.0, 0.0}};
  s.validate();
  const auto a = analyzer_project(s, 0.0);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a.sigma[i], cplx(0.0));
    EXPECT_EQ(a.pi[i], cplx(0.0));
  }
  const auto b = analyzer_project(s, 1.0);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(b.sigma[i], cplx(1.0));
  EXPECT_THROW(analyzer_project(s, 1.5), std::domain_error);
  EXPECT_THROW(analyzer_project(s, -0.1), std::domain_error);
}

TEST(PolarizedSpectrum, RejectsNonUniformGrid) {
  PolarizedSpectrum s{{0.0, 1.0, 3.0}, std::vector<cplx>(3), std::vector<cplx>(3)};
  EXPECT_THROW(s.validate(), std::invalid_argument);
  PolarizedSpectrum t{{0.0, 1.0}, std::vector<cplx>(3), std::vector<cplx>(3)};
  EXPECT_THROW(t.validate(), std::invalid_argument);
}
