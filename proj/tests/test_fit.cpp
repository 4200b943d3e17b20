#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "darkfringe/fit.hpp"

using namespace darkfringe;

namespace {

const TimeGrid kGrid{0.0, 0.25, 1u << 13, 0.2};

// static target of the measured pair
const TargetSpec kStatic{1.92, 32.69, 0.255 * pi};
const TargetSpec kMoving{1.89, 32.65, 0.750 * pi};

BinnedSpectrum bins_of(const std::vector<double>& I, double total) {
  BinnedSpectrum s;
  s.bin_width_ns = 1.0;
  const std::size_t per = static_cast<std::size_t>(1.0 / kGrid.dt);
  for (std::size_t b = 0; b < 192; ++b) {
    double acc = 0.0;
    for (std::size_t k = b * per; k < (b + 1) * per; ++k) acc += I[k] * kGrid.dt;
    s.t_ns.push_back(static_cast<double>(b));
    s.counts.push_back(acc);
  }
  double sum = 0.0;
  for (std::size_t b = 16; b < 192; ++b) sum += s.counts[b];
  for (double& c : s.counts) c *= total / sum;
  return s;
}

BinnedSpectrum single_target_data(const TargetSpec& t, double total) {
  return bins_of(time_intensity(single_target_time_response(make_foil(t), Channel::sigma_sigma, kGrid)), total);
}

BinnedSpectrum poisson(const BinnedSpectrum& s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  BinnedSpectrum out = s;
  for (double& c : out.counts) c = static_cast<double>(std::poisson_distribution<long long>(c)(rng));
  return out;
}

FitMask all_single() {
  FitMask m;
  m.thickness_um = m.b_field_T = m.alpha_rad = true;
  return m;
}

}  // namespace

TEST(FitTargets, NoiselessSingleTargetRoundTrip) {
  const auto data = single_target_data(kStatic, 1e6);
  const TargetSpec start{1.7, 32.0, 0.23 * pi};
  const auto r = fit_targets(data, start, all_single());
  EXPECT_TRUE(r.converged) << r.message;
  EXPECT_NEAR(r.value("thickness_um"), 1.92, 1e-4);
  EXPECT_NEAR(r.value("b_field_T"), 32.69, 1e-4);
  EXPECT_NEAR(r.value("alpha_rad"), 0.255 * pi, 1e-5);
  // data were normalised to 1e6 counts inside the fit window
  EXPECT_NEAR(std::accumulate(r.expected.begin(), r.expected.end(), 0.0), 1e6, 1.0);
  EXPECT_LT(r.objective, 1e-6);
}

TEST(FitTargets, PoissonDataWithinTwoPercent) {
  const auto data = poisson(single_target_data(kStatic, 1e6), 77);
  const auto r = fit_targets(data, TargetSpec{1.7, 32.0, 0.23 * pi}, all_single());
  EXPECT_NEAR(r.value("thickness_um") / 1.92, 1.0, 0.02);
  EXPECT_NEAR(r.value("b_field_T") / 32.69, 1.0, 0.02);
  EXPECT_NEAR(r.value("alpha_rad") / (0.255 * pi), 1.0, 0.02);
  // errors are finite and the truth lies within a few of them
  EXPECT_LT(std::abs(r.value("thickness_um") - 1.92), 5.0 * r.error("thickness_um"));
  EXPECT_LT(std::abs(r.value("b_field_T") - 32.69), 5.0 * r.error("b_field_T"));
  for (double e : r.errors) EXPECT_TRUE(std::isfinite(e) && e > 0.0);
  // deviance per degree of freedom near one
  const double dof = static_cast<double>(r.used_bins.size() - r.names.size());
  EXPECT_NEAR(r.objective / dof, 1.0, 0.4);
}

TEST(FitTargets, LeastSquaresAlsoRecovers) {
  const auto data = poisson(single_target_data(kStatic, 1e6), 78);
  FitOptions o;
  o.objective = Objective::least_squares;
  const auto r = fit_targets(data, TargetSpec{1.8, 32.3, 0.24 * pi}, all_single(), o);
  EXPECT_NEAR(r.value("thickness_um") / 1.92, 1.0, 0.02);
  EXPECT_NEAR(r.value("b_field_T") / 32.69, 1.0, 0.02);
}

TEST(FitTargets, ScaleOnlyFitOnExactModel) {
  // shape normalised by the fit window, so the true scale is known
  const auto data = single_target_data(kStatic, 5e4);
  for (auto kind : {Objective::poisson, Objective::least_squares}) {
    FitOptions o;
    o.objective = kind;
    const auto r = fit_targets(data, kStatic, FitMask{}, o);
    ASSERT_EQ(r.names.size(), 1u);
    EXPECT_EQ(r.names[0], "scale");
    double model_sum = 0.0;
    for (auto i : r.used_bins) model_sum += data.counts[i];
    const double expected_sum = std::accumulate(r.expected.begin(), r.expected.end(), 0.0);
    EXPECT_NEAR(expected_sum / model_sum, 1.0, 1e-12);
    EXPECT_NEAR(r.objective, 0.0, 1e-12 * model_sum);
  }
}

TEST(FitTargets, TwoTargetSigmaWithinFivePercent) {
  FitOptions o;
  o.model = FitModelKind::two_target;
  o.residual.quadrature_order = 21;
  const TwoTargetPropagator prop(make_foil(kMoving), make_foil(kStatic), kGrid);
  ResidualMotionModel m = o.residual;
  m.sigma_det = 0.302;
  const auto data = poisson(bins_of(prop.averaged(m), 2e5), 5);
  FitMask mask;
  mask.sigma_det = true;
  const auto r = fit_targets(data, kMoving, mask, o, kStatic, 0.15);
  EXPECT_NEAR(r.value("sigma_det") / 0.302, 1.0, 0.05);
  EXPECT_TRUE(std::isfinite(r.error("sigma_det")));
}

TEST(FitTargets, MaskMustMatchModel) {
  const auto data = single_target_data(kStatic, 1e4);
  FitMask bad;
  bad.sigma_det = true;
  EXPECT_THROW(fit_targets(data, kStatic, bad), std::invalid_argument);
  FitOptions two;
  two.model = FitModelKind::two_target;
  FitMask bad2;
  bad2.thickness_um = true;
  EXPECT_THROW(fit_targets(data, kStatic, bad2, two, kMoving), std::invalid_argument);
  FitOptions narrow;
  narrow.prompt_veto_ns = 200.0;
  EXPECT_THROW(fit_targets(data, kStatic, FitMask{}, narrow), std::invalid_argument);
  auto neg = data;
  neg.counts[20] = -1.0;
  EXPECT_THROW(fit_targets(neg, kStatic, FitMask{}), std::invalid_argument);
}

TEST(FitTargets, NonConvergenceReportsBestSoFar) {
  const auto data = single_target_data(kStatic, 1e5);
  FitOptions o;
  o.max_iterations = 2;
  o.restarts = 0;
  try {
    fit_targets(data, TargetSpec{1.5, 31.0, 0.2 * pi}, all_single(), o);
    FAIL() << "expected FitError";
  } catch (const FitError& e) {
    EXPECT_FALSE(e.best.converged);
    EXPECT_EQ(e.best.names.size(), 4u);
    EXPECT_TRUE(std::isfinite(e.best.objective));
    EXPECT_NE(std::string(e.what()).find("did not converge"), std::string::npos);
  }
}

TEST(FitTargets, VetoedBinsAreExcluded) {
  const auto data = single_target_data(kStatic, 1e4);
  const auto r = fit_targets(data, kStatic, FitMask{});
  ASSERT_FALSE(r.used_bins.empty());
  EXPECT_EQ(data.t_ns[r.used_bins.front()], 16.0);
  EXPECT_EQ(data.t_ns[r.used_bins.back()], 191.0);
}
