#include <gtest/gtest.h>

#include "qcurv/estimates.hpp"

using namespace qcurv;

TEST(FitDecay, RecoversExactPowerLaw) {
  std::vector<double> r{2.0, 4.0, 8.0, 16.0}, v, e(4, 0.0);
  for (double x : r) v.push_back(3.0 * std::pow(x, -2.5));
  const DecayReport rep = fit_decay(r, v, e, 2.5, 0.1);
  EXPECT_NEAR(rep.fitted_exponent, 2.5, 1e-12);
  EXPECT_NEAR(rep.max_ratio, 3.0, 1e-12);
  EXPECT_TRUE(rep.pass);
  EXPECT_FALSE(fit_decay(r, v, e, 3.5, 0.1).pass);
}

TEST(FitDecay, ZeroDataPassesTrivially) {
  const DecayReport rep = fit_decay({1.0, 10.0}, {0.0, 0.0}, {0.0, 0.0}, 2.0, 0.1);
  EXPECT_TRUE(rep.all_zero);
  EXPECT_TRUE(rep.pass);
}

TEST(LogWindow, RejectsNarrowWindows) {
  const auto w = log_window(5.0, 40.0);
  EXPECT_GE(w.size(), 7u);
  EXPECT_DOUBLE_EQ(w.front(), 5.0);
  EXPECT_NEAR(w.back(), 40.0, 1e-12);
  EXPECT_THROW(log_window(5.0, 20.0), Error);
}

TEST(SchwartzDecay, GaussianHalfLaplacianDecaysAtDimensionPlusOne) {
  QuadratureSpec spec;
  for (int n : {1, 3}) {
    const DecayReport rep = schwartz_decay_check(gaussian(n), FracOrder(0, 0.5), 5.0, 40.0, spec);
    EXPECT_TRUE(rep.pass) << n << " fitted " << rep.fitted_exponent;
    EXPECT_NEAR(rep.fitted_exponent, n + 1.0, 0.1 * (n + 1.0));
  }
}

TEST(SchwartzDecay, HigherOrderKeepsTheFractionalRate) {
  const DecayReport rep = schwartz_decay_check(gaussian(1), FracOrder(1, 0.5), 5.0, 40.0, QuadratureSpec{});
  EXPECT_DOUBLE_EQ(rep.predicted_exponent, 4.0);
  EXPECT_TRUE(rep.pass) << rep.fitted_exponent;
}

TEST(MomentDecay, VanishingMomentsImproveTheRate) {
  QuadratureSpec spec;
  for (int k : {0, 1}) {
    const DecayReport rep = moment_decay_check(k, 0.5, 5.0, 40.0, spec);
    EXPECT_DOUBLE_EQ(rep.predicted_exponent, 2.0 + k + 1.0);
    EXPECT_TRUE(rep.pass) << k << " fitted " << rep.fitted_exponent;
  }
}

TEST(MomentDecay, NonVanishingMomentIsReported) {
  try {
    verify_moments(gaussian(1), 0, QuadratureSpec{});
    FAIL() << "expected MomentVerification";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MomentVerification);
  }
  EXPECT_EQ(verify_moments(moment_vanishing_field(1, 2), 2, QuadratureSpec{}).size(), 3u);
}

TEST(SupportDecay, BumpFarAndNearRegimes) {
  const SupportDecayReport rep =
      support_decay_check(bump(1, 1.0, 0.5), 2, 1.0, 0.5, {0.01, 0.02, 0.05, 0.1, 5, 7, 10, 14, 20, 28, 40}, QuadratureSpec{});
  EXPECT_TRUE(rep.near_bounded);
  EXPECT_TRUE(rep.far.pass) << rep.far.fitted_exponent;
  EXPECT_TRUE(rep.pass);
  EXPECT_THROW(support_decay_check(gaussian(1), 2, 1.0, 0.5, {1.0, 2.0}, QuadratureSpec{}), Error);
}

TEST(Riesz, FullSpaceMatchesClosedForm) {
  // int_{R^3} |z|^-2 |z - y|^-2 dz = pi^3 / |y|
  const RieszReport rep = riesz_composition_check(3, 2.0, 2.0, {0.5, 1.0, 2.0}, QuadratureSpec{});
  EXPECT_EQ(rep.mode, "full_space");
  for (std::size_t i = 0; i < rep.values.size(); ++i)
    EXPECT_NEAR(rep.values[i], std::pow(kPi, 3) / rep.separations[i], 1e-6 * rep.values[i]) << rep.separations[i];
  EXPECT_TRUE(rep.pass);
}

TEST(Riesz, BallGrowsLogarithmically) {
  const RieszReport rep = riesz_composition_check(3, 1.5, 1.5, {1e-1, 1e-2, 1e-3, 1e-4}, QuadratureSpec{});
  EXPECT_EQ(rep.mode, "ball");
  EXPECT_NEAR(rep.slope_target, 4.0 * kPi, 1e-12);
  EXPECT_TRUE(rep.pass) << rep.fitted_slope;
}

TEST(Riesz, PreconditionsAreEnforced) {
  EXPECT_THROW(riesz_composition_check(3, 1.0, 1.0, {0.5, 1.0}, QuadratureSpec{}), Error);
  EXPECT_THROW(riesz_composition_check(3, 3.0, 1.0, {0.5, 1.0}, QuadratureSpec{}), Error);
  EXPECT_THROW(riesz_composition_check(3, 2.0, 2.0, {0.5}, QuadratureSpec{}), Error);
}
