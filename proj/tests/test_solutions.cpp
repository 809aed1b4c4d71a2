#include <gtest/gtest.h>

#include "qcurv/solutions.hpp"

using namespace qcurv;

namespace {
constexpr double kCatalan = 0.915965594177219015054603514932384110774;
}

TEST(Residual, SphericalSolutionsSolveTheEquation) {
  QuadratureSpec spec;
  for (int n : {1, 3}) {
    for (double lambda : {1.0, 2.5}) {
      const SphericalSolution s(n, lambda);
      const auto rows = pde_residual(s.field(), {Point(n), Point::axis(n, 0, 0.7), Point::axis(n, n - 1, -3.0)}, spec);
      for (const auto& r : rows) {
        EXPECT_LE(r.residual, 1e-6 * std::max(1.0, r.rhs)) << n << " " << lambda << " " << r.point[0];
        EXPECT_GT(r.rhs, 0.0);
      }
    }
  }
}

TEST(Residual, TranslatedCenterIsStillASolution) {
  const SphericalSolution s(0.8, Point{1.0, -2.0, 0.5});
  for (const auto& r : pde_residual(s.field(), {Point{1.0, -2.0, 0.5}, Point{0.0, 0.0, 0.0}}, QuadratureSpec{}))
    EXPECT_LE(r.residual, 1e-6 * std::max(1.0, r.rhs));
}

TEST(Residual, CsvHasCoordinateColumns) {
  const SphericalSolution s(1, 1.0);
  const CsvTable t = residual_csv(pde_residual(s.field(), {Point{0.0}}, QuadratureSpec{}), 1);
  EXPECT_EQ(t.str().substr(0, t.str().find('\n')), "x1,lhs,rhs,residual,err_est");
}

TEST(VolumeAlpha, SphericalSolutionsHaveUnitAlpha) {
  // V = |S^n| and alpha = 2 for every lambda
  QuadratureSpec spec;
  for (int n : {1, 3}) {
    for (double lambda : {1.0, 3.0}) {
      const VolumeAlpha va = volume_and_alpha(SphericalSolution(n, lambda), spec);
      EXPECT_NEAR(va.V, unit_sphere_area_in(n + 1), 1e-8) << n << " " << lambda;
      EXPECT_NEAR(va.alpha, 2.0, 1e-8);
    }
  }
  EXPECT_NEAR(unit_sphere_area_in(2), 2.0 * kPi, 1e-14);
  EXPECT_NEAR(unit_sphere_area_in(4), 2.0 * kPi * kPi, 1e-13);
}

TEST(Decomposition, OneDimensionalConstantAndExponent) {
  // u - v = log 2 - (log 2 + 4G/pi) = -4G/pi
  QuadratureSpec spec;
  const SphericalSolution s(1, 1.0);
  DecompositionOptions opt;
  opt.exp_nu_decay = s.exp_nu_decay();
  const Decomposition dec = asymptotic_decomposition(s.field(), spec, opt);
  EXPECT_EQ(dec.deg_P, 0);
  EXPECT_NEAR(dec.P.coeff({0}), -4.0 * kCatalan / kPi, 1e-6);
  EXPECT_NEAR(dec.fit.alpha_hat, 2.0, 1e-3);
  EXPECT_NEAR(dec.fit.alpha_predicted, 2.0, 1e-8);
  EXPECT_TRUE(dec.fit.lower_holds);
  EXPECT_TRUE(dec.fit.upper_holds);
  EXPECT_TRUE(dec.derivative_decay.empty());
  const GrowthReport t = growth_criteria(s.field(), dec);
  EXPECT_TRUE(t.laplacian_limits.empty());
  EXPECT_LT(t.sup_quadratic_ratio, 1e-3);
}

TEST(Decomposition, RequiresDecayPromiseOrDensity) {
  const SphericalSolution s(1, 1.0);
  EXPECT_THROW(asymptotic_decomposition(s.field(), QuadratureSpec{}, DecompositionOptions{}), Error);
  DecompositionOptions narrow;
  narrow.exp_nu_decay = s.exp_nu_decay();
  narrow.fit_max = 50.0 * narrow.fit_min;
  EXPECT_THROW(asymptotic_decomposition(s.field(), QuadratureSpec{}, narrow), Error);
}

TEST(Decomposition, SyntheticQuadraticFixture) {
  QuadratureSpec spec;
  spec.rel_tol = 1e-8;
  const SyntheticFixture fx = synthetic_quadratic_fixture(spec);
  DecompositionOptions opt;
  opt.density = fx.density;
  opt.derivatives = false;
  const Decomposition dec = asymptotic_decomposition(fx.u, spec, opt);
  EXPECT_EQ(dec.deg_P, 2);
  EXPECT_NEAR(dec.P.coeff({0, 0, 0}), 5.0, 1e-4);
  for (int i = 0; i < 3; ++i) {
    MultiIndex a(3, 0);
    a[static_cast<std::size_t>(i)] = 2;
    EXPECT_NEAR(dec.P.coeff(a), -1.0, 1e-4);
  }
  EXPECT_NEAR(dec.P.coeff({1, 0, 0}), 0.0, 1e-4);
  EXPECT_NEAR(dec.P.coeff({1, 1, 0}), 0.0, 1e-4);
  const GrowthReport t = growth_criteria(fx.u, dec);
  ASSERT_EQ(t.laplacian_limits.size(), 1u);
  EXPECT_NEAR(t.laplacian_limits[0].limit, -6.0, 1e-2);
  EXPECT_NEAR(t.sup_quadratic_ratio, 1.0, 1e-2);
}

TEST(Growth, SphericalLaplacianVanishesAtInfinity) {
  // for n = 3, Delta u = -2 lambda^2 (3 + s) / (1 + s)^2 -> 0 like r^-2
  const SphericalSolution s(3, 1.0);
  Decomposition dec;
  const GrowthReport t = growth_criteria(s.field(), dec);
  ASSERT_EQ(t.laplacian_limits.size(), 1u);
  EXPECT_NEAR(t.laplacian_limits[0].limit, 0.0, 1e-3);
  for (std::size_t i = 0; i < t.laplacian_limits[0].means.size(); ++i) EXPECT_LT(t.laplacian_limits[0].means[i], 0.0);
}
