#include <gtest/gtest.h>

#include <random>

#include "qcurv/fields.hpp"
#include "qcurv/fraclap.hpp"

using namespace qcurv;

namespace {

// (1 + r^2)^{-(n+1)/2} is the trace of the Poisson extension
// (1 + t) / ((1 + t)^2 + r^2)^{(n+1)/2}, so its half Laplacian is
// -d/dt at t = 0: (n - r^2) / (1 + r^2)^{(n+3)/2}.
ScalarField poisson_profile(int n) {
  const double a = 0.5 * (n + 1);
  ScalarField f;
  f.dim = n;
  f.decay = DecayHint::power(n + 1.0);
  f.eval = [a](const Point& x) { return std::pow(1.0 + x.norm2(), -a); };
  // -Delta (1+r^2)^-a = 2an (1+r^2)^{-a-1} - 4a(a+1) r^2 (1+r^2)^{-a-2}
  f.neg_lap_powers = {[a, n](const Point& x) {
    const double s = 1.0 + x.norm2();
    return 2.0 * a * n * std::pow(s, -a - 1.0) - 4.0 * a * (a + 1.0) * x.norm2() * std::pow(s, -a - 2.0);
  }};
  return f;
}

double half_lap_oracle(int n, double r) { return (n - r * r) * std::pow(1.0 + r * r, -0.5 * (n + 3)); }

double closed_form_constant(int n, double s) {
  return std::pow(4.0, s) * std::tgamma(0.5 * n + s) / (std::pow(kPi, 0.5 * n) * std::abs(std::tgamma(-s)));
}

}  // namespace

TEST(Normalization, MatchesGammaClosedForm) {
  for (int n = 1; n <= 5; ++n)
    for (double s : {0.25, 0.5, 0.75}) EXPECT_NEAR(normalization_constant(n, s) / closed_form_constant(n, s), 1.0, 1e-9) << n << " " << s;
  EXPECT_NEAR(normalization_constant(1, 0.5), 1.0 / kPi, 1e-12);
  EXPECT_THROW(normalization_constant(1, 1.0), Error);
}

TEST(FracLap, HalfLaplacianPoissonOracle) {
  QuadratureSpec spec;
  for (int n : {1, 3}) {
    const FracLapOperator op(n, FracOrder(0, 0.5));
    for (double r : {0.0, 0.5, 1.7, 6.0}) {
      const QuadResult q = frac_lap(op, poisson_profile(n), Point::axis(n, 0, r), spec);
      EXPECT_NEAR(q.value, half_lap_oracle(n, r), 1e-8) << n << " " << r;
      EXPECT_LE(std::abs(q.value - half_lap_oracle(n, r)), q.err_est + 1e-14) << n << " " << r;
    }
  }
}

TEST(FracLap, OrderThreeHalvesComposesWithIntegerLaplacian) {
  // (-Delta)^{3/2} f = -Delta g with g the half-Laplacian oracle; in n = 3,
  // -Delta g = 12 (r^4 - 10 r^2 + 5) / (1 + r^2)^5.
  QuadratureSpec spec;
  const int n = 3;
  const FracLapOperator op(n, FracOrder(1, 0.5));
  for (double r : {0.0, 0.8, 2.5, 7.0}) {
    const double exact = 12.0 * (std::pow(r, 4) - 10.0 * r * r + 5.0) / std::pow(1.0 + r * r, 5);
    const QuadResult q = frac_lap(op, poisson_profile(n), Point::axis(n, 0, r), spec);
    EXPECT_NEAR(q.value, exact, 1e-8 * std::max(1.0, std::abs(exact))) << r;
    EXPECT_LE(std::abs(q.value - exact), q.err_est + 1e-12) << r;
  }
}

TEST(FracLap, ConstantsAreAnnihilated) {
  const FracLapOperator op(2, FracOrder(0, 0.4));
  EXPECT_NEAR(frac_lap(op, ScalarField::constant(2, 3.0), Point{0.2, 0.1}, QuadratureSpec{}).value, 0.0, 1e-12);
}

TEST(FracLap, DilationProperty) {
  // (-Delta)^s [f(mu .)](x) = mu^{2s} ((-Delta)^s f)(mu x)
  QuadratureSpec spec;
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> U(-1.5, 1.5);
  for (int n : {1, 2}) {
    for (double s : {0.3, 0.5, 0.8}) {
      const FracLapOperator op(n, FracOrder(0, s));
      const ScalarField f = gaussian(n);
      const double mu = 1.7;
      const ScalarField fd = dilated(f, mu);
      Point x(n);
      for (int i = 0; i < n; ++i) x[i] = U(rng);
      const double lhs = frac_lap(op, fd, x, spec).value;
      const double rhs = std::pow(mu, 2.0 * s) * frac_lap(op, f, x * mu, spec).value;
      EXPECT_NEAR(lhs, rhs, 1e-8 * std::max(1.0, std::abs(rhs))) << n << " " << s;
    }
  }
}

TEST(FracLap, TranslationProperty) {
  QuadratureSpec spec;
  const FracLapOperator op(3, FracOrder(0, 0.5));
  const Point h{0.4, -0.2, 1.0};
  const Point x{0.1, 0.3, -0.2};
  const double a = frac_lap(op, translated(gaussian(3), h), x + h, spec).value;
  const double b = frac_lap(op, gaussian(3), x, spec).value;
  EXPECT_NEAR(a, b, 1e-9);
}

TEST(FracLap, CommutesWithDerivatives) {
  EXPECT_LT(commutation_residual(gaussian(1), 0, Point{0.7}, QuadratureSpec{}), 1e-6);
}

TEST(FracLap, DimensionMismatchIsRejected) {
  const FracLapOperator op(3, FracOrder(0, 0.5));
  EXPECT_THROW(frac_lap(op, gaussian(3), Point{0.0, 0.0}, QuadratureSpec{}), Error);
}

TEST(ScalingLaw, HomogeneousFieldsScaleWithExponent) {
  QuadratureSpec spec;
  for (int j : {0, 1, 2}) {
    const ScalingReport r = scaling_law_check(3, j, 0.5, {1.0, 2.0, 4.0}, spec);
    EXPECT_LE(r.spread, 0.02) << j;
    if (j == 1) {
      EXPECT_NEAR(r.values[1] / r.values[0], 0.25, 0.25 * 0.02);
    }
  }
  const ScalingReport self = scaling_law_check(3, 1, 0.5, {1.0}, spec);
  EXPECT_EQ(self.scaled_values[0], self.reference);
  EXPECT_THROW(scaling_law_check(3, 3, 0.5, {1.0}, spec), Error);
}
