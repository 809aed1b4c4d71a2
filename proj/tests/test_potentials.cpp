#include <gtest/gtest.h>

#include "qcurv/fields.hpp"
#include "qcurv/potentials.hpp"

using namespace qcurv;

namespace {
constexpr double kCatalan = 0.915965594177219015054603514932384110774;
}

TEST(LogDerivative, SymbolicTermsMatchClosedForms) {
  const Point w{0.7, -1.3, 0.4};
  const double r2 = w.norm2();
  EXPECT_NEAR(LogDerivative(3, {1, 0, 0})(w), w[0] / r2, 1e-15);
  EXPECT_NEAR(LogDerivative(3, {2, 0, 0})(w), 1.0 / r2 - 2.0 * w[0] * w[0] / (r2 * r2), 1e-15);
  EXPECT_NEAR(LogDerivative(3, {1, 1, 0})(w), -2.0 * w[0] * w[1] / (r2 * r2), 1e-15);
  EXPECT_THROW(LogDerivative(3, {0, 0, 0}), Error);
}

TEST(LogDerivative, AgreesWithFiniteDifferences) {
  const Point w{0.9, 0.5, -0.6};
  const double h = 1e-4;
  const LogDerivative d1(3, {0, 1, 0}), d2(3, {0, 1, 1});
  auto f = [](const Point& p) { return std::log(p.norm()); };
  const Point e1 = Point::axis(3, 1, h), e2 = Point::axis(3, 2, h);
  EXPECT_NEAR(d1(w), (f(w + e1) - f(w - e1)) / (2.0 * h), 1e-8);
  EXPECT_NEAR(d2(w), (f(w + e1 + e2) - f(w + e1 - e2) - f(w - e1 + e2) + f(w - e1 - e2)) / (4.0 * h * h), 1e-6);
}

TEST(LogPotential, SphericalDensityInOneDimension) {
  // v(0) = log 2 + 4G/pi and v(x) - v(0) = -log(1 + x^2)
  QuadratureSpec spec;
  const SphericalSolution s(1, 1.0);
  const LogPotential lp(s.density(), spec);
  const double v0 = std::log(2.0) + 4.0 * kCatalan / kPi;
  for (double x : {0.0, 0.5, 3.0, 40.0}) {
    const QuadResult q = log_potential_eval(lp, Point{x});
    EXPECT_NEAR(q.value, v0 - std::log(1.0 + x * x), 1e-9) << x;
  }
}

TEST(LogPotential, DifferenceFromSolutionIsConstant) {
  QuadratureSpec spec;
  spec.rel_tol = 1e-9;
  const SphericalSolution s(3, 1.0);
  const LogPotential lp(s.density(), spec);
  const Point a{0.0, 0.0, 0.0}, b{2.0, 1.0, 0.0};
  const double da = s.u(a) - log_potential_eval(lp, a).value;
  const double db = s.u(b) - log_potential_eval(lp, b).value;
  EXPECT_NEAR(da, db, 1e-6);
}

TEST(LogPotential, GradientMatchesSolution) {
  QuadratureSpec spec;
  spec.rel_tol = 1e-9;
  const SphericalSolution s(3, 1.0);
  const LogPotential lp(s.density(), spec);
  const Point x{1.0, 0.5, 0.0};
  const QuadResult q = log_potential_derivative(lp, x, {1, 0, 0});
  EXPECT_NEAR(q.value, s.grad(x)[0], 1e-8);
  EXPECT_THROW(log_potential_derivative(lp, x, {3, 0, 0}), Error);
}

TEST(FundamentalSolution, CoefficientsComposeToReciprocalGamma) {
  const FundamentalSolution phi{FundamentalSolution::Kind::HalfLap, 3};
  const FundamentalSolution psi{FundamentalSolution::Kind::PolyHarm, 3};
  EXPECT_NEAR(phi.coefficient(), 1.0 / (2.0 * kPi * kPi), 1e-15);
  EXPECT_NEAR(psi.coefficient(), 1.0 / (4.0 * kPi), 1e-15);
  EXPECT_DOUBLE_EQ(phi.exponent(), 2.0);
  EXPECT_NEAR(4.0 * kPi * phi.coefficient() * psi.coefficient() * geom_constants(3).gamma_n, 1.0, 1e-14);
}

TEST(FundamentalSolution, NewtonPotentialOfGaussian) {
  // Psi = 1/(4 pi |x|) and int e^{-|y|^2}/|x-y| dy = pi^{3/2} erf(|x|)/|x|
  QuadratureSpec spec;
  const FundamentalSolution psi{FundamentalSolution::Kind::PolyHarm, 3};
  for (double r : {0.5, 2.0}) {
    const QuadResult q = fundamental_convolve(psi, gaussian(3), Point::axis(3, 0, r), spec);
    EXPECT_NEAR(q.value, std::pow(kPi, 1.5) * std::erf(r) / r / (4.0 * kPi), 1e-9) << r;
  }
}

TEST(ExpIntegrability, JensenBoundDominatesIntegral) {
  QuadratureSpec spec;
  spec.rel_tol = 1e-9;
  const ScalarField f = bump(1, kPi / 2.0, 0.5);
  const ExpIntegrability e = exp_integrability_bound(f, 1.0, 1.0, spec);
  EXPECT_NEAR(e.mass, kPi / 2.0, 1e-9);
  EXPECT_NEAR(e.threshold, 2.0, 1e-9);
  EXPECT_TRUE(e.admissible);
  EXPECT_GE(e.jensen_bound, e.integral);
  const ExpIntegrability at = exp_integrability_bound(f, 2.5, 1.0, spec);
  EXPECT_FALSE(at.admissible);
  EXPECT_TRUE(std::isinf(at.jensen_bound));
  EXPECT_EQ(at.to_json().at("jensen_bound"), "inf");
}

TEST(ExpIntegrability, ZeroDensityGivesBallVolume) {
  const ExpIntegrability e = exp_integrability_bound(zero_field(3), 1.0, 2.0, QuadratureSpec{});
  EXPECT_NEAR(e.integral, 4.0 * kPi / 3.0 * 8.0, 1e-12);
  EXPECT_TRUE(e.admissible);
}

TEST(BrezisMerle, VerdictsOnBothSidesOfThreshold) {
  QuadratureSpec spec;
  const BrezisMerleStudy st = brezis_merle_study(1, kPi / 2.0, {1.0, 3.0}, 1.0, spec);
  ASSERT_EQ(st.runs.size(), 2u);
  EXPECT_EQ(st.runs[0].verdict, BrezisMerleRun::Verdict::Converged);
  EXPECT_EQ(st.runs[1].verdict, BrezisMerleRun::Verdict::Diverged);
  ASSERT_TRUE(st.transition.has_value());
  EXPECT_DOUBLE_EQ(*st.transition, 2.0);
  // the integrals increase as the bump concentrates
  for (const auto& run : st.runs)
    for (std::size_t k = 1; k < run.integrals.size(); ++k) EXPECT_GE(run.integrals[k], run.integrals[k - 1] * (1.0 - 1e-9));
}
