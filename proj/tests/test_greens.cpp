#include <gtest/gtest.h>

#include <random>

#include "qcurv/greens.hpp"

using namespace qcurv;

namespace {

Point random_in_ball(std::mt19937_64& rng, int n, double r) {
  std::normal_distribution<double> N;
  std::uniform_real_distribution<double> U(0.0, 1.0);
  Point p(n);
  for (int i = 0; i < n; ++i) p[i] = N(rng);
  return p * (r * std::pow(U(rng), 1.0 / n) / p.norm());
}

ScalarField field_of(int n, PointFn f, DecayHint decay) {
  ScalarField s;
  s.dim = n;
  s.eval = std::move(f);
  s.decay = decay;
  return s;
}

}  // namespace

TEST(G1, CenterLimitAndSymmetry) {
  const Point y{0.3, -0.1, 0.2};
  EXPECT_NEAR(g1_eval(1.0, Point(3), y), (1.0 / y.norm() - 1.0) / (4.0 * kPi), 1e-15);
  const Point x{-0.4, 0.2, 0.5};
  EXPECT_NEAR(g1_eval(1.0, x, y), g1_eval(1.0, y, x), 1e-15);
  EXPECT_THROW(g1_eval(1.0, x, Point{1.0, 0.0, 0.0}), Error);
  EXPECT_THROW(g1_eval(1.0, x, x), Error);
  EXPECT_THROW(g1_eval(1.0, Point{0.1}, Point{0.2}), Error);
}

TEST(G1, PositiveAndBoundedByNewtonKernel) {
  // 0 < G1(x, y) <= |x - y|^{2-n} / (n (n-2) |B_1|) on 10^3 random pairs
  std::mt19937_64 rng(2024);
  for (int n : {3, 5}) {
    const double c = 1.0 / (n * (n - 2.0) * unit_ball_volume(n));
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const Point x = random_in_ball(rng, n, 2.0), y = random_in_ball(rng, n, 2.0);
      const double g = g1_eval(2.0, x, y);
      ASSERT_GT(g, 0.0);
      worst = std::max(worst, g * std::pow(distance(x, y), n - 2.0));
    }
    EXPECT_LE(worst, c * (1.0 + 1e-12)) << n;
  }
}

TEST(G1, PoissonKernelClosedForm) {
  const Point x{0.2, 0.3, -0.1};
  const Point y = Point{0.5, -0.5, 0.7071067811865476} * (1.0 / Point{0.5, -0.5, 0.7071067811865476}.norm());
  EXPECT_NEAR(g1_poisson_kernel(1.0, x, y), (1.0 - x.norm2()) / (4.0 * kPi * std::pow(distance(x, y), 3)), 1e-14);
}

TEST(IteratedGreen, ZeroFoldsIsG1) {
  const Point x{0.1, 0.2, 0.0}, y{-0.3, 0.0, 0.4};
  EXPECT_EQ(iterated_green(1.0, 0, x, y, QuadratureSpec{}).value, g1_eval(1.0, x, y));
  EXPECT_THROW(iterated_green(1.0, 1, x, y, QuadratureSpec{}), Error);
}

TEST(IteratedGreen, FiveDimensionalCenterOracle) {
  // int G1(0,z) G1(z,y) dz solves -Delta w = G1(0, .) with w = 0 on the sphere:
  // w(y) = (1/(2|y|) + |y|^2/10 - 3/5) / (8 pi^2)
  QuadratureSpec spec;
  spec.mc_samples = 400000;
  const Point y = Point::axis(5, 0, 0.5);
  const MCResult r = iterated_green(1.0, 0, Point(5), y, spec);
  const double exact = (1.0 / (2.0 * 0.5) + 0.025 - 0.6) / (8.0 * kPi * kPi);
  EXPECT_NEAR(r.value, exact, 4.0 * r.stderr_);
  EXPECT_LT(r.stderr_, 0.02 * exact);
}

TEST(IteratedGreen, DerivativeExponentInThreeDimensions) {
  const auto pairs = shrinking_pairs(Point{0.1, 0.0, 0.0}, Point{0.0, 1.0, 1.0}, {0.2, 0.1, 0.05, 0.025, 0.0125});
  const GreenDerivativeReport rep = green_derivative_bound_check(1.0, 0, pairs, QuadratureSpec{});
  EXPECT_NEAR(rep.fitted_exponent, -2.0, 0.2);
  EXPECT_TRUE(std::isfinite(rep.fitted_constant));
}

TEST(Navier, ReproducesHarmonicPolynomials) {
  QuadratureSpec spec;
  const Point x{0.3, -0.2, 0.4};
  const ScalarField h = field_of(3, [](const Point& p) { return p[0] * p[0] - p[1] * p[1] + p[2]; }, DecayHint::poly_growth(2));
  const QuadResult q = navier_representation(1.0, {h}, x, spec);
  EXPECT_NEAR(q.value, h(x), 1e-10);
  EXPECT_THROW(navier_representation(1.0, {h}, Point{1.0, 0.0, 0.0}, spec), Error);
}

TEST(PoissonHalfLap, NormalizerMatchesGammaFormula) {
  for (int n : {1, 3}) EXPECT_NEAR(PoissonHalfLap::normalizer(n), std::tgamma(0.5 * n) / std::pow(kPi, 0.5 * n + 1.0), 1e-12) << n;
}

TEST(PoissonHalfLap, ConstantAndLinearReproduction) {
  QuadratureSpec spec;
  for (int n : {1, 3}) {
    for (double t : {0.0, 0.5}) {
      const Point x = Point::axis(n, 0, t * 2.0);
      EXPECT_NEAR(poisson_extension_halflap(2.0, ScalarField::constant(n, 1.0), x, spec).value, 1.0, 1e-6) << n << " " << t;
      const ScalarField lin = field_of(n, [](const Point& p) { return p[0]; }, DecayHint::poly_growth(1));
      EXPECT_NEAR(poisson_extension_halflap(2.0, lin, x, spec).value, x[0], 1e-5) << n << " " << t;
    }
    EXPECT_EQ(poisson_extension_halflap(1.0, zero_field(n), Point(n), spec).value, 0.0);
  }
}

TEST(PoissonHalfLap, ScaleCovariance) {
  // int_{|y|>r} P_r(x,y) g(y) dy = int_{|u|>1} P_1(x/r,u) g(r u) du
  QuadratureSpec spec;
  const auto g = field_of(1, [](const Point& p) { return 1.0 / (1.0 + p.norm2()); }, DecayHint::power(2));
  const auto g2 = field_of(1, [](const Point& p) { return 1.0 / (1.0 + 4.0 * p.norm2()); }, DecayHint::power(2));
  const double a = poisson_extension_halflap(2.0, g, Point{0.6}, spec).value;
  const double b = poisson_extension_halflap(1.0, g2, Point{0.3}, spec).value;
  EXPECT_NEAR(a, b, 1e-9);
}

TEST(G2, CalibratedConstantMatchesGammaFormula) {
  // Gamma(n/2) / (2 pi^{n/2 + 1})
  EXPECT_NEAR(g2_calibration(1).constant, 1.0 / (2.0 * kPi), 1e-6);
  EXPECT_NEAR(g2_calibration(3).constant, 1.0 / (4.0 * kPi * kPi), 1e-5);
}

TEST(G2, OneDimensionalTorsion) {
  QuadratureSpec spec;
  for (double x : {0.0, 0.5, -0.8}) {
    const QuadResult h = g2_solve(1.0, ScalarField::constant(1, 1.0), Point{x}, spec);
    EXPECT_NEAR(h.value, std::sqrt(1.0 - x * x), 1e-6) << x;
  }
  EXPECT_EQ(g2_solve(1.0, zero_field(1), Point{0.2}, spec).value, 0.0);
}

TEST(G2, ThreeDimensionalResidualOracle) {
  const ScalarField h = g2_torsion_field(3);
  for (double r : {0.0, 0.3, 0.6}) EXPECT_NEAR(frac_lap_local(0.5, h, Point::axis(3, 0, r), QuadratureSpec{}).value, 1.0, 5e-2) << r;
}

TEST(G2, KernelBoundRatioIsFinite) {
  std::mt19937_64 rng(5);
  std::vector<std::pair<Point, Point>> pairs;
  for (int i = 0; i < 200; ++i) pairs.emplace_back(random_in_ball(rng, 3, 1.0), random_in_ball(rng, 3, 1.0));
  const double c = g2_kernel_bound_ratio(1.0, pairs);
  EXPECT_GT(c, 0.0);
  EXPECT_TRUE(std::isfinite(c));
}

TEST(G2, MaximumPrincipleOnRandomRightHandSides) {
  const MaximumPrincipleReport rep = maximum_principle_check(200, QuadratureSpec{});
  EXPECT_EQ(rep.violations, 0u);
  EXPECT_GE(rep.min_value, 0.0);
}

TEST(BallKernel, CsvGridHasOneRowPerPair) {
  const BallKernel k = BallKernel::g1(3, 1.0);
  const CsvTable t = kernel_grid_csv(k, {Point(3), Point{0.1, 0.0, 0.0}}, {Point{0.0, 0.5, 0.0}});
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.str().substr(0, t.str().find('\n')), "x1,x2,x3,y1,y2,y3,value");
  EXPECT_NEAR(k.eval(Point(3), Point{0.0, 0.5, 0.0}), 1.0 / (4.0 * kPi), 1e-15);
}
