#include <gtest/gtest.h>

#include <cstdlib>

#include "qcurv/fields.hpp"
#include "qcurv/quad.hpp"

using namespace qcurv;

TEST(Rules, GaussLegendreIsExactForPolynomials) {
  const auto& r = gauss_legendre(8);
  for (int p = 0; p <= 15; ++p) {
    double s = 0.0;
    for (std::size_t i = 0; i < r.nodes.size(); ++i) s += r.weights[i] * std::pow(r.nodes[i], p);
    const double exact = p % 2 ? 0.0 : 2.0 / (p + 1);
    EXPECT_NEAR(s, exact, 1e-14) << p;
  }
}

TEST(Rules, SphereRuleMomentsMatchSurfaceArea) {
  for (int d : {2, 3, 4}) {
    const auto& r = sphere_rule(d, 12);
    double s0 = 0.0, s2 = 0.0, s4 = 0.0;
    for (std::size_t i = 0; i < r.nodes.size(); ++i) {
      s0 += r.weights[i];
      s2 += r.weights[i] * r.nodes[i][0] * r.nodes[i][0];
      s4 += r.weights[i] * std::pow(r.nodes[i][0], 4);
    }
    const double area = unit_sphere_area_in(d);
    EXPECT_NEAR(s0, area, 1e-12) << d;
    EXPECT_NEAR(s2, area / d, 1e-12) << d;
    EXPECT_NEAR(s4, 3.0 * area / (d * (d + 2.0)), 1e-12) << d;
  }
}

TEST(Adaptive, HandlesEndpointSingularity) {
  const std::vector<double> breaks = dyadic_breaks(std::ldexp(1.0, -40), 1.0);
  AdaptiveOptions o;
  const QuadResult q = adaptive_gk([](double t) { return 1.0 / std::sqrt(t); }, breaks, o);
  EXPECT_NEAR(q.value, 2.0 - 2.0 * std::ldexp(1.0, -20), 1e-10);
  EXPECT_TRUE(q.converged);
}

TEST(Adaptive, ErrorEstimateCoversTrueError) {
  const std::vector<double> breaks{0.0, 1.0};
  AdaptiveOptions o;
  o.rel_tol = 1e-6;
  const QuadResult q = adaptive_gk([](double t) { return std::cos(30.0 * t); }, breaks, o);
  EXPECT_LE(std::abs(q.value - std::sin(30.0) / 30.0), std::max(q.err_est, 1e-15));
}

TEST(TruncatedIntegral, GaussianMassInSeveralDimensions) {
  QuadratureSpec spec;
  for (int n : {1, 2, 3}) {
    const QuadResult q = truncated_integral(gaussian(n), FullSpace{}, spec);
    EXPECT_NEAR(q.value, std::pow(kPi, 0.5 * n), 1e-9) << n;
    EXPECT_LE(q.err_est, 1e-8);
  }
}

TEST(TruncatedIntegral, SimpleDomains) {
  QuadratureSpec spec;
  const ScalarField one = ScalarField::constant(3, 1.0);
  EXPECT_NEAR(truncated_integral(one, Ball{Point(3), 1.0}, spec).value, 4.0 * kPi / 3.0, 1e-10);
  EXPECT_NEAR(truncated_integral(one, Annulus{Point(3), 1.0, 2.0}, spec).value, 4.0 * kPi / 3.0 * 7.0, 1e-9);
  EXPECT_NEAR(truncated_integral(one, SphereSurface{Point(3), 2.0}, spec).value, 16.0 * kPi, 1e-10);
}

TEST(TruncatedIntegral, PowerDecayTailIsCertified) {
  // int_R (1 + x^2)^-1 = pi, tail ~ |x|^-2
  ScalarField f;
  f.dim = 1;
  f.decay = DecayHint::power(2.0);
  f.eval = [](const Point& x) { return 1.0 / (1.0 + x.norm2()); };
  const QuadResult q = truncated_integral(f, FullSpace{}, QuadratureSpec{});
  EXPECT_NEAR(q.value, kPi, 1e-9);
  EXPECT_GT(q.tail_bound, 0.0);
  EXPECT_LE(std::abs(q.value - kPi), q.err_est + 1e-12);
}

TEST(TruncatedIntegral, MissingDecayHintIsRejected) {
  ScalarField f;
  f.dim = 1;
  f.eval = [](const Point&) { return 1.0; };
  f.decay = DecayHint::none();
  EXPECT_THROW(truncated_integral(f, FullSpace{}, QuadratureSpec{}), Error);
}

TEST(SingularConvolution, NewtonPotentialOfGaussian) {
  // int |x-y|^-1 e^{-|y|^2} dy = pi^{3/2} erf(|x|)/|x|
  QuadratureSpec spec;
  for (double r : {0.0, 0.3, 1.0, 4.0}) {
    const Point x = Point::axis(3, 0, r);
    SingularKernel k;
    k.eval = [x](const Point& y) { return 1.0 / distance(x, y); };
    k.singularity = 1.0;
    k.tail_exponent = 1.0;
    k.tail_coeff = [](double) { return 2.0; };
    const QuadResult q = singular_convolution(k, gaussian(3), x, spec);
    const double exact = r == 0.0 ? 2.0 * kPi : std::pow(kPi, 1.5) * std::erf(r) / r;
    EXPECT_NEAR(q.value, exact, 1e-8) << r;
  }
}

TEST(MonteCarlo, ZeroFoldsIsPointwise) {
  PairKernel k{[](const Point& a, const Point& b) { return distance(a, b); }, 0.0};
  const auto r = nested_mc_integral({k}, Point(3), Point::axis(3, 0, 0.5), Ball{Point(3), 1.0}, 10, 1);
  EXPECT_DOUBLE_EQ(r.value, 0.5);
  EXPECT_EQ(r.stderr_, 0.0);
}

TEST(MonteCarlo, BallVolumeWithinThreeStandardErrors) {
  PairKernel one{[](const Point&, const Point&) { return 1.0; }, 0.0};
  const auto r = nested_mc_integral({one, one}, Point{0.1, 0.0, 0.0}, Point{0.0, 0.2, 0.0}, Ball{Point(3), 1.0}, 40000, 5);
  EXPECT_NEAR(r.value, 4.0 * kPi / 3.0, 3.0 * r.stderr_ + 1e-12);
}

TEST(MonteCarlo, ReproducibleAcrossSeedsAndThreadCounts) {
  PairKernel k{[](const Point& a, const Point& b) { return 1.0 / distance(a, b); }, 1.0};
  const Point x{0.2, 0.0, 0.0}, y{-0.3, 0.1, 0.0};
  const Ball B{Point(3), 1.0};
  ::setenv("QCURV_THREADS", "1", 1);
  const auto a = nested_mc_integral({k, k}, x, y, B, 20000, 11);
  ::setenv("QCURV_THREADS", "3", 1);
  const auto b = nested_mc_integral({k, k}, x, y, B, 20000, 11);
  ::unsetenv("QCURV_THREADS");
  EXPECT_EQ(a.value, b.value);
  EXPECT_EQ(a.stderr_, b.stderr_);
  const auto c = nested_mc_integral({k, k}, x, y, B, 20000, 12);
  EXPECT_NE(a.value, c.value);
}

TEST(SampleStream, IndexedStreamsAreIndependentOfOrder) {
  SampleStream a(42, 7), b(42, 7), c(42, 8);
  const double u = a.uniform();
  EXPECT_EQ(u, b.uniform());
  EXPECT_NE(u, c.uniform());
  EXPECT_GT(u, 0.0);
  EXPECT_LT(u, 1.0);
}

TEST(Budget, StrictModeThrowsWhenToleranceUnmet) {
  QuadratureSpec spec;
  spec.strict = true;
  QuadResult r;
  r.converged = false;
  EXPECT_THROW(enforce_budget(r, spec, "test"), Error);
  spec.strict = false;
  EXPECT_NO_THROW(enforce_budget(r, spec, "test"));
}
