#pragma once

// Built-in fields with analytic integer-Laplacian closures: spherical
// solutions, radial polynomial-times-Gaussian fields, compact polynomial
// bumps, moment-vanishing Hermite fields and the homogeneous fields
// log|x| and |x|^-j.

#include "qcurv/core.hpp"

namespace qcurv {

// ---------------------------------------------------------------------------
// Radial polynomial in t = |x - c|^2 times exp(-a t)
// ---------------------------------------------------------------------------

struct RadialGaussPoly {
  std::vector<double> p;  // coefficients in t, lowest first
  double a = 1.0;

  double eval_t(double t) const {
    double s = 0.0;
    for (std::size_t i = p.size(); i-- > 0;) s = s * t + p[i];
    return s * std::exp(-a * t);
  }

  // -Delta in R^n, using Delta g(t) = 4 t g'' + 2 n g' for radial g.
  RadialGaussPoly neg_lap(int n) const {
    const std::size_t m = p.size();
    std::vector<double> d1(m + 1, 0.0), d2(m + 1, 0.0), q(m + 2, 0.0);
    for (std::size_t i = 1; i < m; ++i) d1[i - 1] = i * p[i];
    for (std::size_t i = 2; i < m; ++i) d2[i - 2] = i * (i - 1.0) * p[i];
    // 4t(p'' - 2a p' + a^2 p) + 2n(p' - a p)
    for (std::size_t i = 0; i < m; ++i) {
      q[i + 1] += 4.0 * (d2[i] - 2.0 * a * d1[i] + a * a * p[i]);
      q[i] += 2.0 * n * (d1[i] - a * p[i]);
    }
    while (q.size() > 1 && q.back() == 0.0) q.pop_back();
    for (auto& c : q) c = -c;
    return {q, a};
  }
};

// c-centred field p(|x-c|^2) exp(-a|x-c|^2) with closures (-Delta)^k, k <= closures.
inline ScalarField radial_gauss_field(int n, const RadialGaussPoly& g, const Point& c, int closures = 3) {
  ScalarField f;
  f.dim = n;
  f.smoothness = Smoothness::Smooth;
  f.decay = DecayHint::schwartz();
  f.feature_center = c;
  f.feature_scale = 1.0 / std::sqrt(g.a);
  f.eval = [g, c](const Point& x) { return g.eval_t((x - c).norm2()); };
  RadialGaussPoly cur = g;
  for (int k = 1; k <= closures; ++k) {
    cur = cur.neg_lap(n);
    f.neg_lap_powers.push_back([cur, c](const Point& x) { return cur.eval_t((x - c).norm2()); });
  }
  return f;
}

// exp(-a |x - c|^2)
inline ScalarField gaussian(int n, double a = 1.0, std::optional<Point> center = std::nullopt) {
  return radial_gauss_field(n, RadialGaussPoly{{1.0}, a}, center.value_or(Point(n)));
}

// ---------------------------------------------------------------------------
// Spherical solutions u = log(2 lambda / (1 + lambda^2 |x - x0|^2))
// ---------------------------------------------------------------------------

class SphericalSolution {
 public:
  SphericalSolution(double lambda, const Point& center) : lambda_(lambda), center_(center) {
    require(lambda > 0.0, ErrorKind::InvalidArgument, "lambda must be positive");
  }
  SphericalSolution(int n, double lambda) : SphericalSolution(lambda, Point(n)) {}

  double lambda() const { return lambda_; }
  const Point& center() const { return center_; }
  int dim() const { return center_.dim(); }

  double s(const Point& x) const { return lambda_ * lambda_ * (x - center_).norm2(); }
  double u(const Point& x) const { return std::log(2.0 * lambda_ / (1.0 + s(x))); }
  // e^{nu} = (2 lambda / (1 + s))^n
  double exp_nu(const Point& x) const { return std::pow(2.0 * lambda_ / (1.0 + s(x)), dim()); }
  Point grad(const Point& x) const { return (x - center_) * (-2.0 * lambda_ * lambda_ / (1.0 + s(x))); }
  double neg_lap(const Point& x) const {
    const int n = dim();
    const double t = s(x), l2 = lambda_ * lambda_;
    return 2.0 * l2 * (n + (n - 2.0) * t) / ((1.0 + t) * (1.0 + t));
  }
  double bilap(const Point& x) const {
    const double n = dim();
    const double t = s(x), l4 = std::pow(lambda_, 4);
    const double num = (n * n - 6 * n + 8) * t * t + (2 * n * n - 4 * n - 16) * t + (n * n + 2 * n);
    return 4.0 * l4 * num / std::pow(1.0 + t, 4);
  }

  ScalarField field() const {
    ScalarField f;
    f.dim = dim();
    f.decay = DecayHint::log_growth();
    f.feature_center = center_;
    f.feature_scale = 1.0 / lambda_;
    const SphericalSolution self = *this;
    f.eval = [self](const Point& x) { return self.u(x); };
    f.neg_lap_powers = {[self](const Point& x) { return self.neg_lap(x); },
                        [self](const Point& x) { return self.bilap(x); }};
    return f;
  }

  // (n-1)! e^{nu}, the density of the log-potential.
  ScalarField density() const {
    ScalarField f;
    f.dim = dim();
    f.decay = DecayHint::power(2.0 * dim());
    f.feature_center = center_;
    f.feature_scale = 1.0 / lambda_;
    const SphericalSolution self = *this;
    const double c = factorial(dim() - 1);
    f.eval = [self, c](const Point& x) { return c * self.exp_nu(x); };
    return f;
  }

  // Decay of e^{nu}; used to certify the volume integral.
  DecayHint exp_nu_decay() const { return DecayHint::power(2.0 * dim()); }

 private:
  double lambda_;
  Point center_;
};

// ---------------------------------------------------------------------------
// Compact polynomial bump A (1 - |x-c|^2/rho^2)^3, exactly C^2
// ---------------------------------------------------------------------------

inline double bump_profile_mass(int n, double rho) {
  // |S^{n-1}| rho^n int_0^1 (1-t^2)^3 t^{n-1} dt
  const double beta = 0.5 * std::tgamma(0.5 * n) * 6.0 / std::tgamma(0.5 * n + 4.0);
  return unit_sphere_area_in(n) * std::pow(rho, n) * beta;
}

inline ScalarField bump(int n, double mass, double rho = 1.0, std::optional<Point> center = std::nullopt) {
  require(rho > 0.0, ErrorKind::InvalidArgument, "bump radius must be positive");
  const Point c = center.value_or(Point(n));
  const double A = mass / bump_profile_mass(n, rho);
  const double r2 = rho * rho;
  ScalarField f;
  f.dim = n;
  f.smoothness = Smoothness::C2;
  f.decay = DecayHint::schwartz();
  f.feature_center = c;
  f.feature_scale = rho;
  f.support_radius = rho;
  f.eval = [A, c, r2](const Point& x) {
    const double w = 1.0 - (x - c).norm2() / r2;
    return w > 0.0 ? A * w * w * w : 0.0;
  };
  f.neg_lap_powers = {[A, c, r2, n](const Point& x) {
    const double t = (x - c).norm2();
    const double w = 1.0 - t / r2;
    if (w <= 0.0) return 0.0;
    const double p1 = -3.0 / r2 * w * w, p2 = 6.0 / (r2 * r2) * w;
    return -A * (4.0 * t * p2 + 2.0 * n * p1);
  }};
  return f;
}

// ---------------------------------------------------------------------------
// Moment-vanishing family p_{k+1}(x_1) exp(-|x|^2)
// ---------------------------------------------------------------------------

// Monic polynomial of degree k+1 orthogonal to 1, x, ..., x^k under exp(-x^2),
// built by Gram-Schmidt from exact Gaussian moments. Coefficients lowest first.
inline std::vector<double> gaussian_orthogonal_poly(int degree) {
  require(degree >= 0, ErrorKind::InvalidArgument, "degree must be nonnegative");
  auto moment = [](int m) { return m % 2 ? 0.0 : std::tgamma(0.5 * (m + 1)); };
  auto inner = [&](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
      for (std::size_t j = 0; j < b.size(); ++j) s += a[i] * b[j] * moment(static_cast<int>(i + j));
    return s;
  };
  std::vector<std::vector<double>> basis;
  for (int d = 0; d <= degree; ++d) {
    std::vector<double> q(static_cast<std::size_t>(d + 1), 0.0);
    q.back() = 1.0;
    for (const auto& b : basis) {
      const double c = inner(q, b) / inner(b, b);
      for (std::size_t i = 0; i < b.size(); ++i) q[i] -= c * b[i];
    }
    basis.push_back(q);
  }
  return basis.back();
}

// Moments of order <= k vanish (membership in S_k). k = -1 gives the plain Gaussian.
inline ScalarField moment_vanishing_field(int n, int k) {
  require(k >= -1, ErrorKind::InvalidArgument, "moment order must be >= -1");
  const auto p = gaussian_orthogonal_poly(k + 1);
  ScalarField f;
  f.dim = n;
  f.decay = DecayHint::schwartz();
  f.feature_center = Point(n);
  f.eval = [p](const Point& x) {
    double s = 0.0;
    for (std::size_t i = p.size(); i-- > 0;) s = s * x[0] + p[i];
    return s * std::exp(-x.norm2());
  };
  return f;
}

// ---------------------------------------------------------------------------
// Homogeneous fields f_0 = log|x|, f_j = |x|^-j
// ---------------------------------------------------------------------------

inline ScalarField homogeneous_field(int n, int j) {
  require(j >= 0 && j <= n - 1, ErrorKind::InvalidArgument, "j must lie in 0..n-1");
  ScalarField f;
  f.dim = n;
  f.feature_center = Point(n);
  f.feature_scale = 0.25;
  if (j == 0) {
    f.eval = [](const Point& x) { return std::log(x.norm()); };
    f.decay = DecayHint::log_growth();
  } else {
    f.eval = [j](const Point& x) { return std::pow(x.norm(), -j); };
    f.decay = DecayHint::power(j);
  }
  return f;
}

inline ScalarField zero_field(int n) {
  ScalarField f = ScalarField::constant(n, 0.0);
  f.decay = DecayHint::schwartz();
  return f;
}

}  // namespace qcurv
