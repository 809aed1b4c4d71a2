#pragma once

// The fractional Laplacian (-Delta)^{k+sigma}: the normalization constant
// C_{n,sigma}, pointwise evaluation through the symmetrized second-difference
// integral, integer Laplacians by analytic closure or finite differences, and
// the commutation and homogeneity checks.

#include <mutex>

#include "qcurv/fields.hpp"
#include "qcurv/quad.hpp"

namespace qcurv {

namespace detail {

// 2 int_0^inf (1 - cos t) t^{-1-2 sigma} dt, the one-dimensional C_{1,sigma}^{-1}.
inline QuadResult inverse_constant_1d(double sigma, const QuadratureSpec& spec) {
  const double a = 1.0 + 2.0 * sigma;
  const double T = 16384.0;  // 2^14; beyond it the cosine part is integrated by parts
  auto g = [a](double t) {
    // 1 - cos t = 2 sin^2(t/2) avoids cancellation for small t
    const double s = std::sin(0.5 * t);
    return 2.0 * s * s * std::pow(t, -a);
  };
  std::vector<double> breaks;
  for (int j = 60; j >= 1; --j) breaks.push_back(std::ldexp(1.0, -j));
  for (double t = 1.0; t < T; t += kPi) breaks.push_back(t);
  breaks.push_back(T);
  AdaptiveOptions opt = adaptive_options(spec, breaks.size());
  QuadResult r = adaptive_gk(g, breaks, opt);
  // int_T^inf t^-a = T^{1-a}/(a-1);  int_T^inf cos t t^-a = -sin T T^-a + a cos T T^{-a-1} + rem,
  // |rem| <= a T^{-a-1}.
  const double tail_one = std::pow(T, 1.0 - a) / (a - 1.0);
  const double tail_cos = -std::sin(T) * std::pow(T, -a) + a * std::cos(T) * std::pow(T, -a - 1.0);
  r.value += tail_one - tail_cos;
  r.tail_bound = a * std::pow(T, -a - 1.0);
  r.err_est += r.tail_bound + std::pow(2.0, -60.0 * (2.0 - 2.0 * sigma)) / (2.0 - 2.0 * sigma);
  return scaled(r, 2.0);
}

// |S^{n-2}| int_0^inf rho^{n-2} (1 + rho^2)^{-(n+2 sigma)/2} d rho
inline QuadResult transverse_factor(int n, double sigma, const QuadratureSpec& spec) {
  if (n == 1) return {1.0, 0.0, true, 0, 0.0};
  const double e = n + 2.0 * sigma;
  auto g = [n, e](double r) { return std::pow(r, n - 2) * std::pow(1.0 + r * r, -0.5 * e); };
  const double T = 1048576.0;  // 2^20
  std::vector<double> breaks{0.0};
  for (double r = std::ldexp(1.0, -20); r < T; r *= 2.0) breaks.push_back(r);
  breaks.push_back(T);
  QuadResult r = adaptive_gk(g, breaks, adaptive_options(spec, breaks.size()));
  // tail <= int_T^inf r^{n-2-e} dr
  const double tail = std::pow(T, n - 1 - e) / (e - n + 1.0);
  r.value += 0.5 * tail;
  r.tail_bound = 0.5 * tail;
  r.err_est += r.tail_bound;
  return scaled(r, unit_sphere_area_in(n - 1));
}

}  // namespace detail

// C_{n,sigma} = (int_{R^n} (1 - cos x_1)/|x|^{n+2 sigma} dx)^{-1}.
//
// The transverse variables integrate out exactly under x' = |x_1| w, so the
// n-dimensional integral is the 1-D one times a radial factor; both are
// integrated numerically. Values are cached per (n, sigma).
inline double normalization_constant(int n, double sigma) {
  require(n >= 1 && n <= 5, ErrorKind::InvalidDimension, "normalization constant supports n in 1..5");
  require(sigma > 0.0 && sigma < 1.0, ErrorKind::InvalidArgument, "sigma must lie in (0,1)");
  static std::mutex mu;
  static std::map<std::pair<int, double>, double> cache;
  {
    std::lock_guard lock(mu);
    if (auto it = cache.find({n, sigma}); it != cache.end()) return it->second;
  }
  QuadratureSpec spec;
  spec.rel_tol = 1e-13;
  spec.abs_tol = 1e-15;
  const double inv = detail::inverse_constant_1d(sigma, spec).value * detail::transverse_factor(n, sigma, spec).value;
  const double c = 1.0 / inv;
  std::lock_guard lock(mu);
  cache[{n, sigma}] = c;
  return c;
}

// ---------------------------------------------------------------------------
// Operator
// ---------------------------------------------------------------------------

struct CentralFD {
  double h = 0.0;  // 0 selects rel_tol^{1/3} times the field's feature scale
};

struct FracLapOperator {
  FracOrder order;
  int dim;
  double constant;  // C_{n,sigma}; 0 when sigma = 0
  std::optional<CentralFD> fd;  // empty: analytic closures

  FracLapOperator(int n, FracOrder s, std::optional<CentralFD> integer_fd = std::nullopt)
      : order(s), dim(n), constant(s.frac_part() > 0.0 ? normalization_constant(n, s.frac_part()) : 0.0),
        fd(integer_fd) {}
  FracLapOperator(int n, double s) : FracLapOperator(n, FracOrder::from_total(s)) {}
};

// Discrete -Delta with step h, one level of Richardson extrapolation:
// (4 L_{h/2} - L_h)/3 is fourth-order accurate.
inline ScalarField fd_neg_lap(const ScalarField& f, double h) {
  auto lap = [fe = f.eval](const Point& x, double step) {
    const int n = x.dim();
    CompensatedSum s;
    const double fx = fe(x);
    for (int i = 0; i < n; ++i) {
      const Point e = Point::axis(n, i, step);
      s += (fe(x + e) - fx) + (fe(x - e) - fx);
    }
    return -s.value() / (step * step);
  };
  ScalarField out = f;
  out.eval = [lap, h](const Point& x) { return (4.0 * lap(x, 0.5 * h) - lap(x, h)) / 3.0; };
  out.neg_lap_powers.clear();
  switch (f.decay.kind) {
    case DecayHint::Kind::PowerDecay: out.decay = DecayHint::power(f.decay.rate + 2.0); break;
    case DecayHint::Kind::LogGrowth: out.decay = DecayHint::power(2.0); break;
    case DecayHint::Kind::PolyGrowth:
      out.decay = f.decay.rate >= 2.0 ? DecayHint::poly_growth(f.decay.rate - 2.0) : DecayHint::power(2.0 - f.decay.rate);
      break;
    default: break;
  }
  return out;
}

struct IntegerLapResult {
  ScalarField field;
  double consistency = 0.0;  // |L_h - L_{h/2}| at the evaluation point (FD only)
};

// (-Delta)^k f as a field, from closures or central differences.
inline IntegerLapResult integer_neg_lap(const FracLapOperator& op, const ScalarField& f, int k, const Point& x,
                                        const QuadratureSpec& spec) {
  if (k == 0) return {f, 0.0};
  if (!op.fd) {
    require(f.has_neg_lap(k), ErrorKind::Precondition,
            "field has no analytic (-Delta)^k closure; use a finite-difference operator");
    return {f.neg_lap_field(k), 0.0};
  }
  const double h = op.fd->h > 0.0 ? op.fd->h : std::cbrt(spec.rel_tol) * f.feature_scale;
  if (h < 1e3 * std::numeric_limits<double>::epsilon() * std::max(1.0, x.norm()))
    throw Error(ErrorKind::InvalidArgument, "finite-difference step underflow");
  IntegerLapResult out{f, 0.0};
  for (int i = 0; i < k; ++i) {
    const ScalarField coarse = fd_neg_lap(out.field, 2.0 * h);
    out.field = fd_neg_lap(out.field, h);
    out.consistency += std::abs(out.field(x) - coarse(x));
  }
  return out;
}

// (-Delta)^{k+sigma} f(x) = -1/2 C_{n,sigma} PV int (g(x+y) + g(x-y) - 2 g(x)) |y|^{-n-2 sigma} dy
// with g = (-Delta)^k f.
inline QuadResult frac_lap(const FracLapOperator& op, const ScalarField& f, const Point& x, const QuadratureSpec& spec) {
  require(f.dim == op.dim && x.dim() == op.dim, ErrorKind::InvalidDimension, "operator/field/point dimension mismatch");
  const int k = op.order.integer_part();
  const double sigma = op.order.frac_part();
  if (sigma > 0.0)
    require(f.smoothness != Smoothness::C0 || k > 0, ErrorKind::Precondition, "pointwise evaluation needs a C^2 field");
  const IntegerLapResult g = integer_neg_lap(op, f, k, x, spec);
  if (sigma == 0.0) {
    QuadResult r;
    r.value = g.field(x);
    r.err_est = g.consistency;
    return r;
  }
  QuadResult r = pv_integral(PVIntegrand::from_field(g.field, x, sigma), spec);
  r = scaled(r, -0.5 * op.constant);
  if (op.fd) r.err_est += g.consistency * op.constant * unit_sphere_area_in(op.dim);
  return r;
}

// (-Delta)^sigma f(x) for 0 < sigma < 1 when f is only known to be C^2 near x
// (for instance a compactly supported field with an edge singularity away from x).
inline QuadResult frac_lap_local(double sigma, const ScalarField& f, const Point& x, const QuadratureSpec& spec) {
  require(x.dim() == f.dim, ErrorKind::InvalidDimension, "point/field dimension mismatch");
  require(!f.support_radius || distance(x, f.center()) < *f.support_radius, ErrorKind::Precondition,
          "x must lie inside the support, away from its edge");
  return scaled(pv_integral(PVIntegrand::from_field(f, x, sigma), spec), -0.5 * normalization_constant(f.dim, sigma));
}

// |(-Delta)^{1/2} d_i f (x) - d_i (-Delta)^{1/2} f (x)|. The inner derivative is a
// central difference of f with step 1e-4; the outer one a five-point stencil with
// step 1e-2 on the computed field.
inline double commutation_residual(const ScalarField& f, int direction, const Point& x, const QuadratureSpec& spec) {
  const int n = f.dim;
  require(direction >= 0 && direction < n, ErrorKind::InvalidArgument, "direction out of range");
  const FracLapOperator op(n, FracOrder(0, 0.5));
  const double hi = 1e-4, ho = 1e-2;
  const Point ei = Point::axis(n, direction, hi);
  ScalarField df = f;
  df.eval = [fe = f.eval, ei, hi](const Point& z) { return (fe(z + ei) - fe(z - ei)) / (2.0 * hi); };
  df.neg_lap_powers.clear();
  if (f.decay.kind == DecayHint::Kind::LogGrowth) df.decay = DecayHint::power(1.0);
  else if (f.decay.kind == DecayHint::Kind::PowerDecay) df.decay = DecayHint::power(f.decay.rate + 1.0);
  const double lhs = frac_lap(op, df, x, spec).value;
  auto F = [&](double t) { return frac_lap(op, f, x + Point::axis(n, direction, t), spec).value; };
  const double rhs = (-F(2 * ho) + 8.0 * F(ho) - 8.0 * F(-ho) + F(-2 * ho)) / (12.0 * ho);
  return std::abs(lhs - rhs);
}

// ---------------------------------------------------------------------------
// Homogeneity of (-Delta)^sigma on log|x| and |x|^-j
// ---------------------------------------------------------------------------

struct ScalingReport {
  int n = 0, j = 0;
  double sigma = 0.0;
  std::vector<double> radii;
  std::vector<double> values;         // (-Delta)^sigma f_j (r e_1)
  std::vector<double> scaled_values;  // values * r^{j + 2 sigma}
  std::vector<double> err_est;
  double reference = 0.0;  // value at e_1
  // max |scaled - reference| / max(|reference|, 1): the unit floor covers
  // parameters where the constant vanishes (f_j the fundamental solution).
  double spread = 0.0;

  nlohmann::json to_json() const {
    return {{"err_est", err_est}, {"j", j},          {"n", n},     {"radii", radii}, {"reference", reference},
            {"scaled_values", scaled_values}, {"sigma", sigma}, {"spread", spread}, {"values", values}};
  }
};

inline ScalingReport scaling_law_check(int n, int j, double sigma, const std::vector<double>& radii,
                                       const QuadratureSpec& spec) {
  require(j >= 0 && j <= n - 1, ErrorKind::InvalidArgument, "j must lie in 0..n-1");
  require(!radii.empty(), ErrorKind::InvalidArgument, "no radii");
  for (double r : radii) require(r > 0.0, ErrorKind::InvalidArgument, "radii must be positive");
  const FracLapOperator op(n, FracOrder(0, sigma));
  const ScalarField f = homogeneous_field(n, j);
  ScalingReport rep;
  rep.n = n;
  rep.j = j;
  rep.sigma = sigma;
  rep.radii = radii;
  rep.reference = frac_lap(op, f, Point::axis(n, 0), spec).value;
  const double p = j + 2.0 * sigma;
  const auto results = parallel_map<QuadResult>(radii.size(), [&](std::size_t i) {
    return radii[i] == 1.0 ? QuadResult{rep.reference} : frac_lap(op, f, Point::axis(n, 0, radii[i]), spec);
  });
  for (std::size_t i = 0; i < radii.size(); ++i) {
    rep.values.push_back(results[i].value);
    rep.err_est.push_back(results[i].err_est);
    rep.scaled_values.push_back(results[i].value * std::pow(radii[i], p));
    rep.spread = std::max(rep.spread, std::abs(rep.scaled_values.back() - rep.reference));
  }
  rep.spread /= std::max(std::abs(rep.reference), 1.0);
  return rep;
}

}  // namespace qcurv
