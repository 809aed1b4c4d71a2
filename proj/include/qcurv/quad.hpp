#pragma once

// Quadrature engines: adaptive radial Gauss-Kronrod on dyadic shells times a
// sphere rule, the symmetrized principal-value integral with a far-field
// split, truncated full-space integrals with certified tails, ray quadrature
// over balls seen from an interior point, and seeded Monte Carlo for nested
// kernel chains.

#include <cstdio>
#include <limits>
#include <type_traits>
#include <span>
#include <variant>

#include "qcurv/core.hpp"
#include "qcurv/parallel.hpp"
#include "qcurv/rules.hpp"

namespace qcurv {

struct QuadResult {
  double value = 0.0;
  double err_est = 0.0;
  bool converged = true;
  std::size_t evaluations = 0;
  double tail_bound = 0.0;  // included in err_est
};

inline QuadResult operator+(QuadResult a, const QuadResult& b) {
  a.value += b.value;
  a.err_est += b.err_est;
  a.converged = a.converged && b.converged;
  a.evaluations += b.evaluations;
  a.tail_bound += b.tail_bound;
  return a;
}
inline QuadResult scaled(QuadResult a, double s) {
  a.value *= s;
  a.err_est *= std::abs(s);
  a.tail_bound *= std::abs(s);
  return a;
}

struct TailBound {
  enum class Method { PowerDecayFormula, UserSupplied, None };
  double radius = 0.0;
  double bound = 0.0;
  Method method = Method::None;

  static TailBound user(double radius, double bound) {
    require(bound >= 0.0, ErrorKind::InvalidArgument, "tail bound must be nonnegative");
    return {radius, bound, Method::UserSupplied};
  }
};

// Smooth radial cutoff: 1 on [0, rho/2], 0 on [rho, inf), C^3 septic blend between.
inline double smooth_cutoff(double r, double rho) {
  const double t = (r - 0.5 * rho) / (0.5 * rho);
  if (t <= 0.0) return 1.0;
  if (t >= 1.0) return 0.0;
  const double t2 = t * t;
  return 1.0 - t2 * t2 * (35.0 - 84.0 * t + 70.0 * t2 - 20.0 * t2 * t);
}

// ---------------------------------------------------------------------------
// Radial breakpoints
// ---------------------------------------------------------------------------

// inner, 2 inner, 4 inner, ..., outer (last shell may be shorter).
inline std::vector<double> dyadic_breaks(double inner, double outer) {
  require(inner > 0.0 && outer > inner, ErrorKind::InvalidArgument, "dyadic breaks need 0 < inner < outer");
  std::vector<double> b;
  for (double r = inner; r < outer * (1.0 - 1e-12); r *= 2.0) b.push_back(r);
  b.push_back(outer);
  return b;
}

// Adds each point p and a geometric grading p(1 +- 2^-k), k = 1..levels, then
// sorts and drops near-duplicates. Points outside (front, back) are ignored.
inline std::vector<double> with_breakpoints(std::vector<double> breaks, std::span<const double> points, int levels = 12) {
  const double lo = breaks.front(), hi = breaks.back();
  for (double p : points) {
    if (!(p > lo && p < hi)) continue;
    breaks.push_back(p);
    for (int k = 1; k <= levels; ++k) {
      const double d = p * std::ldexp(1.0, -k);
      if (p - d > lo) breaks.push_back(p - d);
      if (p + d < hi) breaks.push_back(p + d);
    }
  }
  std::sort(breaks.begin(), breaks.end());
  std::vector<double> out;
  for (double r : breaks)
    if (out.empty() || r > out.back() * (1.0 + 1e-13)) out.push_back(r);
  return out;
}

// ---------------------------------------------------------------------------
// Globally adaptive Gauss-Kronrod over a list of pieces
// ---------------------------------------------------------------------------

namespace detail {

struct Piece {
  double a = 0.0, b = 0.0, value = 0.0, err = 0.0, abs_value = 0.0;
  int depth = 0;
};

template <class G>
Piece gk15_piece(G& g, double a, double b, int depth) {
  const auto& gk = gauss_kronrod15();
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  std::array<double, 15> fv{};
  double k = 0.0, gs = 0.0, kabs = 0.0, mag = 0.0;
  for (std::size_t i = 0; i < 15; ++i) {
    // g may return (value, magnitude) when its value is itself a cancelling sum
    const auto gi = g(c + h * gk.nodes[i]);
    double m;
    if constexpr (std::is_same_v<std::decay_t<decltype(gi)>, std::pair<double, double>>) {
      fv[i] = gi.first;
      m = gi.second;
    } else {
      fv[i] = gi;
      m = std::abs(gi);
    }
    k += gk.kronrod[i] * fv[i];
    gs += gk.gauss[i] * fv[i];
    kabs += gk.kronrod[i] * std::abs(fv[i]);
    mag += gk.kronrod[i] * m;
  }
  const double mean = 0.5 * k;
  double asc = 0.0;
  for (std::size_t i = 0; i < 15; ++i) asc += gk.kronrod[i] * std::abs(fv[i] - mean);
  k *= h;
  kabs *= std::abs(h);
  asc *= std::abs(h);
  double err = std::abs(k - gs * h);
  // QUADPACK error scaling.
  if (asc != 0.0 && err != 0.0) err = asc * std::min(1.0, std::pow(200.0 * err / asc, 1.5));
  constexpr double eps = std::numeric_limits<double>::epsilon();
  if (kabs > std::numeric_limits<double>::min() / (50.0 * eps)) err = std::max(50.0 * eps * kabs, err);
  if (!std::isfinite(k)) err = std::numeric_limits<double>::infinity();
  return {a, b, k, err, mag * std::abs(h), depth};
}

}  // namespace detail

struct AdaptiveOptions {
  double abs_tol = 1e-13;
  double rel_tol = 1e-10;
  int max_depth = 18;
  std::size_t max_bisections = 4000;
};

// Integrates g over [breaks[0], breaks.back()] starting from the given pieces
// and bisecting the piece with the largest error estimate until the total
// estimate meets max(abs_tol, rel_tol |I|) or the budget is spent.
template <class G>
QuadResult adaptive_gk(G&& g, std::span<const double> breaks, const AdaptiveOptions& opt) {
  require(breaks.size() >= 2, ErrorKind::InvalidArgument, "need at least one piece");
  std::vector<detail::Piece> pieces;
  pieces.reserve(breaks.size() + 64);
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) pieces.push_back(detail::gk15_piece(g, breaks[i], breaks[i + 1], 0));
  std::size_t evals = 15 * pieces.size();

  // The relative tolerance is taken against int |g|, so integrals that
  // cancel to ~0 do not exhaust the budget chasing a vanishing target.
  auto totals = [&] {
    CompensatedSum v, e, m;
    for (const auto& p : pieces) {
      v += p.value;
      e += p.err;
      m += p.abs_value;
    }
    return std::tuple{v.value(), e.value(), m.value()};
  };
  auto [value, err, mag] = totals();
  std::size_t bisections = 0;
  while (err > std::max(opt.abs_tol, opt.rel_tol * mag) && bisections < opt.max_bisections) {
    std::size_t worst = pieces.size();
    double worst_err = -1.0;
    for (std::size_t i = 0; i < pieces.size(); ++i)
      if (pieces[i].depth < opt.max_depth && pieces[i].err > worst_err) {
        worst_err = pieces[i].err;
        worst = i;
      }
    if (worst == pieces.size() || !(worst_err > 0.0)) break;
    const detail::Piece p = pieces[worst];
    const double mid = 0.5 * (p.a + p.b);
    pieces[worst] = detail::gk15_piece(g, p.a, mid, p.depth + 1);
    pieces.push_back(detail::gk15_piece(g, mid, p.b, p.depth + 1));
    evals += 30;
    ++bisections;
    std::tie(value, err, mag) = totals();
  }
  std::sort(pieces.begin(), pieces.end(), [](const auto& x, const auto& y) { return x.a < y.a; });
  auto [v2, e2, m2] = totals();
  QuadResult r;
  r.value = v2;
  r.err_est = e2;
  r.converged = e2 <= std::max(opt.abs_tol, opt.rel_tol * m2);
  r.evaluations = evals;
  return r;
}

inline AdaptiveOptions adaptive_options(const QuadratureSpec& spec, std::size_t pieces) {
  AdaptiveOptions o;
  o.abs_tol = spec.abs_tol;
  o.rel_tol = spec.rel_tol;
  o.max_depth = spec.max_refine_depth;
  o.max_bisections = std::max<std::size_t>(2000, 32 * pieces);
  return o;
}

inline void enforce_budget(const QuadResult& r, const QuadratureSpec& spec, const char* what) {
  if (spec.strict && !r.converged)
    throw Error(ErrorKind::BudgetExhausted, std::string(what) + ": subdivision budget exhausted before tolerance met");
}

// ---------------------------------------------------------------------------
// Spherical shells about an origin
// ---------------------------------------------------------------------------

// Integrates F(z) over breaks[0] < |z| < breaks.back(), z the displacement
// from the shell origin: adaptive Gauss-Kronrod in the radius, a fixed sphere
// rule in angle. The angular error is estimated at each initial piece by
// comparing against a sphere rule of two thirds the order.
class ShellQuadrature {
 public:
  // For each shell radius, the polar cuts t = <w, pole> at which the
  // integrand has a sharp angular feature; empty means none.
  using PolarBreaks = std::function<std::vector<double>(double)>;

  ShellQuadrature(int n, const Point& pole, int order, PolarBreaks polar = {})
      : n_(n),
        order_(order),
        pole_(pole.norm() > 0.0 ? pole : Point::axis(n, 0)),
        polar_(std::move(polar)),
        hi_(oriented_sphere_rule(n, order, pole)),
        lo_(oriented_sphere_rule(n, std::max(1, (2 * order) / 3), pole)) {}

  int dim() const { return n_; }
  const SphereRule& rule() const { return hi_; }

  // (sum w_k f(r w_k), sum w_k |f(r w_k)|)
  template <class F>
  std::pair<double, double> sphere_sum(F& f, double r, const SphereRule& rule) const {
    double s = 0.0, a = 0.0;
    for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
      const double v = rule.weights[k] * f(rule.nodes[k] * r);
      s += v;
      a += std::abs(v);
    }
    return {s, a};
  }

  template <class F>
  std::pair<double, double> sphere_sum_at(F& f, double r, bool high) const {
    if (n_ > 1 && polar_) {
      auto cuts = polar_(r);
      if (!cuts.empty()) {
        const int m = high ? order_ : std::max(2, (2 * order_) / 3);
        return sphere_sum(f, r, banded_sphere_rule(n_, m, pole_, std::move(cuts)));
      }
    }
    return sphere_sum(f, r, high ? hi_ : lo_);
  }

  template <class F>
  QuadResult integrate(F&& f, std::span<const double> breaks, const QuadratureSpec& spec) const {
    auto radial = [&](double r) {
      const double w = std::pow(r, n_ - 1);
      const auto [s, a] = sphere_sum_at(f, r, true);
      return std::pair{w * s, w * a};
    };
    QuadResult res = adaptive_gk(radial, breaks, adaptive_options(spec, breaks.size()));
    res.evaluations *= hi_.nodes.size();
    if (n_ > 1) {
      CompensatedSum ang;
      for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
        const double a = breaks[i], b = breaks[i + 1];
        const double m = 0.5 * (a + b);
        ang += std::abs(sphere_sum_at(f, m, true).first - sphere_sum_at(f, m, false).first) * std::pow(m, n_ - 1) * (b - a);
      }
      res.err_est += ang.value();
      res.evaluations += (breaks.size() - 1) * (hi_.nodes.size() + lo_.nodes.size());
    }
    return res;
  }

 private:
  int n_;
  int order_;
  Point pole_;
  PolarBreaks polar_;
  SphereRule hi_, lo_;
};

// Polar cuts on the sphere |z - c| = r (pole toward x, |x - c| = d) where
// |z - x| crosses each of the given distances.
inline std::vector<double> distance_cuts(double r, double d, std::initializer_list<double> distances) {
  std::vector<double> t;
  for (double s : distances) {
    const double c = (r * r + d * d - s * s) / (2.0 * r * d);
    if (c > -1.0 && c < 1.0) t.push_back(c);
  }
  return t;
}

// ---------------------------------------------------------------------------
// Tail certification
// ---------------------------------------------------------------------------

// Bound on  int_{|w| > radius} |f(center + w)| |w|^{-weight_exponent} dw  from
// the field's decay hint. The hint's constant is estimated by sampling f on
// the sphere |w| = radius and multiplying by a safety factor 4.
inline TailBound weighted_tail_bound(const ScalarField& f, const Point& center, double radius, double weight_exponent) {
  const int n = f.dim;
  const double area = unit_sphere_area_in(n);
  const SphereRule& rule = sphere_rule(n, 6);
  double sup = 0.0;
  for (const auto& w : rule.nodes) sup = std::max(sup, std::abs(f(center + w * radius)));
  if (!std::isfinite(sup)) throw Error(ErrorKind::TailNotCertified, "field not finite on the truncation sphere");
  constexpr double safety = 4.0;
  const double e = weight_exponent;
  TailBound t;
  t.radius = radius;
  t.method = TailBound::Method::PowerDecayFormula;
  switch (f.decay.kind) {
    case DecayHint::Kind::Schwartz:
    case DecayHint::Kind::PowerDecay: {
      const double r = f.decay.kind == DecayHint::Kind::Schwartz ? 2.0 * n + 2.0 : f.decay.rate;
      if (r + e <= n) throw Error(ErrorKind::TailNotCertified, "decay too slow for a finite tail");
      const double c = safety * sup * std::pow(1.0 + radius, r);
      t.bound = c * area * std::pow(radius, n - r - e) / (r + e - n);
      break;
    }
    case DecayHint::Kind::PolyGrowth: {
      const double d = f.decay.rate;
      if (e <= n + d) throw Error(ErrorKind::TailNotCertified, "growth too fast for a finite tail");
      const double c = safety * std::max(sup, 1e-300) / std::pow(1.0 + radius, d);
      t.bound = c * area * std::pow(2.0, d) * std::pow(radius, d + n - e) / (e - n - d);
      break;
    }
    case DecayHint::Kind::LogGrowth: {
      const double a = e - n;
      if (a <= 0.0) throw Error(ErrorKind::TailNotCertified, "log growth needs a decaying weight");
      const double c = safety * sup / std::log(2.0 + radius);
      t.bound = c * area * std::pow(radius, -a) * (std::log(3.0 * radius) / a + 1.0 / (a * a));
      break;
    }
    case DecayHint::Kind::None:
      throw Error(ErrorKind::TailNotCertified, "field has no decay hint; tail cannot be certified");
  }
  return t;
}

// ---------------------------------------------------------------------------
// Principal-value integral of the symmetrized second difference
// ---------------------------------------------------------------------------

struct PVIntegrand {
  Point center;                   // x, the singular point
  PointFn second_difference;      // y -> f(x+y) + f(x-y) - 2 f(x)
  double singular_exponent = 0.0; // n + 2 sigma
  std::optional<ScalarField> field;

  static PVIntegrand from_field(const ScalarField& f, const Point& x, double sigma) {
    require(sigma > 0.0 && sigma < 1.0, ErrorKind::InvalidArgument, "sigma must lie in (0,1)");
    require(x.dim() == f.dim, ErrorKind::InvalidDimension, "point/field dimension mismatch");
    const double fx = f(x);
    PVIntegrand p;
    p.center = x;
    p.second_difference = [fe = f.eval, x, fx](const Point& y) { return fe(x + y) + fe(x - y) - 2.0 * fx; };
    p.singular_exponent = f.dim + 2.0 * sigma;
    p.field = f;
    return p;
  }
};

// PV int_{R^n} second_difference(y) |y|^{-(n+2 sigma)} dy.
//
// Dyadic shells [2^-j R, 2^{-j+1} R] about x, R the truncation radius, down
// to rho_core = max(2^-max_subdivisions R, 1e-4 feature_scale). Inside rho_core
// the integrand is replaced by its quadratic Taylor term. Beyond R the second
// difference is frozen at its sphere mean at radius R; the f(x +- y) parts
// are bounded from the decay hint and added to err_est.
//
// When |x - c| >= feature_scale for the field's center c (the origin unless declared),
// the integral is split with a smooth cutoff of radius rho = |x - c|/2: the
// symmetrized form over |y| < rho about x, and the regular far part
// 2 int f(z)(1 - chi(|z-x|)) |z-x|^{-n-2 sigma} dz in shells about c.
inline QuadResult pv_integral(const PVIntegrand& in, const QuadratureSpec& spec,
                              std::optional<TailBound> tail_override = std::nullopt) {
  spec.validate();
  const Point& x = in.center;
  const int n = x.dim();
  const double e = in.singular_exponent;
  const double two_sigma = e - n;
  require(two_sigma > 0.0 && two_sigma < 2.0, ErrorKind::InvalidArgument, "singular exponent must lie in (n, n+2)");
  const double R = spec.truncation_radius;
  const double rho_min = std::ldexp(R, -spec.max_subdivisions);
  const double area = unit_sphere_area_in(n);
  const int order = spec.angular_order_for(n);

  if (!in.field && !tail_override)
    throw Error(ErrorKind::TailNotCertified, "PV integrand without a source field needs a user-supplied tail bound");

  // Inside rho_core the second difference is replaced by its quadratic Taylor
  // term, whose sphere mean is exact for any rule of degree >= 2. Shells below
  // ~1e-4 of the feature scale would only integrate cancellation noise, which
  // grows like eps |f| rho^{-2 sigma}.
  const double scale = in.field ? in.field->feature_scale : 1.0;
  const double rho_core = std::min(std::max(rho_min, 1e-4 * scale), 0.25 * R);
  auto core = [&](const auto& sd) {
    const SphereRule& rule = sphere_rule(n, 4);
    auto curvature = [&](double r) {
      CompensatedSum m, w;
      for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
        m += rule.weights[k] * sd(rule.nodes[k] * r);
        w += rule.weights[k];
      }
      return m.value() / (w.value() * r * r);
    };
    const double c1 = curvature(rho_core), c2 = curvature(0.5 * rho_core);
    const double vol = area * std::pow(rho_core, 2.0 - two_sigma) / (2.0 - two_sigma);
    QuadResult r;
    r.value = c1 * vol;
    r.err_est = std::abs(c1 - c2) * vol;
    return r;
  };

  const bool split = in.field && distance(x, in.field->center()) >= in.field->feature_scale &&
                     R > 4.0 * distance(x, in.field->center());

  if (!split) {
    Point pole = Point::axis(n, 0);
    std::vector<double> points;
    if (in.field) {
      const Point c = in.field->center();
      const double d = distance(x, c);
      if (d > 0.0) {
        pole = c - x;
        points.push_back(d);
      }
      if (in.field->support_radius) {
        points.push_back(std::abs(d - *in.field->support_radius));
        points.push_back(d + *in.field->support_radius);
      }
    }
    auto breaks = with_breakpoints(dyadic_breaks(rho_core, R), points);
    ShellQuadrature sq(n, pole, order);
    auto integrand = [&](const Point& y) { return in.second_difference(y) * std::pow(y.norm(), -e); };
    QuadResult res = sq.integrate(integrand, breaks, spec) + core(in.second_difference);
    if (tail_override) {
      res.tail_bound = tail_override->bound;
    } else {
      const ScalarField& f = *in.field;
      // Beyond R the second difference is frozen at its mean over |y| = R. The
      // -2 f(x) part of that is exact; the f(x +- y) part is covered by the bound.
      const SphereRule& rule = sphere_rule(n, 6);
      CompensatedSum mean_sd, mean_f, wsum;
      const double fx = f(x);
      for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
        const Point y = rule.nodes[k] * R;
        const double fp = f(x + y), fm = f(x - y);
        mean_sd += rule.weights[k] * ((fp - fx) + (fm - fx));
        mean_f += rule.weights[k] * (fp + fm);
        wsum += rule.weights[k];
      }
      const double shell = area * std::pow(R, -two_sigma) / two_sigma;
      res.value += shell * mean_sd.value() / wsum.value();
      // z = x +- y with |y| > R lies outside B(c, R - d), and |y| >= R |z - c| / (R + d).
      const Point c = f.center();
      const double d = distance(x, c);
      const TailBound tw = weighted_tail_bound(f, c, R - d, e);
      res.tail_bound = 2.0 * std::pow((R + d) / R, e) * tw.bound + shell * std::abs(mean_f.value() / wsum.value());
    }
    res.err_est += res.tail_bound;
    enforce_budget(res, spec, "pv_integral");
    return res;
  }

  const ScalarField& f = *in.field;
  const Point c = f.center();
  const double d = distance(x, c);
  const double rho = 0.5 * d;

  // near part about x
  ShellQuadrature near_q(n, c - x, order);
  auto near_breaks = with_breakpoints(dyadic_breaks(rho_core, rho), std::array{0.5 * rho}, 0);
  auto near_integrand = [&](const Point& y) {
    const double r = y.norm();
    return in.second_difference(y) * smooth_cutoff(r, rho) * std::pow(r, -e);
  };
  QuadResult res = near_q.integrate(near_integrand, near_breaks, spec) + core(in.second_difference);

  // exterior of the cutoff: the -2 f(x) term in closed radial form
  const double fx = f(x);
  auto blend = [&](double r) { return (1.0 - smooth_cutoff(r, rho)) * std::pow(r, -1.0 - two_sigma); };
  const std::array<double, 2> bl{0.5 * rho, rho};
  QuadResult ring = adaptive_gk(blend, bl, adaptive_options(spec, 1));
  const double radial = ring.value + std::pow(rho, -two_sigma) / two_sigma;
  res.value += -2.0 * fx * area * radial;
  res.err_est += 2.0 * std::abs(fx) * area * ring.err_est;

  // far part about c
  ShellQuadrature far_q(n, x - c, order, [d, rho](double r) { return distance_cuts(r, d, {0.5 * rho, rho}); });
  std::vector<double> pts{d - rho, d - 0.5 * rho, d, d + 0.5 * rho, d + rho};
  if (f.support_radius) pts.push_back(*f.support_radius);
  const double far_inner = std::max(rho_min, 1e-8 * scale);
  auto far_breaks = with_breakpoints(dyadic_breaks(far_inner, R), pts, 4);
  auto far_integrand = [&](const Point& w) {
    const Point z = c + w;
    const double s = distance(z, x);
    const double chi = smooth_cutoff(s, rho);
    if (chi >= 1.0) return 0.0;
    return 2.0 * f(z) * (1.0 - chi) * std::pow(s, -e);
  };
  QuadResult far = far_q.integrate(far_integrand, far_breaks, spec);
  {
    // omitted ball about c; |f| there is bounded by its sampled size at far_inner
    // (fields singular at c are at worst |z-c|^{1-n})
    double m = 0.0;
    for (const auto& w : sphere_rule(n, 4).nodes) m = std::max(m, std::abs(f(c + w * far_inner)));
    far.err_est += 2.0 * area * m * std::pow(far_inner, n) * std::pow(0.5 * d, -e);
  }
  res = res + far;
  if (tail_override) {
    res.tail_bound = tail_override->bound;
  } else {
    // the far integrand lives on |z - c| > R, where |z - x| >= (R - d) |z - c| / R
    const TailBound tw = weighted_tail_bound(f, c, R, e);
    res.tail_bound = 2.0 * std::pow(R / (R - d), e) * tw.bound;
  }
  res.err_est += res.tail_bound;
  enforce_budget(res, spec, "pv_integral");
  return res;
}

// ---------------------------------------------------------------------------
// Convolution with a kernel singular at one point
// ---------------------------------------------------------------------------

// k(y) for a fixed evaluation point x, singular at y = x like |x-y|^-singularity
// (log singularities count as 0). Far out, |k(y)| <= tail_coeff(R) |y - c|^-tail_exponent
// for |y - c| >= R, c the density's feature center.
struct SingularKernel {
  std::function<double(const Point&)> eval;
  double singularity = 0.0;
  double tail_exponent = 0.0;
  std::function<double(double)> tail_coeff;
};

// int k(y) f(y) dy. Compactly supported densities seen from outside their
// support are integrated directly in shells about c. Otherwise, when x is at
// least feature_scale from c the integral is split with the smooth cutoff of
// radius |x - c|/2 into a part in shells about x and a part in shells about c;
// close to c a single family of shells about x is used.
inline QuadResult singular_convolution(const SingularKernel& k, const ScalarField& f, const Point& x,
                                       const QuadratureSpec& spec) {
  spec.validate();
  const int n = f.dim;
  require(x.dim() == n, ErrorKind::InvalidDimension, "point/field dimension mismatch");
  require(k.singularity < n, ErrorKind::Precondition, "kernel singularity is not locally integrable");
  const Point c = f.center();
  const double d = distance(x, c);
  const double scale = f.feature_scale;
  const double R = spec.truncation_radius;
  const double area = unit_sphere_area_in(n);
  const int order = spec.angular_order_for(n);
  const bool compact = f.support_radius.has_value();
  const double sr = f.support_radius.value_or(0.0);
  auto kf = [&](const Point& y) {
    const double fy = f(y);
    return fy == 0.0 ? 0.0 : k.eval(y) * fy;
  };
  // omitted ball about a point p where the integrand is at worst |y-p|^-a
  auto omitted = [&](const Point& p, double r0, double a) {
    double m = 0.0;
    for (const auto& w : sphere_rule(n, 4).nodes) m = std::max(m, std::abs(kf(p + w * r0)));
    return 2.0 * m * area * std::pow(r0, n) / (n - a);
  };
  // below this radius x + w rounds back to x
  const double r0_x = std::max(std::ldexp(scale, -std::min(spec.max_subdivisions, 60)),
                               1e-13 * (x.norm() + scale));
  auto tail = [&](double radius) {
    const TailBound t = weighted_tail_bound(f, c, radius, k.tail_exponent);
    return k.tail_coeff(radius) * t.bound;
  };

  QuadResult res;
  if (compact && d > sr + 0.5 * scale) {
    const double r0 = std::ldexp(sr, -std::min(spec.max_subdivisions, 60));
    ShellQuadrature sq(n, x - c, order);
    auto g = [&](const Point& w) { return kf(c + w); };
    res = sq.integrate(g, with_breakpoints(dyadic_breaks(r0, sr), {}), spec);
    res.err_est += omitted(c, r0, 0.0);
  } else if (d >= scale && (compact || R > 4.0 * d)) {
    const double rho = 0.5 * d;
    const double r0 = std::ldexp(scale, -std::min(spec.max_subdivisions, 60));
    ShellQuadrature near_q(n, c - x, order);
    auto near = [&](const Point& w) {
      const double chi = smooth_cutoff(w.norm(), rho);
      return chi == 0.0 ? 0.0 : chi * kf(x + w);
    };
    res = near_q.integrate(near, with_breakpoints(dyadic_breaks(r0_x, rho), std::array{0.5 * rho}, 0), spec);
    res.err_est += omitted(x, r0_x, k.singularity);
    ShellQuadrature far_q(n, x - c, order, [d, rho](double r) { return distance_cuts(r, d, {0.5 * rho, rho}); });
    auto far = [&](const Point& w) {
      const Point y = c + w;
      const double chi = smooth_cutoff(distance(y, x), rho);
      return chi == 1.0 ? 0.0 : (1.0 - chi) * kf(y);
    };
    std::vector<double> pts{d - rho, d - 0.5 * rho, d, d + 0.5 * rho, d + rho};
    if (compact) pts.push_back(sr);
    const double outer = compact ? sr : R;
    if (outer > r0) {
      const QuadResult fr = far_q.integrate(far, with_breakpoints(dyadic_breaks(r0, outer), pts, 4), spec);
      res = res + fr;
      res.err_est += omitted(c, r0, 0.0);
    }
    if (!compact) {
      res.tail_bound = tail(R);
      res.err_est += res.tail_bound;
    }
  } else {
    const double r0 = r0_x;
    ShellQuadrature sq(n, c - x, order);
    auto g = [&](const Point& w) { return kf(x + w); };
    std::vector<double> pts;
    if (d > 0.0) pts.push_back(d);
    if (compact) {
      pts.push_back(std::abs(sr - d));
      pts.push_back(sr + d);
    }
    const double outer = compact ? sr + d : R;
    res = sq.integrate(g, with_breakpoints(dyadic_breaks(r0, outer), pts), spec);
    res.err_est += omitted(x, r0, k.singularity);
    if (!compact) {
      res.tail_bound = tail(R - d);
      res.err_est += res.tail_bound;
    }
  }
  enforce_budget(res, spec, "singular_convolution");
  return res;
}

// ---------------------------------------------------------------------------
// Truncated integrals over simple domains
// ---------------------------------------------------------------------------

struct FullSpace {};
struct Ball {
  Point center;
  double radius = 1.0;
};
struct Annulus {
  Point center;
  double r_in = 0.0, r_out = 1.0;
};
struct SphereSurface {
  Point center;
  double radius = 1.0;
};
using Domain = std::variant<FullSpace, Ball, Annulus, SphereSurface>;

// Product quadrature of f over the domain. Shells are centred at the domain
// center (FullSpace: the field's feature center); FullSpace adds a certified tail.
inline QuadResult truncated_integral(const ScalarField& f, const Domain& domain, const QuadratureSpec& spec,
                                     std::span<const double> extra_breaks = {}) {
  spec.validate();
  const int n = f.dim;
  const int order = spec.angular_order_for(n);
  // core: integrate over the ball of radius outer; the innermost ball, 2^-60 of
  // min(outer, feature_scale), is bounded by sampling
  auto shells = [&](const Point& center, double inner, double outer, bool core) {
    std::vector<double> pts(extra_breaks.begin(), extra_breaks.end());
    if (f.support_radius && distance(center, f.center()) == 0.0) pts.push_back(*f.support_radius);
    const double start = core ? std::ldexp(std::min(outer, f.feature_scale), -std::min(spec.max_subdivisions, 60)) : inner;
    const auto breaks = with_breakpoints(dyadic_breaks(start, outer), pts, 4);
    ShellQuadrature sq(n, Point::axis(n, 0), order);
    auto integrand = [&](const Point& w) { return f(center + w); };
    QuadResult r = sq.integrate(integrand, breaks, spec);
    if (core) {
      const SphereRule& rule = sphere_rule(n, 4);
      double m = 0.0;
      for (const auto& w : rule.nodes) m = std::max(m, std::abs(f(center + w * start)));
      r.err_est += m * unit_ball_volume(n) * std::pow(start, n);
    }
    return r;
  };

  QuadResult res;
  if (std::holds_alternative<FullSpace>(domain)) {
    const Point c = f.center();
    double outer = spec.truncation_radius;
    const bool compact = f.support_radius.has_value();
    if (compact) outer = *f.support_radius;
    res = shells(c, 0.0, outer, true);
    if (!compact) {
      const TailBound t = weighted_tail_bound(f, c, outer, 0.0);
      res.tail_bound = t.bound;
      res.err_est += t.bound;
    }
  } else if (const auto* b = std::get_if<Ball>(&domain)) {
    require(b->radius > 0.0, ErrorKind::InvalidArgument, "ball radius must be positive");
    res = shells(b->center, 0.0, b->radius, true);
  } else if (const auto* a = std::get_if<Annulus>(&domain)) {
    require(a->r_in > 0.0 && a->r_out > a->r_in, ErrorKind::InvalidArgument, "annulus radii");
    res = shells(a->center, a->r_in, a->r_out, false);
  } else {
    const auto& s = std::get<SphereSurface>(domain);
    require(s.radius > 0.0, ErrorKind::InvalidArgument, "sphere radius must be positive");
    const SphereRule& hi = sphere_rule(n, order);
    const SphereRule& lo = sphere_rule(n, std::max(1, (2 * order) / 3));
    auto sum = [&](const SphereRule& rule) {
      CompensatedSum acc;
      for (std::size_t k = 0; k < rule.nodes.size(); ++k) acc += rule.weights[k] * f(s.center + rule.nodes[k] * s.radius);
      return acc.value() * std::pow(s.radius, n - 1);
    };
    res.value = sum(hi);
    res.err_est = n == 1 ? 0.0 : std::abs(res.value - sum(lo));
    res.evaluations = hi.nodes.size() + lo.nodes.size();
    res.converged = res.err_est <= std::max(spec.abs_tol, spec.rel_tol * std::abs(res.value)) * 1e3;
  }
  enforce_budget(res, spec, "truncated_integral");
  return res;
}

// ---------------------------------------------------------------------------
// Ray quadrature over a ball from an interior origin
// ---------------------------------------------------------------------------

// int_{B(ball_center, ball_radius)} F(z) dz with z = origin + s w: for each
// direction w of the sphere rule, adaptive Gauss-Kronrod along the ray to the
// ball boundary, dyadically graded toward the origin (integrable point
// singularities) and toward the boundary (algebraic edge behaviour). The
// angular error is the difference against the two-thirds order rule.
template <class F>
QuadResult ray_integral(F&& f, const Point& origin, const Point& ball_center, double ball_radius,
                        const QuadratureSpec& spec, const Point& pole, int inner_levels = 40, int edge_levels = 24) {
  const int n = origin.dim();
  const Point rel = origin - ball_center;
  require(rel.norm() < ball_radius, ErrorKind::Precondition, "ray origin must lie inside the ball");
  const int order = spec.angular_order_for(n);
  auto run = [&](const SphereRule& rule) {
    CompensatedSum v, e;
    bool ok = true;
    std::size_t evals = 0;
    for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
      const Point& w = rule.nodes[k];
      const double b = dot(rel, w);
      const double smax = -b + std::sqrt(std::max(0.0, b * b + ball_radius * ball_radius - rel.norm2()));
      std::vector<double> br{0.0};
      for (int j = inner_levels; j >= 1; --j) br.push_back(smax * std::ldexp(1.0, -j));
      for (int j = 2; j <= edge_levels; ++j) br.push_back(smax * (1.0 - std::ldexp(1.0, -j)));
      br.push_back(smax);
      std::sort(br.begin(), br.end());
      br.erase(std::unique(br.begin(), br.end()), br.end());
      auto g = [&](double s) {
        const Point z = origin + w * s;
        // deep bisection toward a singular origin can round z back onto it
        if (distance(z, origin) == 0.0) return 0.0;
        return std::pow(s, n - 1) * f(z);
      };
      AdaptiveOptions opt = adaptive_options(spec, br.size());
      opt.max_bisections = 200;
      QuadResult r = adaptive_gk(g, br, opt);
      v += rule.weights[k] * r.value;
      e += rule.weights[k] * r.err_est;
      ok = ok && r.converged;
      evals += r.evaluations;
    }
    QuadResult out;
    out.value = v.value();
    out.err_est = e.value();
    out.converged = ok;
    out.evaluations = evals;
    return out;
  };
  const SphereRule hi = oriented_sphere_rule(n, order, pole);
  QuadResult res = run(hi);
  if (n > 1) {
    const SphereRule lo = oriented_sphere_rule(n, std::max(1, (2 * order) / 3), pole);
    const QuadResult low = run(lo);
    res.err_est += std::abs(res.value - low.value);
    res.evaluations += low.evaluations;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Seeded Monte Carlo for nested kernel chains
// ---------------------------------------------------------------------------

// Counter-based stream: sample i draws from a SplitMix64 sequence keyed on
// (seed, i), so estimates do not depend on how samples are distributed.
class SampleStream {
 public:
  SampleStream(std::uint64_t seed, std::uint64_t index)
      : state_(mix(seed ^ mix(index + 0x9E3779B97F4A7C15ULL))) {}

  std::uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix(state_);
  }
  // uniform in (0,1)
  double uniform() { return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53; }
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform(), u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * kPi * u2);
    have_spare_ = true;
    return r * std::cos(2.0 * kPi * u2);
  }
  Point direction(int n) {
    Point p(n);
    double s = 0.0;
    do {
      for (int i = 0; i < n; ++i) p[i] = normal();
      s = p.norm();
    } while (s == 0.0);
    return p * (1.0 / s);
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
  std::uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// A pairwise kernel K(a, b) with |K| <~ |a - b|^{-singularity} near the diagonal.
struct PairKernel {
  std::function<double(const Point&, const Point&)> eval;
  double singularity = 0.0;
};

struct MCResult {
  double value = 0.0;
  double stderr_ = 0.0;
  std::uint64_t samples = 0;
  std::uint64_t resampled = 0;  // draws that hit a chain point exactly
};

// int_B ... int_B K_0(x, z_1) K_1(z_1, z_2) ... K_m(z_m, y) dz_1 ... dz_m with
// m = chain.size() - 1 folds. A single kernel means zero folds: the pointwise
// value K_0(x, y) with zero standard error.
//
// Each z_i is drawn from an equal mixture of the uniform law on the ball and
// two radial laws centred at x and y with density ~ s^{-singularity} (the
// endpoint kernel's own singularity), which keeps the importance weights
// bounded next to the endpoints.
inline MCResult nested_mc_integral(const std::vector<PairKernel>& chain, const Point& x, const Point& y,
                                   const Ball& domain, std::uint64_t samples, std::uint64_t seed) {
  require(!chain.empty(), ErrorKind::InvalidArgument, "kernel chain must hold at least one kernel");
  MCResult out;
  const std::size_t folds = chain.size() - 1;
  if (folds == 0) {
    out.value = chain.front().eval(x, y);
    return out;
  }
  require(samples > 0, ErrorKind::InvalidArgument, "Monte Carlo needs samples > 0");
  const int n = x.dim();
  const double R = domain.radius;
  const double ball_vol = unit_ball_volume(n) * std::pow(R, n);
  const double area = unit_sphere_area_in(n);
  auto exponent = [n](double sing) { return std::clamp(n - sing, 0.5, static_cast<double>(n)); };
  const double bx = exponent(chain.front().singularity);
  const double by = exponent(chain.back().singularity);
  const double rho0 = R;
  auto radial_density = [&](double s, double b) {
    if (s >= rho0) return 0.0;
    return b * std::pow(s, b - n) / (std::pow(rho0, b) * area);
  };
  auto density = [&](const Point& z) {
    const double u = distance(z, domain.center) < R ? 1.0 / ball_vol : 0.0;
    return (u + radial_density(distance(z, x), bx) + radial_density(distance(z, y), by)) / 3.0;
  };
  const double eps = 1e-14 * R;

  constexpr std::uint64_t kBlock = 4096;
  const std::uint64_t blocks = (samples + kBlock - 1) / kBlock;
  struct Partial {
    double sum = 0.0, sum2 = 0.0;
    std::uint64_t resampled = 0;
  };
  auto partials = parallel_map<Partial>(static_cast<std::size_t>(blocks), [&](std::size_t bi) {
    CompensatedSum s, s2;
    Partial p;
    const std::uint64_t lo = bi * kBlock, hi = std::min(samples, lo + kBlock);
    std::vector<Point> z(folds);
    for (std::uint64_t i = lo; i < hi; ++i) {
      SampleStream rng(seed, i);
      double weight = 1.0;
      for (std::size_t k = 0; k < folds; ++k) {
        for (;;) {
          const double pick = rng.uniform();
          Point cand(n);
          if (pick < 1.0 / 3.0) {
            cand = domain.center + rng.direction(n) * (R * std::pow(rng.uniform(), 1.0 / n));
          } else if (pick < 2.0 / 3.0) {
            cand = x + rng.direction(n) * (rho0 * std::pow(rng.uniform(), 1.0 / bx));
          } else {
            cand = y + rng.direction(n) * (rho0 * std::pow(rng.uniform(), 1.0 / by));
          }
          bool clash = distance(cand, x) < eps || distance(cand, y) < eps;
          for (std::size_t j = 0; j < k; ++j) clash = clash || distance(cand, z[j]) < eps;
          if (clash) {
            ++p.resampled;
            continue;
          }
          z[k] = cand;
          break;
        }
        if (distance(z[k], domain.center) >= R) weight = 0.0;
        else weight /= density(z[k]);
      }
      double v = 0.0;
      if (weight != 0.0) {
        v = weight * chain[0].eval(x, z[0]);
        for (std::size_t k = 1; k < folds; ++k) v *= chain[k].eval(z[k - 1], z[k]);
        v *= chain[folds].eval(z[folds - 1], y);
      }
      s += v;
      s2 += v * v;
    }
    p.sum = s.value();
    p.sum2 = s2.value();
    return p;
  });
  CompensatedSum s, s2;
  for (const auto& p : partials) {
    s += p.sum;
    s2 += p.sum2;
    out.resampled += p.resampled;
  }
  const double N = static_cast<double>(samples);
  out.value = s.value() / N;
  const double var = samples > 1 ? std::max(0.0, (s2.value() / N - out.value * out.value) * N / (N - 1.0)) : 0.0;
  out.stderr_ = std::sqrt(var / N);
  out.samples = samples;
  return out;
}

}  // namespace qcurv
