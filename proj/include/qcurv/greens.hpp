#pragma once

// Ball kernels: the Dirichlet Green's function G1 of -Delta on B_r (n >= 3),
// iterated polyharmonic Green's functions, the Navier boundary
// representation, and for the half-Laplacian the exterior Poisson kernel and
// the Green's function G2.

#include <mutex>

#include "qcurv/fields.hpp"
#include "qcurv/fraclap.hpp"
#include "qcurv/quad.hpp"
#include "qcurv/report.hpp"

namespace qcurv {

namespace detail {

inline void require_in_ball(double r, const Point& x, const char* what) {
  require(r > 0.0, ErrorKind::InvalidArgument, "ball radius must be positive");
  require(x.norm() < r, ErrorKind::InvalidArgument, what);
}

// ||x|(y - r^2 x/|x|^2)|^2, which stays regular at x = 0
inline double image_distance2(double r, const Point& x, const Point& y) {
  return x.norm2() * y.norm2() - 2.0 * r * r * dot(x, y) + r * r * r * r;
}

inline double g1_unchecked(double r, const Point& x, const Point& y) {
  const int n = x.dim();
  const double c = 1.0 / (n * (n - 2.0) * unit_ball_volume(n));
  return c * (std::pow(distance(x, y), 2.0 - n) - std::pow(r, n - 2.0) * std::pow(image_distance2(r, x, y), 0.5 * (2.0 - n)));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// G1
// ---------------------------------------------------------------------------

inline double g1_eval(double r, const Point& x, const Point& y) {
  const int n = x.dim();
  require(n >= 3, ErrorKind::InvalidDimension, "G1 closed form needs n >= 3");
  require(y.dim() == n, ErrorKind::InvalidDimension, "point dimension mismatch");
  detail::require_in_ball(r, x, "x must lie in the open ball");
  detail::require_in_ball(r, y, "y must lie in the open ball");
  require(distance(x, y) > 0.0, ErrorKind::InvalidArgument, "G1 is singular at coincident points");
  return detail::g1_unchecked(r, x, y);
}

// grad_y G1(x, y); y may lie on the boundary sphere.
inline Point g1_grad_y(double r, const Point& x, const Point& y) {
  const int n = x.dim();
  const double c = 1.0 / (n * (n - 2.0) * unit_ball_volume(n));
  const Point direct = (y - x) * std::pow(distance(x, y), -n);
  const Point image = (y * x.norm2() - x * (r * r)) * (std::pow(r, n - 2.0) * std::pow(detail::image_distance2(r, x, y), -0.5 * n));
  return (direct - image) * (c * (2.0 - n));
}

// -d/dnu_y G1(x, y) for |y| = r: the Poisson kernel of the Laplacian.
inline double g1_poisson_kernel(double r, const Point& x, const Point& y) {
  return -dot(g1_grad_y(r, x, y), y) / r;
}

// ---------------------------------------------------------------------------
// Iterated Green's function (-Delta)^j G, G the Green's function of (-Delta)^{(n-1)/2}
// ---------------------------------------------------------------------------

inline int navier_top(int n) {
  require(n >= 3 && n % 2 == 1, ErrorKind::InvalidDimension, "iterated Green's functions need odd n >= 3");
  return (n - 3) / 2;
}

inline PairKernel g1_pair_kernel(double r, int n) {
  return {[r](const Point& a, const Point& b) { return detail::g1_unchecked(r, a, b); }, n - 2.0};
}

// (-Delta)^j G(x, y) is a chain of (n-1)/2 - j copies of G1, i.e. (n-3)/2 - j
// folds; with no folds it is G1 itself.
inline MCResult iterated_green(double r, int j, const Point& x, const Point& y, const QuadratureSpec& spec) {
  const int n = x.dim();
  const int top = navier_top(n);
  require(j >= 0 && j <= top, ErrorKind::InvalidArgument, "j must lie in 0..(n-3)/2");
  detail::require_in_ball(r, x, "x must lie in the open ball");
  detail::require_in_ball(r, y, "y must lie in the open ball");
  require(distance(x, y) > 0.0, ErrorKind::InvalidArgument, "x and y must differ");
  const std::vector<PairKernel> chain(static_cast<std::size_t>(top - j + 1), g1_pair_kernel(r, n));
  return nested_mc_integral(chain, x, y, Ball{Point(n), r}, spec.mc_samples, spec.seed);
}

// d/dy_i (-Delta)^j G(x, y). Zero folds: central differences of the closed
// form. Otherwise Monte Carlo with the analytic y-derivative of the last G1,
// drawn with the same seed for every pair (common random numbers).
inline MCResult iterated_green_dy(double r, int j, const Point& x, const Point& y, int i, const QuadratureSpec& spec) {
  const int n = x.dim();
  const int top = navier_top(n);
  require(j >= 0 && j <= top, ErrorKind::InvalidArgument, "j must lie in 0..(n-3)/2");
  require(i >= 0 && i < n, ErrorKind::InvalidArgument, "direction out of range");
  if (top - j == 0) {
    const double h = 1e-5 * std::min(distance(x, y), r - y.norm());
    Point yp = y, ym = y;
    yp[i] += h;
    ym[i] -= h;
    MCResult out;
    out.value = (g1_eval(r, x, yp) - g1_eval(r, x, ym)) / (2.0 * h);
    return out;
  }
  std::vector<PairKernel> chain(static_cast<std::size_t>(top - j), g1_pair_kernel(r, n));
  chain.push_back({[r, i](const Point& z, const Point& w) { return g1_grad_y(r, z, w)[i]; }, n - 1.0});
  return nested_mc_integral(chain, x, y, Ball{Point(n), r}, spec.mc_samples, spec.seed);
}

struct GreenDerivativeReport {
  int dim = 0, j = 0;
  double predicted_exponent = 0.0;
  double fitted_exponent = 0.0;
  double fitted_constant = 0.0;  // max |D_y (-Delta)^j G| |x-y|^{2+2j}
  std::vector<double> separations, magnitudes, stderrs;

  nlohmann::json to_json() const {
    return {{"dim", dim}, {"fitted_constant", fitted_constant}, {"fitted_exponent", fitted_exponent}, {"j", j},
            {"magnitudes", magnitudes}, {"predicted_exponent", predicted_exponent}, {"separations", separations},
            {"stderrs", stderrs}};
  }
};

// Least-squares slope and intercept of log|y| against log|x|.
inline std::pair<double, double> loglog_fit(const std::vector<double>& xs, const std::vector<double>& ys) {
  require(xs.size() == ys.size() && xs.size() >= 2, ErrorKind::InvalidArgument, "log-log fit needs two or more points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double m = static_cast<double>(xs.size());
  for (std::size_t k = 0; k < xs.size(); ++k) {
    require(xs[k] > 0.0 && ys[k] > 0.0, ErrorKind::InvalidArgument, "log-log fit needs positive data");
    const double a = std::log(xs[k]), b = std::log(ys[k]);
    sx += a;
    sy += b;
    sxx += a * a;
    sxy += a * b;
  }
  const double den = m * sxx - sx * sx;
  require(den > 0.0, ErrorKind::SingularFit, "log-log fit needs distinct abscissae");
  const double slope = (m * sxy - sx * sy) / den;
  return {slope, (sy - slope * sx) / m};
}

// |grad_y (-Delta)^j G| (max over coordinates) on the given pairs, with the
// log-log slope against |x - y| compared to -(2 + 2j).
inline GreenDerivativeReport green_derivative_bound_check(double r, int j,
                                                          const std::vector<std::pair<Point, Point>>& pairs,
                                                          const QuadratureSpec& spec) {
  require(!pairs.empty(), ErrorKind::InvalidArgument, "no pairs given");
  const int n = pairs.front().first.dim();
  GreenDerivativeReport rep;
  rep.dim = n;
  rep.j = j;
  rep.predicted_exponent = -(2.0 + 2.0 * j);
  for (const auto& [x, y] : pairs) {
    require(distance(x, y) > 0.0, ErrorKind::InvalidArgument, "pairs must be distinct");
    double mag = 0.0, se = 0.0;
    for (int i = 0; i < n; ++i) {
      const MCResult d = iterated_green_dy(r, j, x, y, i, spec);
      if (std::abs(d.value) > mag) {
        mag = std::abs(d.value);
        se = d.stderr_;
      }
    }
    const double sep = distance(x, y);
    rep.separations.push_back(sep);
    rep.magnitudes.push_back(mag);
    rep.stderrs.push_back(se);
    rep.fitted_constant = std::max(rep.fitted_constant, mag * std::pow(sep, 2.0 + 2.0 * j));
  }
  if (pairs.size() >= 2) rep.fitted_exponent = loglog_fit(rep.separations, rep.magnitudes).first;
  return rep;
}

// Pairs (x, x + s u) for each separation s.
inline std::vector<std::pair<Point, Point>> shrinking_pairs(const Point& x, const Point& direction,
                                                            const std::vector<double>& separations) {
  const Point u = direction * (1.0 / direction.norm());
  std::vector<std::pair<Point, Point>> out;
  for (double s : separations) out.emplace_back(x, x + u * s);
  return out;
}

// ---------------------------------------------------------------------------
// Navier boundary representation
// ---------------------------------------------------------------------------

namespace detail {

// int_{|y|=r} f(y) P(x, y) dsigma(y), P = -d/dnu G1, on a fixed sphere rule
inline double harmonic_extension_fixed(double r, const ScalarField& f, const Point& x, const SphereRule& rule) {
  const int n = x.dim();
  CompensatedSum s;
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
    const Point y = rule.nodes[k] * r;
    s += rule.weights[k] * f(y) * g1_poisson_kernel(r, x, y);
  }
  return s.value() * std::pow(r, n - 1);
}

inline int max_boundary_order(int n) { return n <= 3 ? 384 : 16; }

}  // namespace detail

// Same integral with the sphere-rule order doubled until two successive
// orders agree to the requested tolerance.
inline QuadResult harmonic_extension(double r, const ScalarField& f, const Point& x, const QuadratureSpec& spec) {
  const int n = x.dim();
  detail::require_in_ball(r, x, "x must lie in the open ball");
  const Point pole = x.norm() > 0.0 ? x : Point::axis(n, 0);
  int m = spec.angular_order_for(n);
  double prev = detail::harmonic_extension_fixed(r, f, x, oriented_sphere_rule(n, m, pole));
  QuadResult res;
  res.evaluations = sphere_rule(n, m).nodes.size();
  for (;;) {
    const int m2 = 2 * m;
    if (m2 > detail::max_boundary_order(n)) {
      res.value = prev;
      res.converged = false;
      res.err_est = std::numeric_limits<double>::infinity();
      break;
    }
    const double cur = detail::harmonic_extension_fixed(r, f, x, oriented_sphere_rule(n, m2, pole));
    res.evaluations += sphere_rule(n, m2).nodes.size();
    const double diff = std::abs(cur - prev);
    m = m2;
    if (diff <= std::max(spec.abs_tol, spec.rel_tol * std::abs(cur))) {
      res.value = cur;
      res.err_est = diff;
      res.converged = true;
      break;
    }
    prev = cur;
  }
  enforce_budget(res, spec, "harmonic_extension");
  return res;
}

// h(x) = -sum_i int_{dB_r} f_i(y) d/dnu_y (-Delta)^{(n-3)/2-i} G(x, y) dsigma(y),
// the solution of (-Delta)^{(n-1)/2} h = 0 with (-Delta)^i h = f_i on the
// boundary. Term i equals G1 chained i times against the harmonic extension
// H_i of f_i; term 0 is H_0(x) itself and higher terms use Monte Carlo.
inline QuadResult navier_representation(double r, const std::vector<ScalarField>& data, const Point& x,
                                        const QuadratureSpec& spec) {
  const int n = x.dim();
  const int top = navier_top(n);
  require(static_cast<int>(data.size()) == top + 1, ErrorKind::InvalidArgument,
          "navier_representation needs (n-1)/2 boundary data");
  detail::require_in_ball(r, x, "x must lie strictly inside the ball");
  QuadResult res = harmonic_extension(r, data[0], x, spec);
  for (int i = 1; i <= top; ++i) {
    const ScalarField fi = data[static_cast<std::size_t>(i)];
    const SphereRule rule = sphere_rule(n, std::max(4, spec.angular_order_for(n) - 2));
    std::vector<PairKernel> chain(static_cast<std::size_t>(i), g1_pair_kernel(r, n));
    chain.push_back({[r, fi, rule](const Point& z, const Point&) {
                       return detail::harmonic_extension_fixed(r, fi, z, rule);
                     },
                     0.0});
    const MCResult mc = nested_mc_integral(chain, x, x, Ball{Point(n), r}, std::max<std::uint64_t>(spec.mc_samples / 20, 1000),
                                           spec.seed + static_cast<std::uint64_t>(i));
    res.value += mc.value;
    res.err_est += 3.0 * mc.stderr_;
    res.evaluations += mc.samples * rule.nodes.size();
  }
  return res;
}

// ---------------------------------------------------------------------------
// Exterior Poisson kernel of the half-Laplacian
// ---------------------------------------------------------------------------

// P(x, y) = C ((r^2 - |x|^2)/(|y|^2 - r^2))^{1/2} |x - y|^{-n} for |x| < r < |y|.
// The kernel is scale covariant, so C depends on n only; it is fixed by unit
// mass at x = 0.
class PoissonHalfLap {
 public:
  PoissonHalfLap(int n, double r) : n_(n), r_(r), c_(normalizer(n)) {
    require(n >= 1 && n <= kMaxDim, ErrorKind::InvalidDimension, "dimension out of range");
    require(r > 0.0, ErrorKind::InvalidArgument, "ball radius must be positive");
  }

  int dim() const { return n_; }
  double radius() const { return r_; }
  double constant() const { return c_; }

  double operator()(const Point& x, const Point& y) const {
    require(x.norm() < r_ && y.norm() > r_, ErrorKind::InvalidArgument, "Poisson kernel needs |x| < r < |y|");
    return c_ * std::sqrt((r_ * r_ - x.norm2()) / (y.norm2() - r_ * r_)) * std::pow(distance(x, y), -n_);
  }

  // mass at x = 0 for unit C and r = 1 is |S^{n-1}| int_0^inf 2 dw / ((1+w^2) sqrt(2+w^2)) (rho = 1 + w^2)
  static double normalizer(int n) {
    static std::mutex mu;
    static std::map<int, double> cache;
    std::lock_guard lock(mu);
    if (auto it = cache.find(n); it != cache.end()) return it->second;
    auto g = [](double w) { return 2.0 / ((1.0 + w * w) * std::sqrt(2.0 + w * w)); };
    const double W = 0x1.0p30;
    std::vector<double> br{0.0};
    for (double b = 0x1.0p-10; b <= W; b *= 2.0) br.push_back(b);
    AdaptiveOptions opt;
    opt.abs_tol = 1e-16;
    opt.rel_tol = 1e-14;
    const QuadResult q = adaptive_gk(g, br, opt);
    const double tail = 1.0 / (W * W);  // int_W^inf 2 w^-3 dw
    const double c = 1.0 / (unit_sphere_area_in(n) * (q.value + tail));
    cache[n] = c;
    return c;
  }

 private:
  int n_;
  double r_;
  double c_;
};

inline QuadResult poisson_extension_halflap(double r, const ScalarField& g, const Point& x, const QuadratureSpec& spec) {
  spec.validate();
  const int n = g.dim;
  require(x.dim() == n, ErrorKind::InvalidDimension, "point/field dimension mismatch");
  detail::require_in_ball(r, x, "x must lie in the open ball");
  const PoissonHalfLap P(n, r);
  const double C = P.constant();
  const double a2 = r * r - x.norm2();
  const Point pole = x.norm() > 0.0 ? x : Point::axis(n, 0);
  const double T = spec.truncation_radius;
  const double W = std::sqrt(T - r);

  // y = rho theta, rho = r + w^2; the w in d rho = 2 w dw cancels the one in sqrt(rho^2 - r^2)
  auto make_radial = [&](const SphereRule& rule) {
    return [&, rule_ptr = &rule](double w) {
      const double rho = r + w * w;
      const double root = std::sqrt(2.0 * r + w * w);
      double s = 0.0, a = 0.0;
      for (std::size_t k = 0; k < rule_ptr->nodes.size(); ++k) {
        const Point y = rule_ptr->nodes[k] * rho;
        const double v = rule_ptr->weights[k] * std::pow(distance(x, y), -n) * g(y);
        s += v;
        a += std::abs(v);
      }
      const double jac = 2.0 * C * std::sqrt(a2) * std::pow(rho, n - 1) / root;
      return std::pair{jac * s, jac * std::abs(a)};
    };
  };
  std::vector<double> br{0.0};
  for (double b = std::sqrt(r) * 0x1.0p-20; b < W; b *= 2.0) br.push_back(b);
  br.push_back(W);
  // the kernel peaks in w on the scale sqrt(r - |x|)
  const double peak = std::sqrt(std::max(r - x.norm(), 1e-300));
  const std::array<double, 1> pk{peak};
  br = with_breakpoints(br, pk, 6);

  auto run = [&](int m) {
    const SphereRule rule = n == 1 ? sphere_rule(1, 1) : oriented_sphere_rule(n, m, pole);
    return adaptive_gk(make_radial(rule), br, adaptive_options(spec, br.size()));
  };
  int m = spec.angular_order_for(n);
  QuadResult res = run(m);
  std::size_t evals = res.evaluations;
  if (n > 1) {
    for (;;) {
      const int m2 = 2 * m;
      if (m2 > detail::max_boundary_order(n) / 2) {
        res.converged = false;
        break;
      }
      const QuadResult next = run(m2);
      evals += next.evaluations;
      const double diff = std::abs(next.value - res.value);
      const double err = next.err_est + diff;
      m = m2;
      res = next;
      res.err_est = err;
      if (diff <= std::max(spec.abs_tol, spec.rel_tol * std::abs(next.value))) break;
    }
  }
  res.evaluations = evals;

  // Tail beyond |y| = T, split into the even and odd parts of g. The even
  // kernel decays like |y|^{-n-1}, the odd one like |y|^{-n-2}.
  double beta = 0.0;
  switch (g.decay.kind) {
    case DecayHint::Kind::Schwartz: beta = -n; break;
    case DecayHint::Kind::PowerDecay: beta = -g.decay.rate; break;
    case DecayHint::Kind::PolyGrowth: beta = g.decay.rate; break;
    case DecayHint::Kind::LogGrowth: beta = 0.25; break;
    case DecayHint::Kind::None: throw Error(ErrorKind::TailNotCertified, "exterior data has no growth hint");
  }
  double me = 0.0, mo = 0.0;
  for (const auto& w : sphere_rule(n, 6).nodes) {
    const double gp = g(w * T), gm = g(w * -T);
    me = std::max(me, 0.5 * std::abs(gp + gm));
    mo = std::max(mo, 0.5 * std::abs(gp - gm));
  }
  if (!std::isfinite(me) || !std::isfinite(mo)) throw Error(ErrorKind::TailNotCertified, "exterior data not finite far out");
  me /= std::pow(T, beta);
  mo /= std::pow(T, beta);
  if ((me > 0.0 && beta >= 1.0) || (mo > 0.0 && beta >= 2.0))
    throw Error(ErrorKind::TailNotCertified, "exterior data grows too fast for the Poisson kernel");
  const double ke = C * r * (2.0 / std::sqrt(3.0)) * std::pow(2.0, n);
  const double ko = ke * 4.0 * n * x.norm();
  const double area = unit_sphere_area_in(n);
  double tail = 0.0;
  if (me > 0.0) tail += ke * me * std::pow(T, beta - 1.0) / (1.0 - beta);
  if (mo > 0.0) tail += ko * mo * std::pow(T, beta - 2.0) / (2.0 - beta);
  res.tail_bound = 4.0 * area * tail;
  res.err_est += res.tail_bound;
  enforce_budget(res, spec, "poisson_extension_halflap");
  return res;
}

// ---------------------------------------------------------------------------
// Green's function G2 of the half-Laplacian on B_r
// ---------------------------------------------------------------------------

// J(q) = int_0^{q^2} t^{-1/2} (1+t)^{-n/2} dt = 2 int_0^q (1+u^2)^{-n/2} du,
// tabulated on a log grid and interpolated by cubic Hermite with the exact slope.
class G2Profile {
 public:
  explicit G2Profile(int n) : n_(n) {
    const int per_decade = 64;
    const int count = 12 * per_decade + 1;
    q_.resize(count);
    j_.resize(count);
    for (int i = 0; i < count; ++i) q_[static_cast<std::size_t>(i)] = std::pow(10.0, kLogMin + static_cast<double>(i) / per_decade);
    const auto& gl = gauss_legendre(10);
    j_[0] = small(q_[0]);
    for (std::size_t i = 1; i < q_.size(); ++i) {
      const double a = q_[i - 1], b = q_[i], c = 0.5 * (a + b), h = 0.5 * (b - a);
      double s = 0.0;
      for (std::size_t k = 0; k < gl.nodes.size(); ++k) s += gl.weights[k] * slope(c + h * gl.nodes[k]);
      j_[i] = j_[i - 1] + h * s;
    }
  }

  double slope(double u) const { return 2.0 * std::pow(1.0 + u * u, -0.5 * n_); }

  double operator()(double q) const {
    if (q <= q_.front()) return small(q);
    if (q >= q_.back()) return large(q);
    const double pos = (std::log10(q) - kLogMin) * 64.0;
    std::size_t i = std::min(static_cast<std::size_t>(pos), q_.size() - 2);
    while (i > 0 && q_[i] > q) --i;
    while (i + 2 < q_.size() && q_[i + 1] < q) ++i;
    const double a = q_[i], b = q_[i + 1], h = b - a, t = (q - a) / h;
    const double h00 = (1 + 2 * t) * (1 - t) * (1 - t), h10 = t * (1 - t) * (1 - t);
    const double h01 = t * t * (3 - 2 * t), h11 = t * t * (t - 1);
    return h00 * j_[i] + h10 * h * slope(a) + h01 * j_[i + 1] + h11 * h * slope(b);
  }

  // sup_q J(q) for n >= 2
  double limit() const { return n_ >= 2 ? large(std::numeric_limits<double>::infinity()) : std::numeric_limits<double>::infinity(); }

 private:
  static constexpr double kLogMin = -6.0;

  double small(double q) const { return 2.0 * q - n_ * q * q * q / 3.0; }

  // J(qmax) + 2 int_qmax^q (1+u^2)^{-n/2} du from the large-u expansion
  double large(double q) const {
    const double a = q_.back();
    if (n_ == 1) return j_.back() + 2.0 * (std::asinh(q) - std::asinh(a));
    auto F = [this](double u) {
      if (std::isinf(u)) return 0.0;
      return -std::pow(u, 1.0 - n_) / (n_ - 1.0) + 0.5 * n_ * std::pow(u, -1.0 - n_) / (n_ + 1.0);
    };
    return j_.back() + 2.0 * (F(q) - F(a));
  }

  int n_;
  std::vector<double> q_, j_;
};

inline const G2Profile& g2_profile(int n) {
  static std::mutex mu;
  static std::map<int, std::unique_ptr<G2Profile>> cache;
  std::lock_guard lock(mu);
  auto& p = cache[n];
  if (!p) p = std::make_unique<G2Profile>(n);
  return *p;
}

namespace detail {

inline double g2_raw(double r, const Point& x, const Point& y) {
  const int n = x.dim();
  const double d = distance(x, y);
  const double q = std::sqrt(std::max(0.0, (r * r - x.norm2()) * (r * r - y.norm2()))) / (r * d);
  return std::pow(d, 1.0 - n) * g2_profile(n)(q);
}

}  // namespace detail

struct G2Calibration {
  int dim = 0;
  double constant = 0.0;       // C in G2 = C |x-y|^{1-n} J
  double center_residual = 0.0; // (-Delta)^{1/2} of the unit-C torsion at the center
  double residual_err = 0.0;
  std::vector<double> nodes, profile;  // radii and h_raw(rho)/sqrt(1-rho^2) at r = 1

  nlohmann::json to_json() const {
    return {{"center_residual", center_residual}, {"constant", constant}, {"dim", dim}, {"nodes", nodes},
            {"profile", profile}, {"residual_err", residual_err}};
  }
};

namespace detail {

// Unit-C torsion h_raw(x) = int_{B_1} |x-y|^{1-n} J dy as a radial field,
// written as sqrt(1 - |x|^2) q(|x|^2) with q interpolated at Chebyshev nodes in |x|^2.
struct RadialTorsion {
  std::vector<double> t_nodes, q_values;

  double q(double t) const {
    // barycentric interpolation, Chebyshev points of the first kind on [0,1]
    const std::size_t m = t_nodes.size();
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      const double diff = t - t_nodes[k];
      if (diff == 0.0) return q_values[k];
      const double w = (k % 2 ? -1.0 : 1.0) * std::sin((2.0 * k + 1.0) * kPi / (2.0 * m)) / diff;
      num += w * q_values[k];
      den += w;
    }
    return num / den;
  }

  ScalarField field(int n, double scale) const {
    ScalarField f;
    f.dim = n;
    f.smoothness = Smoothness::C0;
    f.decay = DecayHint::schwartz();
    f.feature_center = Point(n);
    f.support_radius = 1.0;
    f.feature_scale = 0.25;
    auto self = *this;
    f.eval = [self, scale](const Point& x) {
      const double t = x.norm2();
      return t >= 1.0 ? 0.0 : scale * std::sqrt(1.0 - t) * self.q(t);
    };
    return f;
  }
};

inline RadialTorsion unit_torsion(int n, const QuadratureSpec& spec) {
  RadialTorsion rt;
  const int m = 10;
  rt.t_nodes.resize(m);
  rt.q_values.resize(m);
  for (int k = 0; k < m; ++k) rt.t_nodes[static_cast<std::size_t>(k)] = 0.5 * (1.0 - std::cos((2.0 * k + 1.0) * kPi / (2.0 * m)));
  const auto vals = parallel_map<double>(static_cast<std::size_t>(m), [&](std::size_t k) {
    const Point x = Point::axis(n, 0, std::sqrt(rt.t_nodes[k]));
    auto F = [&](const Point& z) { return g2_raw(1.0, x, z); };
    return ray_integral(F, x, Point(n), 1.0, spec, Point::axis(n, 0)).value / std::sqrt(1.0 - rt.t_nodes[k]);
  });
  rt.q_values = vals;
  return rt;
}

}  // namespace detail

// The kernel form is scale covariant, so C depends on n only. It is fixed so
// that the computed solution for rhs = 1 has (-Delta)^{1/2} h = 1 at the center.
inline const G2Calibration& g2_calibration(int n) {
  static std::mutex mu;
  static std::map<int, G2Calibration> cache;
  std::lock_guard lock(mu);
  if (auto it = cache.find(n); it != cache.end()) return it->second;
  QuadratureSpec spec;
  spec.rel_tol = 1e-9;
  spec.abs_tol = 1e-12;
  const auto rt = detail::unit_torsion(n, spec);
  const QuadResult res = frac_lap_local(0.5, rt.field(n, 1.0), Point(n), spec);
  G2Calibration cal;
  cal.dim = n;
  cal.center_residual = res.value;
  cal.residual_err = res.err_est;
  cal.constant = 1.0 / res.value;
  for (double t : rt.t_nodes) cal.nodes.push_back(std::sqrt(t));
  cal.profile = rt.q_values;
  return cache[n] = cal;
}

inline double g2_eval(double r, const Point& x, const Point& y) {
  const int n = x.dim();
  detail::require_in_ball(r, x, "x must lie in the open ball");
  detail::require_in_ball(r, y, "y must lie in the open ball");
  require(distance(x, y) > 0.0, ErrorKind::InvalidArgument, "G2 is singular at coincident points");
  return g2_calibration(n).constant * detail::g2_raw(r, x, y);
}

// h(x) = int_{B_r} G2(x, y) rhs(y) dy by rays from x.
inline QuadResult g2_solve(double r, const ScalarField& rhs, const Point& x, const QuadratureSpec& spec) {
  spec.validate();
  const int n = rhs.dim;
  require(x.dim() == n, ErrorKind::InvalidDimension, "point/field dimension mismatch");
  detail::require_in_ball(r, x, "x must lie in the open ball");
  const double C = g2_calibration(n).constant;
  auto F = [&](const Point& z) {
    const double v = rhs(z);
    return v == 0.0 ? 0.0 : C * detail::g2_raw(r, x, z) * v;
  };
  const Point pole = rhs.center().dim() == n && distance(rhs.center(), x) > 0.0 ? rhs.center() - x : Point::axis(n, 0);
  QuadResult res = ray_integral(F, x, Point(n), r, spec, pole);
  if (!std::isfinite(res.value) || !std::isfinite(res.err_est))
    throw Error(ErrorKind::InvalidArgument, "rhs is not integrable against G2");
  enforce_budget(res, spec, "g2_solve");
  return res;
}

// The computed torsion (rhs = 1) on B_1 as a compactly supported field.
inline ScalarField g2_torsion_field(int n) {
  const auto& cal = g2_calibration(n);
  detail::RadialTorsion rt;
  for (double rho : cal.nodes) rt.t_nodes.push_back(rho * rho);
  rt.q_values = cal.profile;
  return rt.field(n, cal.constant);
}

// sup over the pairs of |G2(x,y)| |x-y|^{n-1}
inline double g2_kernel_bound_ratio(double r, const std::vector<std::pair<Point, Point>>& pairs) {
  double m = 0.0;
  for (const auto& [x, y] : pairs) {
    const int n = x.dim();
    m = std::max(m, std::abs(g2_eval(r, x, y)) * std::pow(distance(x, y), n - 1.0));
  }
  return m;
}

struct MaximumPrincipleReport {
  std::size_t samples = 0;
  std::size_t violations = 0;
  double min_value = std::numeric_limits<double>::infinity();
  double min_margin = std::numeric_limits<double>::infinity();  // min of h + err_est

  nlohmann::json to_json() const {
    return {{"min_margin", min_margin}, {"min_value", min_value}, {"samples", samples}, {"violations", violations}};
  }
};

// g2_solve on B_1 in n = 1 with random nonnegative right-hand sides (sums of
// up to three bumps) at random interior points.
inline MaximumPrincipleReport maximum_principle_check(std::size_t count, const QuadratureSpec& spec) {
  MaximumPrincipleReport rep;
  rep.samples = count;
  struct Sample {
    double value, err;
  };
  const auto out = parallel_map<Sample>(count, [&](std::size_t i) {
    SampleStream rng(spec.seed, i);
    const int parts = 1 + static_cast<int>(rng.uniform() * 3.0);
    std::vector<ScalarField> bumps;
    for (int k = 0; k < parts; ++k) {
      const double c = 1.6 * rng.uniform() - 0.8;
      const double rad = 0.05 + 0.3 * rng.uniform();
      bumps.push_back(bump(1, 0.1 + rng.uniform(), rad, Point::axis(1, 0, c)));
    }
    ScalarField rhs;
    rhs.dim = 1;
    rhs.smoothness = Smoothness::C2;
    rhs.decay = DecayHint::schwartz();
    rhs.eval = [bumps](const Point& z) {
      double s = 0.0;
      for (const auto& b : bumps) s += b(z);
      return s;
    };
    const Point x = Point::axis(1, 0, 1.98 * rng.uniform() - 0.99);
    const QuadResult h = g2_solve(1.0, rhs, x, spec);
    return Sample{h.value, h.err_est};
  });
  for (const auto& s : out) {
    rep.min_value = std::min(rep.min_value, s.value);
    rep.min_margin = std::min(rep.min_margin, s.value + s.err);
    if (s.value < -s.err) ++rep.violations;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Kernel handle and CSV export
// ---------------------------------------------------------------------------

struct BallKernel {
  enum class Kind { G1, IteratedG, Poisson, G2 };
  Kind kind = Kind::G1;
  int j = 0;  // for IteratedG
  double radius = 1.0;
  int dim = 3;
  double normalizer = 1.0;

  static BallKernel g1(int n, double r) { return {Kind::G1, 0, r, n, 1.0 / (n * (n - 2.0) * unit_ball_volume(n))}; }
  static BallKernel iterated(int n, double r, int j) { return {Kind::IteratedG, j, r, n, 1.0 / (n * (n - 2.0) * unit_ball_volume(n))}; }
  static BallKernel poisson(int n, double r) { return {Kind::Poisson, 0, r, n, PoissonHalfLap::normalizer(n)}; }
  static BallKernel g2(int n, double r) { return {Kind::G2, 0, r, n, g2_calibration(n).constant}; }

  double eval(const Point& x, const Point& y, const QuadratureSpec& spec = {}) const {
    switch (kind) {
      case Kind::G1: return g1_eval(radius, x, y);
      case Kind::IteratedG: return iterated_green(radius, j, x, y, spec).value;
      case Kind::Poisson: return PoissonHalfLap(dim, radius)(x, y);
      case Kind::G2: break;
    }
    return g2_eval(radius, x, y);
  }

  static const char* name(Kind k) {
    switch (k) {
      case Kind::G1: return "G1";
      case Kind::IteratedG: return "IteratedG";
      case Kind::Poisson: return "Poisson";
      case Kind::G2: break;
    }
    return "G2";
  }
};

// Rows x_1..x_n, y_1..y_n, value over all (x, y) combinations.
inline CsvTable kernel_grid_csv(const BallKernel& k, const std::vector<Point>& xs, const std::vector<Point>& ys,
                                const QuadratureSpec& spec = {}) {
  std::vector<std::string> header;
  for (int i = 0; i < k.dim; ++i) header.push_back("x" + std::to_string(i + 1));
  for (int i = 0; i < k.dim; ++i) header.push_back("y" + std::to_string(i + 1));
  header.push_back("value");
  CsvTable t(header);
  for (const auto& x : xs)
    for (const auto& y : ys) {
      std::vector<double> row;
      for (int i = 0; i < k.dim; ++i) row.push_back(x[i]);
      for (int i = 0; i < k.dim; ++i) row.push_back(y[i]);
      row.push_back(k.eval(x, y, spec));
      t.add_row(row);
    }
  return t;
}

}  // namespace qcurv
