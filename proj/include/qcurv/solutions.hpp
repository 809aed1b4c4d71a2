#pragma once

// Checks of the Q-curvature equation (-Delta)^{n/2} u = (n-1)! e^{nu} on
// explicit and synthetic fields: pointwise residuals, the volume V and
// alpha = 2V/|S^n|, the decomposition u = v + P with the log-potential v,
// decay of D^beta v, and the polynomial/Laplacian criteria.

#include "qcurv/estimates.hpp"
#include "qcurv/fields.hpp"
#include "qcurv/fraclap.hpp"
#include "qcurv/potentials.hpp"

namespace qcurv {

// ---------------------------------------------------------------------------
// Residuals and volume
// ---------------------------------------------------------------------------

struct ResidualRow {
  Point point;
  double lhs = 0.0, rhs = 0.0, residual = 0.0, err_est = 0.0;
};

inline std::vector<ResidualRow> pde_residual(const ScalarField& u, const std::vector<Point>& points,
                                             const QuadratureSpec& spec) {
  const int n = u.dim;
  const FracLapOperator op(n, 0.5 * n);
  const double fact = factorial(n - 1);
  return parallel_map<ResidualRow>(points.size(), [&](std::size_t i) {
    const Point& x = points[i];
    const QuadResult lhs = frac_lap(op, u, x, spec);
    ResidualRow r;
    r.point = x;
    r.lhs = lhs.value;
    r.rhs = fact * std::exp(n * u(x));
    r.residual = std::abs(r.lhs - r.rhs);
    r.err_est = lhs.err_est;
    return r;
  });
}

inline CsvTable residual_csv(const std::vector<ResidualRow>& rows, int n) {
  std::vector<std::string> h;
  for (int i = 0; i < n; ++i) h.push_back("x" + std::to_string(i + 1));
  for (const char* c : {"lhs", "rhs", "residual", "err_est"}) h.emplace_back(c);
  CsvTable t(h);
  for (const auto& r : rows) {
    std::vector<double> row;
    for (int i = 0; i < n; ++i) row.push_back(r.point[i]);
    row.insert(row.end(), {r.lhs, r.rhs, r.residual, r.err_est});
    t.add_row(row);
  }
  return t;
}

struct VolumeAlpha {
  double V = 0.0, alpha = 0.0, err_est = 0.0;

  nlohmann::json to_json() const { return {{"V", V}, {"alpha", alpha}, {"err_est", err_est}}; }
};

// e^{nu} as a field, with the caller's decay promise for it.
inline ScalarField exp_nu_field(const ScalarField& u, const DecayHint& exp_decay) {
  const int n = u.dim;
  ScalarField f;
  f.dim = n;
  f.decay = exp_decay;
  f.feature_center = u.feature_center;
  f.feature_scale = u.feature_scale;
  f.eval = [ue = u.eval, n](const Point& x) {
    const double v = ue(x);
    return v == -std::numeric_limits<double>::infinity() ? 0.0 : std::exp(n * v);
  };
  return f;
}

// V = int e^{nu} and alpha = 2V/|S^n|.
inline VolumeAlpha volume_and_alpha(const ScalarField& u, const DecayHint& exp_decay, const QuadratureSpec& spec) {
  const int n = u.dim;
  const QuadResult q = truncated_integral(exp_nu_field(u, exp_decay), FullSpace{}, spec);
  VolumeAlpha va;
  va.V = q.value;
  va.err_est = q.err_est;
  va.alpha = 2.0 * q.value / unit_sphere_area_in(n + 1);
  return va;
}

inline VolumeAlpha volume_and_alpha(const SphericalSolution& s, const QuadratureSpec& spec) {
  return volume_and_alpha(s.field(), s.exp_nu_decay(), spec);
}

// ---------------------------------------------------------------------------
// Decomposition u = v + P
// ---------------------------------------------------------------------------

struct AsymptoticFit {
  double alpha_hat = 0.0;
  double alpha_predicted = 0.0;  // 2V/|S^n| from the certified volume
  double r_min = 0.0, r_max = 0.0;
  double residual = 0.0;  // max |v/log r + alpha_hat|
  std::vector<double> radii, v_means, v_mins, v_maxs;

  // v >= -alpha log r - C: C from the inner half of the radii, checked on the outer half
  double lower_constant = 0.0;
  bool lower_holds = false;
  // v <= (-alpha + eps) log r for r >= R_eps
  double upper_eps = 0.1;
  double upper_R = 0.0;           // exp(C0/eps) with C0 the fitted constant of v + alpha log r
  bool upper_holds = false;       // at every sampled radius >= upper_R
  bool upper_trend = false;       // (v + alpha log r)/log r decreases over the outer half

  nlohmann::json to_json() const {
    return {{"alpha_hat", alpha_hat}, {"alpha_predicted", alpha_predicted}, {"lower_constant", lower_constant},
            {"lower_holds", lower_holds}, {"radii", radii}, {"residual", residual}, {"upper_R", upper_R},
            {"upper_eps", upper_eps}, {"upper_holds", upper_holds}, {"upper_trend", upper_trend}, {"v_maxs", v_maxs},
            {"v_means", v_means}, {"v_mins", v_mins}, {"window", {r_min, r_max}}};
  }
};

struct DecompositionOptions {
  double fit_min = 1e2, fit_max = 1e4;
  int fit_radii = 12;
  // density of the log-potential; by default (n-1)! e^{nu} with exp_nu_decay
  std::optional<ScalarField> density;
  std::optional<DecayHint> exp_nu_decay;
  bool derivatives = true;
  double deriv_min = 10.0, deriv_max = 80.0;
  double upper_eps = 0.1;
};

struct Decomposition {
  Polynomial P{1};
  int deg_P = 0;  // the zero polynomial counts as degree 0
  double fit_residual = 0.0;   // max |u - v - P| on the grid
  double prune_threshold = 0.0;
  double v_err = 0.0;          // max err_est of v on the grid
  AsymptoticFit fit;
  std::map<MultiIndex, DecayReport> derivative_decay;

  nlohmann::json to_json() const {
    nlohmann::json dd = nlohmann::json::object();
    for (const auto& [b, r] : derivative_decay) {
      std::string key;
      for (int e : b) key += std::to_string(e);
      dd[key] = r.to_json();
    }
    return {{"P", P.to_json()}, {"deg_P", deg_P}, {"derivative_decay", dd}, {"fit", fit.to_json()},
            {"fit_residual", fit_residual}, {"prune_threshold", prune_threshold}, {"v_err", v_err}};
  }
};

inline std::vector<Point> decomposition_grid(int n) {
  std::vector<Point> g;
  if (n == 1) {
    for (int i = -2; i <= 2; ++i) g.push_back(Point::axis(1, 0, i));
    return g;
  }
  const int total = static_cast<int>(std::pow(3, n));
  for (int k = 0; k < total; ++k) {
    Point p(n);
    int m = k;
    for (int i = 0; i < n; ++i) {
      p[i] = (m % 3) - 1;
      m /= 3;
    }
    g.push_back(p);
  }
  return g;
}

// The 2n points +-r e_i.
inline std::vector<Point> axis_points(int n, double r) {
  std::vector<Point> pts;
  for (int i = 0; i < n; ++i) {
    pts.push_back(Point::axis(n, i, r));
    pts.push_back(Point::axis(n, i, -r));
  }
  return pts;
}

inline ScalarField decomposition_density(const ScalarField& u, const DecompositionOptions& opt) {
  if (opt.density) return *opt.density;
  if (!opt.exp_nu_decay) throw Error(ErrorKind::TailNotCertified, "no decay promise for e^{nu}; pass exp_nu_decay or a density");
  ScalarField d = exp_nu_field(u, *opt.exp_nu_decay);
  const double fact = factorial(u.dim - 1);
  d.eval = [e = d.eval, fact](const Point& x) { return fact * e(x); };
  return d;
}

inline Decomposition asymptotic_decomposition(const ScalarField& u, const QuadratureSpec& spec,
                                              const DecompositionOptions& opt = {}) {
  const int n = u.dim;
  require(opt.fit_min > 0.0 && opt.fit_max / opt.fit_min >= 100.0, ErrorKind::InvalidArgument,
          "fit window must span at least two decades");
  require(opt.fit_radii >= 4, ErrorKind::InvalidArgument, "need at least four fit radii");
  const ScalarField density = decomposition_density(u, opt);
  const LogPotential lp(density, spec);
  Decomposition out;
  out.P = Polynomial(n);

  // P from u - v on a small grid
  const auto grid = decomposition_grid(n);
  const auto vg = parallel_map<QuadResult>(grid.size(), [&](std::size_t i) { return log_potential_eval(lp, grid[i]); });
  std::vector<std::pair<Point, double>> samples;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    samples.emplace_back(grid[i], u(grid[i]) - vg[i].value);
    out.v_err = std::max(out.v_err, vg[i].err_est);
  }
  const PolyFit pf = poly_fit(samples, n - 1);
  out.prune_threshold = std::max(1e-6, 10.0 * out.v_err);
  for (const auto& [a, c] : pf.poly.coeffs())
    if (std::abs(c) >= out.prune_threshold) out.P.set(a, c);
  out.deg_P = std::max(out.P.degree(), 0);
  for (const auto& [x, val] : samples) out.fit_residual = std::max(out.fit_residual, std::abs(val - out.P(x)));

  // slope of the sphere-mean of v against log r
  AsymptoticFit& fit = out.fit;
  fit.r_min = opt.fit_min;
  fit.r_max = opt.fit_max;
  fit.upper_eps = opt.upper_eps;
  const QuadResult mass = truncated_integral(density, FullSpace{}, spec);
  fit.alpha_predicted = 2.0 * (mass.value / factorial(n - 1)) / unit_sphere_area_in(n + 1);
  for (int i = 0; i < opt.fit_radii; ++i)
    fit.radii.push_back(opt.fit_min * std::pow(opt.fit_max / opt.fit_min, static_cast<double>(i) / (opt.fit_radii - 1)));
  const Point c = density.center();
  struct Shell {
    double mean, lo, hi;
  };
  const auto shells = parallel_map<Shell>(fit.radii.size(), [&](std::size_t i) {
    const auto pts = axis_points(n, fit.radii[i]);
    CompensatedSum s;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& p : pts) {
      const double v = log_potential_eval(lp, c + p).value;
      s += v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    return Shell{s.value() / static_cast<double>(pts.size()), lo, hi};
  });
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < shells.size(); ++i) {
    fit.v_means.push_back(shells[i].mean);
    fit.v_mins.push_back(shells[i].lo);
    fit.v_maxs.push_back(shells[i].hi);
    const double a = std::log(fit.radii[i]), b = shells[i].mean;
    sx += a;
    sy += b;
    sxx += a * a;
    sxy += a * b;
  }
  const double m = static_cast<double>(shells.size());
  const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  fit.alpha_hat = -slope;
  for (std::size_t i = 0; i < shells.size(); ++i) {
    const double L = std::log(fit.radii[i]);
    fit.residual = std::max({fit.residual, std::abs(fit.v_mins[i] / L + fit.alpha_hat), std::abs(fit.v_maxs[i] / L + fit.alpha_hat)});
  }

  // sandwich, with alpha from the certified volume
  const double alpha = fit.alpha_predicted;
  const std::size_t half = shells.size() / 2;
  const double tol = 10.0 * std::max(spec.abs_tol, spec.rel_tol) * (1.0 + std::abs(alpha) * std::log(opt.fit_max));
  fit.lower_constant = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < half; ++i)
    fit.lower_constant = std::max(fit.lower_constant, -(fit.v_mins[i] + alpha * std::log(fit.radii[i])));
  fit.lower_holds = std::isfinite(fit.lower_constant);
  for (std::size_t i = half; i < shells.size(); ++i)
    fit.lower_holds = fit.lower_holds && fit.v_mins[i] + alpha * std::log(fit.radii[i]) >= -fit.lower_constant - tol;
  // v + alpha log r approaches a constant c; R_eps = exp(c/eps) from its outer-half maximum
  double c_fit = 0.0;
  for (std::size_t i = half; i < shells.size(); ++i) c_fit = std::max(c_fit, fit.v_maxs[i] + alpha * std::log(fit.radii[i]));
  fit.upper_R = c_fit > 0.0 ? std::exp(c_fit / opt.upper_eps) : fit.radii.front();
  fit.upper_holds = true;
  for (std::size_t i = 0; i < shells.size(); ++i)
    if (fit.radii[i] >= fit.upper_R)
      fit.upper_holds = fit.upper_holds && fit.v_maxs[i] <= (-alpha + opt.upper_eps) * std::log(fit.radii[i]) + tol;
  fit.upper_trend = true;
  for (std::size_t i = half + 1; i < shells.size(); ++i) {
    const double g0 = (fit.v_maxs[i - 1] + alpha * std::log(fit.radii[i - 1])) / std::log(fit.radii[i - 1]);
    const double g1 = (fit.v_maxs[i] + alpha * std::log(fit.radii[i])) / std::log(fit.radii[i]);
    fit.upper_trend = fit.upper_trend && g1 <= g0 + tol;
  }

  // decay of D^beta v, 1 <= |beta| <= n-1, along a direction off every coordinate plane
  if (opt.derivatives && n >= 2) {
    Point dir(n);
    for (int i = 0; i < n; ++i) dir[i] = i + 1.0;
    dir = dir * (1.0 / dir.norm());
    const auto radii = log_window(opt.deriv_min, opt.deriv_max);
    for (int order = 1; order <= n - 1; ++order) {
      for (const auto& beta : monomials_up_to(n, order)) {
        if (total_degree(beta) != order) continue;
        struct V {
          double value, err;
        };
        const auto vals = parallel_map<V>(radii.size(), [&](std::size_t i) {
          const QuadResult q = log_potential_derivative(lp, c + dir * radii[i], beta);
          return V{q.value, q.err_est};
        });
        std::vector<double> v, e;
        for (const auto& x : vals) {
          v.push_back(x.value);
          e.push_back(x.err);
        }
        out.derivative_decay[beta] = fit_decay(radii, v, e, order, 0.15);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Polynomial and Laplacian criteria
// ---------------------------------------------------------------------------

struct LaplacianLimit {
  int j = 0;
  double limit = 0.0;  // fitted a in a + b/r^2
  double rate_coeff = 0.0;
  std::vector<double> radii, means;

  nlohmann::json to_json() const {
    return {{"j", j}, {"limit", limit}, {"means", means}, {"radii", radii}, {"rate_coeff", rate_coeff}};
  }
};

struct GrowthReport {
  int deg_P = 0;
  double sup_quadratic_ratio = 0.0;  // max |u|/|x|^2 over the outer radii
  std::vector<double> quadratic_radii, quadratic_ratios;
  std::vector<LaplacianLimit> laplacian_limits;

  nlohmann::json to_json() const {
    nlohmann::json ll = nlohmann::json::array();
    for (const auto& l : laplacian_limits) ll.push_back(l.to_json());
    return {{"deg_P", deg_P}, {"laplacian_limits", ll}, {"quadratic_radii", quadratic_radii},
            {"quadratic_ratios", quadratic_ratios}, {"sup_quadratic_ratio", sup_quadratic_ratio}};
  }
};

struct GrowthOptions {
  std::vector<double> quadratic_radii{1e1, 1e2, 1e3, 1e4};
  std::vector<double> laplacian_radii{12.5, 25.0, 50.0, 100.0};
};

// Delta^j u = (-1)^j (-Delta)^j u from the registered closures, averaged over
// the axis points of growing spheres and extrapolated with a + b/r^2 on the
// last three radii.
inline GrowthReport growth_criteria(const ScalarField& u, const Decomposition& dec, const GrowthOptions& opt = {}) {
  const int n = u.dim;
  GrowthReport rep;
  rep.deg_P = dec.deg_P;
  const Point c = u.center();
  for (double r : opt.quadratic_radii) {
    double m = 0.0;
    for (const auto& p : axis_points(n, r)) m = std::max(m, std::abs(u(c + p)) / (r * r));
    rep.quadratic_radii.push_back(r);
    rep.quadratic_ratios.push_back(m);
  }
  const std::size_t outer = rep.quadratic_ratios.size() / 2;
  for (std::size_t i = outer; i < rep.quadratic_ratios.size(); ++i)
    rep.sup_quadratic_ratio = std::max(rep.sup_quadratic_ratio, rep.quadratic_ratios[i]);

  require(opt.laplacian_radii.size() >= 3, ErrorKind::InvalidArgument, "need three or more radii for the limit fit");
  for (int j = 1; j <= (n - 1) / 2; ++j) {
    const ScalarField lj = u.neg_lap_field(j);
    const double sign = j % 2 ? -1.0 : 1.0;
    LaplacianLimit L;
    L.j = j;
    for (double r : opt.laplacian_radii) {
      const auto pts = axis_points(n, r);
      CompensatedSum s;
      for (const auto& p : pts) s += sign * lj(c + p);
      L.radii.push_back(r);
      L.means.push_back(s.value() / static_cast<double>(pts.size()));
    }
    // least squares for a + b t, t = r^-2, on the last three radii
    double st = 0, sv = 0, stt = 0, stv = 0;
    const std::size_t k0 = L.radii.size() - 3;
    for (std::size_t k = k0; k < L.radii.size(); ++k) {
      const double t = 1.0 / (L.radii[k] * L.radii[k]), v = L.means[k];
      st += t;
      sv += v;
      stt += t * t;
      stv += t * v;
    }
    const double b = (3.0 * stv - st * sv) / (3.0 * stt - st * st);
    L.rate_coeff = b;
    L.limit = (sv - b * st) / 3.0;
    rep.laplacian_limits.push_back(L);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Fixtures
// ---------------------------------------------------------------------------

// Analyzer fixture, not a solution of the equation: u = v_f + 5 - |x|^2 in
// R^3 with v_f the log-potential of a unit-mass bump. -Delta v_f =
// (1/gamma_3) int f(y) |x-y|^-2 dy is registered as the Laplacian closure.
struct SyntheticFixture {
  ScalarField u;
  ScalarField density;
};

inline SyntheticFixture synthetic_quadratic_fixture(const QuadratureSpec& spec = {}) {
  const int n = 3;
  SyntheticFixture fx;
  fx.density = bump(n, 1.0, 1.0);
  const auto lp = std::make_shared<LogPotential>(fx.density, spec);
  const double gamma = geom_constants(n).gamma_n;
  fx.u.dim = n;
  fx.u.decay = DecayHint::poly_growth(2.0);
  fx.u.feature_center = Point(n);
  fx.u.eval = [lp](const Point& x) { return log_potential_eval(*lp, x).value + 5.0 - x.norm2(); };
  const ScalarField dens = fx.density;
  fx.u.neg_lap_powers = {[dens, gamma, spec](const Point& x) {
    SingularKernel k;
    k.eval = [x](const Point& y) { return 1.0 / distance(x, y) / distance(x, y); };
    k.singularity = 2.0;
    k.tail_exponent = 2.0;
    k.tail_coeff = [](double) { return 1.0; };
    return singular_convolution(k, dens, x, spec).value / gamma + 6.0;
  }};
  return fx;
}

}  // namespace qcurv
