#pragma once

// Fit-and-compare validators for kernel and decay inequalities: decay of
// (-Delta)^s of Schwartz and moment-vanishing functions, decay away from a
// compact support, and the two-kernel Riesz composition bound.

#include "qcurv/fields.hpp"
#include "qcurv/fraclap.hpp"
#include "qcurv/greens.hpp"
#include "qcurv/report.hpp"

namespace qcurv {

// Exponents are decay rates: a value behaving like r^-a reports a.
struct DecayReport {
  double fitted_exponent = 0.0;
  double predicted_exponent = 0.0;
  double r_min = 0.0, r_max = 0.0;
  double max_ratio = 0.0;  // max |value| r^predicted
  double tolerance = 0.1;
  bool all_zero = false;
  bool pass = false;
  std::vector<double> radii, values, errors, residuals;

  nlohmann::json to_json() const {
    return {{"all_zero", all_zero}, {"errors", errors}, {"fitted_exponent", fitted_exponent}, {"max_ratio", max_ratio},
            {"pass", pass}, {"predicted_exponent", predicted_exponent}, {"radii", radii}, {"residuals", residuals},
            {"tolerance", tolerance}, {"values", values}, {"window", {r_min, r_max}}};
  }

  CsvTable to_csv() const {
    CsvTable t({"r", "value", "err_est", "fit_residual"});
    for (std::size_t i = 0; i < radii.size(); ++i) t.add_row({radii[i], values[i], errors[i], residuals.empty() ? 0.0 : residuals[i]});
    return t;
  }
};

// OLS of log|value| on log r. Identically zero data passes trivially.
inline DecayReport fit_decay(const std::vector<double>& radii, const std::vector<double>& values,
                             const std::vector<double>& errors, double predicted, double tolerance) {
  DecayReport rep;
  rep.radii = radii;
  rep.values = values;
  rep.errors = errors;
  rep.predicted_exponent = predicted;
  rep.tolerance = tolerance;
  rep.r_min = *std::min_element(radii.begin(), radii.end());
  rep.r_max = *std::max_element(radii.begin(), radii.end());
  rep.all_zero = std::all_of(values.begin(), values.end(), [](double v) { return v == 0.0; });
  if (rep.all_zero) {
    rep.pass = true;
    return rep;
  }
  std::vector<double> mags;
  for (double v : values) mags.push_back(std::abs(v));
  const auto [slope, icpt] = loglog_fit(radii, mags);
  rep.fitted_exponent = -slope;
  for (std::size_t i = 0; i < radii.size(); ++i) {
    rep.residuals.push_back(std::log(mags[i]) - (icpt + slope * std::log(radii[i])));
    rep.max_ratio = std::max(rep.max_ratio, mags[i] * std::pow(radii[i], predicted));
  }
  rep.pass = std::isfinite(rep.max_ratio) && std::abs(rep.fitted_exponent - predicted) <= tolerance * std::abs(predicted);
  return rep;
}

// Log-spaced radii over [r_min, r_max], at least six per decade.
inline std::vector<double> log_window(double r_min, double r_max, int per_decade = 6) {
  require(r_min > 0.0 && r_max > r_min, ErrorKind::InvalidArgument, "window must satisfy 0 < r_min < r_max");
  require(r_max / r_min >= 8.0, ErrorKind::InvalidArgument, "window too narrow for a decay fit (ratio below 8)");
  const double decades = std::log10(r_max / r_min);
  const int m = std::max(6, static_cast<int>(std::ceil(per_decade * decades)));
  std::vector<double> r;
  for (int i = 0; i <= m; ++i) r.push_back(r_min * std::pow(r_max / r_min, static_cast<double>(i) / m));
  return r;
}

// (-Delta)^s phi along the ray from the feature center in direction dir.
inline DecayReport decay_along_ray(const ScalarField& phi, const FracLapOperator& op, const std::vector<double>& radii,
                                   const Point& dir, double predicted, double tolerance, const QuadratureSpec& spec) {
  const Point u = dir * (1.0 / dir.norm());
  const Point c = phi.center();
  struct V {
    double value, err;
  };
  const auto vals = parallel_map<V>(radii.size(), [&](std::size_t i) {
    const QuadResult q = frac_lap(op, phi, c + u * radii[i], spec);
    return V{q.value, q.err_est};
  });
  std::vector<double> v, e;
  for (const auto& x : vals) {
    v.push_back(x.value);
    e.push_back(x.err);
  }
  return fit_decay(radii, v, e, predicted, tolerance);
}

inline DecayReport schwartz_decay_check(const ScalarField& phi, const FracOrder& s, double r_min, double r_max,
                                        const QuadratureSpec& spec, double tolerance = 0.1) {
  const int n = phi.dim;
  const FracLapOperator op(n, s);
  return decay_along_ray(phi, op, log_window(r_min, r_max), Point::axis(n, 0), n + 2.0 * s.total(), tolerance, spec);
}

struct MomentCheck {
  MultiIndex alpha;
  double value = 0.0, err_est = 0.0;
};

// All moments of order <= k; throws MomentVerification when one exceeds 1e-10
// (relative to the matching absolute moment when that is larger than 1).
inline std::vector<MomentCheck> verify_moments(const ScalarField& phi, int k, const QuadratureSpec& spec) {
  std::vector<MomentCheck> out;
  for (const auto& a : monomials_up_to(phi.dim, k)) {
    ScalarField m = phi, am = phi;
    m.eval = [a, fe = phi.eval](const Point& y) { return monomial(a, y) * fe(y); };
    am.eval = [a, fe = phi.eval](const Point& y) { return std::abs(monomial(a, y) * fe(y)); };
    const QuadResult q = truncated_integral(m, FullSpace{}, spec);
    const double scale = std::max(1.0, truncated_integral(am, FullSpace{}, spec).value);
    if (!(std::abs(q.value) <= 1e-10 * scale))
      throw Error(ErrorKind::MomentVerification, "moment of order <= k does not vanish to 1e-10");
    out.push_back({a, q.value, q.err_est});
  }
  return out;
}

// Decay of (-Delta)^sigma of the built-in family with moments vanishing
// through order k; k = -1 is the plain Gaussian.
inline DecayReport moment_decay_check(int k, double sigma, double r_min, double r_max, const QuadratureSpec& spec,
                                      int n = 1, double tolerance = 0.1) {
  require(sigma > 0.0 && sigma < 1.0, ErrorKind::InvalidArgument, "sigma must lie in (0,1)");
  if (k < 0) return schwartz_decay_check(gaussian(n), FracOrder(0, sigma), r_min, r_max, spec, tolerance);
  const ScalarField phi = moment_vanishing_field(n, k);
  verify_moments(phi, k, spec);
  const FracLapOperator op(n, FracOrder(0, sigma));
  return decay_along_ray(phi, op, log_window(r_min, r_max), Point::axis(n, 0), n + 2.0 * sigma + k + 1.0, tolerance, spec);
}

// ---------------------------------------------------------------------------
// Decay away from a compact support
// ---------------------------------------------------------------------------

struct SupportDecayReport {
  DecayReport far;                 // delta >= 1, predicted rate n + 2s
  std::vector<double> near_distances, near_values;
  double near_exponent = 0.0;      // -2s + k + sigma_h; positive means bounded
  double near_max = 0.0;
  bool near_bounded = true;
  bool pass = false;

  nlohmann::json to_json() const {
    return {{"far", far.to_json()}, {"near_bounded", near_bounded}, {"near_distances", near_distances},
            {"near_exponent", near_exponent}, {"near_max", near_max}, {"near_values", near_values}, {"pass", pass}};
  }
};

// (-Delta)^s phi at points a distance delta outside the support ball of phi,
// for phi of Hoelder class C^{k, sigma_h}. Distances below 1 form the near
// regime, where the bound is max{1, delta^{-2s+k+sigma_h}}; the rest are fitted
// against delta^{-(n+2s)}.
inline SupportDecayReport support_decay_check(const ScalarField& phi, int k, double sigma_h, double s,
                                              const std::vector<double>& distances, const QuadratureSpec& spec,
                                              double tolerance = 0.1) {
  require(phi.support_radius.has_value(), ErrorKind::Precondition, "phi must declare a support ball");
  require(s > 0.0 && s < 1.0, ErrorKind::InvalidArgument, "s must lie in (0,1)");
  for (double d : distances) require(d > 0.0, ErrorKind::InvalidArgument, "sample points must lie off the support");
  const int n = phi.dim;
  const FracLapOperator op(n, FracOrder(0, s));
  const Point c = phi.center();
  const double sr = *phi.support_radius;
  struct V {
    double value, err;
  };
  const auto vals = parallel_map<V>(distances.size(), [&](std::size_t i) {
    const QuadResult q = frac_lap(op, phi, c + Point::axis(n, 0, sr + distances[i]), spec);
    return V{q.value, q.err_est};
  });
  SupportDecayReport rep;
  rep.near_exponent = -2.0 * s + k + sigma_h;
  std::vector<double> fr, fv, fe;
  for (std::size_t i = 0; i < distances.size(); ++i) {
    if (distances[i] < 1.0) {
      rep.near_distances.push_back(distances[i]);
      rep.near_values.push_back(vals[i].value);
      rep.near_max = std::max(rep.near_max, std::abs(vals[i].value));
    } else {
      fr.push_back(distances[i]);
      fv.push_back(vals[i].value);
      fe.push_back(vals[i].err);
    }
  }
  // with a positive near exponent the bound is O(1): values must not grow as delta -> 0
  if (rep.near_values.size() >= 2 && rep.near_exponent > 0.0) {
    std::vector<std::pair<double, double>> nv;
    for (std::size_t i = 0; i < rep.near_distances.size(); ++i) nv.emplace_back(rep.near_distances[i], std::abs(rep.near_values[i]));
    std::sort(nv.begin(), nv.end());
    rep.near_bounded = nv.front().second <= 2.0 * std::max(nv.back().second, 1e-300) + 1e-12 && std::isfinite(rep.near_max);
  }
  if (fr.size() >= 2) {
    rep.far = fit_decay(fr, fv, fe, n + 2.0 * s, tolerance);
  } else {
    rep.far.pass = true;
    rep.far.all_zero = true;
  }
  rep.pass = rep.far.pass && rep.near_bounded;
  return rep;
}

// ---------------------------------------------------------------------------
// Riesz composition
// ---------------------------------------------------------------------------

struct RieszReport {
  int dim = 0;
  double p = 0.0, q = 0.0;
  std::string mode;  // "full_space" or "ball"
  double ball_radius = 0.0;
  std::vector<double> separations, values, errors, scaled;
  double spread = 0.0;        // full space: max - min of value |x-y|^{p+q-n}
  double combined_err = 0.0;  // full space: sum of scaled err_est
  double fitted_slope = 0.0;  // ball: d value / d log(1/|x-y|)
  double slope_target = 0.0;  // ball: |S^{n-1}|
  bool pass = false;

  nlohmann::json to_json() const {
    return {{"ball_radius", ball_radius}, {"combined_err", combined_err}, {"dim", dim}, {"errors", errors},
            {"fitted_slope", fitted_slope}, {"mode", mode}, {"p", p}, {"pass", pass}, {"q", q}, {"scaled", scaled},
            {"separations", separations}, {"slope_target", slope_target}, {"spread", spread}, {"values", values}};
  }
};

// int_Omega |x-z|^-p |y-z|^-q dz with x = 0, y = d e_1. p + q > n: Omega = R^n
// and value d^{p+q-n} must be the same for every d. p + q = n: Omega = B_R(y)
// and the value must grow like |S^{n-1}| log(1/d).
inline RieszReport riesz_composition_check(int n, double p, double q, const std::vector<double>& separations,
                                           const QuadratureSpec& spec, double ball_radius = 2.0,
                                           double slope_tolerance = 0.15) {
  require(p < n && q < n, ErrorKind::Precondition, "p and q must be below n");
  require(p > 0.0 && q > 0.0, ErrorKind::InvalidArgument, "p and q must be positive");
  require(p + q >= n, ErrorKind::Precondition, "p + q below n has no singular composition");
  require(separations.size() >= 2, ErrorKind::InvalidArgument, "need two or more separations");
  RieszReport rep;
  rep.dim = n;
  rep.p = p;
  rep.q = q;
  const bool full = p + q > n;
  rep.mode = full ? "full_space" : "ball";
  rep.ball_radius = full ? 0.0 : ball_radius;
  const Point x(n);
  for (double d : separations) {
    require(d > 0.0, ErrorKind::InvalidArgument, "separations must be positive");
    if (!full) require(d < 0.5 * ball_radius, ErrorKind::InvalidArgument, "separation must be small against the ball");
    const Point y = Point::axis(n, 0, d);
    SingularKernel k;
    k.eval = [x, p](const Point& z) { return std::pow(distance(x, z), -p); };
    k.singularity = p;
    k.tail_exponent = p;
    k.tail_coeff = [d, p](double R) { return std::pow(R / std::max(R - d, 0.5 * R), p); };
    ScalarField f;
    f.dim = n;
    f.feature_center = y;
    f.feature_scale = 0.25 * d;
    if (full) {
      f.eval = [y, q](const Point& z) { return std::pow(distance(y, z), -q); };
      f.decay = DecayHint::power(q);
    } else {
      const double R = ball_radius;
      f.eval = [y, q, R](const Point& z) {
        const double s = distance(y, z);
        return s < R ? std::pow(s, -q) : 0.0;
      };
      f.smoothness = Smoothness::C0;
      f.decay = DecayHint::schwartz();
      f.support_radius = R;
    }
    const QuadResult r = singular_convolution(k, f, x, spec);
    rep.separations.push_back(d);
    rep.values.push_back(r.value);
    rep.errors.push_back(r.err_est);
    rep.scaled.push_back(r.value * std::pow(d, p + q - n));
  }
  if (full) {
    const auto [lo, hi] = std::minmax_element(rep.scaled.begin(), rep.scaled.end());
    rep.spread = *hi - *lo;
    for (std::size_t i = 0; i < rep.errors.size(); ++i) rep.combined_err += rep.errors[i] * std::pow(rep.separations[i], p + q - n);
    rep.pass = rep.spread <= 3.0 * rep.combined_err;
  } else {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double m = static_cast<double>(rep.values.size());
    for (std::size_t i = 0; i < rep.values.size(); ++i) {
      const double a = std::log(1.0 / rep.separations[i]), b = rep.values[i];
      sx += a;
      sy += b;
      sxx += a * a;
      sxy += a * b;
    }
    rep.fitted_slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    rep.slope_target = unit_sphere_area_in(n);
    rep.pass = std::abs(rep.fitted_slope - rep.slope_target) <= slope_tolerance * rep.slope_target;
  }
  return rep;
}

}  // namespace qcurv
