#pragma once

// Command-line front end. Every subcommand reads one JSON config (flags
// override its keys), writes a CSV table, a JSON report and a manifest into
// the output directory, and in --check mode compares the report against the
// acceptance tolerances.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qcurv/estimates.hpp"
#include "qcurv/greens.hpp"
#include "qcurv/potentials.hpp"
#include "qcurv/report.hpp"
#include "qcurv/solutions.hpp"

namespace qcurv::cli {

inline constexpr const char* kToolVersion = "0.3.0";

enum ExitCode : int { kOk = 0, kInvalidConfig = 1, kCertification = 2, kCheckFailed = 3 };

inline int exit_code_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::TailNotCertified:
    case ErrorKind::MomentVerification:
    case ErrorKind::BudgetExhausted:
    case ErrorKind::SingularFit: return kCertification;
    default: return kInvalidConfig;
  }
}

// Typed access to the merged config; type errors become Config errors.
class Config {
 public:
  explicit Config(nlohmann::json j = nlohmann::json::object()) : j_(std::move(j)) {
    require(j_.is_object(), ErrorKind::Config, "config must be a JSON object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  const nlohmann::json& raw() const { return j_; }

  template <class T>
  T get(const std::string& key, T fallback) const {
    if (!j_.contains(key)) return fallback;
    try {
      return j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::Config, key + ": " + e.what());
    }
  }

  std::vector<Point> points(const std::string& key, int n, std::vector<Point> fallback) const {
    if (!j_.contains(key)) return fallback;
    std::vector<Point> out;
    for (const auto& c : get<std::vector<std::vector<double>>>(key, {})) {
      require(static_cast<int>(c.size()) == n, ErrorKind::Config, "point dimension does not match n");
      out.push_back(Point::from(c));
    }
    return out;
  }

 private:
  nlohmann::json j_;
};

struct Check {
  std::string name;
  bool pass = false;
  std::string detail;
};

inline std::string fmt(double v) { return format_number(v); }

// What a subcommand produces. `tables` maps file stems to CSV tables.
struct Outcome {
  nlohmann::json report = nlohmann::json::object();
  std::map<std::string, CsvTable> tables;
  std::vector<Check> checks;

  void check(std::string name, bool pass, std::string detail) {
    checks.push_back({std::move(name), pass, std::move(detail)});
  }
  bool all_pass() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }
};

namespace detail {

inline std::vector<Point> default_residual_points(int n) {
  if (n == 1) {
    std::vector<Point> p;
    for (double x : {0.0, 0.5, -0.5, 2.0, -2.0, 10.0, -10.0}) p.push_back(Point::axis(1, 0, x));
    return p;
  }
  return {Point(n), Point::axis(n, 0, 1.0), Point::axis(n, 0, 3.0)};
}

inline void require_field(const Config& cfg, std::initializer_list<const char*> allowed) {
  const auto f = cfg.get<std::string>("field", *allowed.begin());
  for (const char* a : allowed)
    if (f == a) return;
  throw Error(ErrorKind::Config, "unsupported field '" + f + "'");
}

inline SphericalSolution spherical_from(const Config& cfg) {
  const int n = cfg.get("n", 1);
  require(n == 1 || n == 3 || n == 5, ErrorKind::Config, "n must be 1, 3 or 5");
  const double lambda = cfg.get("lambda", 1.0);
  require(lambda > 0.0, ErrorKind::Config, "lambda must be positive");
  const auto c = cfg.points("center", n, {Point(n)});
  require(c.size() == 1, ErrorKind::Config, "center must be a single point");
  return SphericalSolution(lambda, c.front());
}

inline std::string index_name(const MultiIndex& a) {
  std::string s;
  for (int e : a) s += std::to_string(e);
  return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

inline Outcome run_residual(const Config& cfg, const QuadratureSpec& spec) {
  detail::require_field(cfg, {"spherical"});
  const SphericalSolution s = detail::spherical_from(cfg);
  const int n = s.dim();
  const auto pts = cfg.points("points", n, detail::default_residual_points(n));
  const auto rows = pde_residual(s.field(), pts, spec);
  Outcome out;
  out.tables.emplace("residual", residual_csv(rows, n));
  const double tol = cfg.get("tolerance", n == 1 ? 1e-4 : 1e-3);
  double worst = 0.0;
  nlohmann::json rj = nlohmann::json::array();
  for (const auto& r : rows) {
    worst = std::max(worst, r.residual / std::max(1.0, std::abs(r.rhs)));
    rj.push_back({{"err_est", r.err_est}, {"lhs", r.lhs}, {"point", r.point.coords()}, {"residual", r.residual}, {"rhs", r.rhs}});
  }
  out.report = {{"lambda", s.lambda()}, {"n", n}, {"rows", rj}, {"tolerance", tol}, {"worst_scaled_residual", worst}};
  out.check("residual", worst <= tol, "max residual/max(1,rhs) " + fmt(worst) + " vs " + fmt(tol));
  return out;
}

// v and its derivatives along a ray for the spherical density; v - u must be constant.
inline Outcome run_potential(const Config& cfg, const QuadratureSpec& spec) {
  detail::require_field(cfg, {"spherical"});
  const SphericalSolution s = detail::spherical_from(cfg);
  const int n = s.dim();
  const auto radii = cfg.get<std::vector<double>>("radii", {0.0, 0.5, 1.0, 2.0, 5.0, 10.0});
  auto dir = cfg.points("direction", n, {Point::axis(n, 0)}).front();
  require(dir.norm() > 0.0, ErrorKind::Config, "direction must be nonzero");
  dir *= 1.0 / dir.norm();
  std::vector<MultiIndex> derivs;
  for (const auto& a : cfg.get<std::vector<std::vector<int>>>("derivatives", {})) {
    require(static_cast<int>(a.size()) == n, ErrorKind::Config, "multi-index length must equal n");
    derivs.push_back(a);
  }
  const LogPotential lp(s.density(), spec);
  std::vector<std::string> header{"r", "v", "v_err", "u_minus_v"};
  for (const auto& a : derivs) {
    header.push_back("d" + detail::index_name(a));
    header.push_back("d" + detail::index_name(a) + "_err");
  }
  CsvTable t(header);
  struct Row {
    QuadResult v;
    std::vector<QuadResult> d;
  };
  const auto rows = parallel_map<Row>(radii.size(), [&](std::size_t i) {
    const Point x = s.center() + dir * radii[i];
    Row r{log_potential_eval(lp, x), {}};
    for (const auto& a : derivs) r.d.push_back(log_potential_derivative(lp, x, a));
    return r;
  });
  Outcome out;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo, err = 0.0, grad_gap = 0.0;
  nlohmann::json rj = nlohmann::json::array();
  for (std::size_t i = 0; i < radii.size(); ++i) {
    const Point x = s.center() + dir * radii[i];
    const double diff = s.u(x) - rows[i].v.value;
    lo = std::min(lo, diff);
    hi = std::max(hi, diff);
    err = std::max(err, rows[i].v.err_est);
    std::vector<double> row{radii[i], rows[i].v.value, rows[i].v.err_est, diff};
    nlohmann::json dj = nlohmann::json::object();
    for (std::size_t k = 0; k < derivs.size(); ++k) {
      row.push_back(rows[i].d[k].value);
      row.push_back(rows[i].d[k].err_est);
      dj[detail::index_name(derivs[k])] = rows[i].d[k].value;
      if (total_degree(derivs[k]) == 1) {
        int axis = 0;
        while (derivs[k][static_cast<std::size_t>(axis)] == 0) ++axis;
        grad_gap = std::max(grad_gap, std::abs(rows[i].d[k].value - s.grad(x)[axis]) - rows[i].d[k].err_est);
      }
    }
    t.add_row(row);
    rj.push_back({{"derivatives", dj}, {"r", radii[i]}, {"u_minus_v", diff}, {"v", rows[i].v.value}, {"v_err", rows[i].v.err_est}});
  }
  out.tables.emplace("potential", t);
  out.report = {{"direction", dir.coords()}, {"lambda", s.lambda()}, {"n", n}, {"rows", rj}, {"u_minus_v_spread", hi - lo}};
  const double tol = cfg.get("tolerance", 1e-6);
  out.check("u_minus_v_constant", hi - lo <= tol + 2.0 * err, "spread " + fmt(hi - lo) + " vs " + fmt(tol + 2.0 * err));
  if (!derivs.empty()) out.check("gradient_matches_u", grad_gap <= tol, "excess over err_est " + fmt(grad_gap));
  return out;
}

inline Outcome run_asymptotics(const Config& cfg, const QuadratureSpec& spec) {
  detail::require_field(cfg, {"spherical", "synthetic"});
  const bool synthetic = cfg.get<std::string>("field", "spherical") == "synthetic";
  DecompositionOptions opt;
  opt.fit_min = cfg.get("fit_min", opt.fit_min);
  opt.fit_max = cfg.get("fit_max", opt.fit_max);
  opt.fit_radii = cfg.get("fit_radii", opt.fit_radii);
  opt.upper_eps = cfg.get("upper_eps", opt.upper_eps);
  opt.derivatives = cfg.get("derivatives", false);
  ScalarField u;
  if (synthetic) {
    require(cfg.get("n", 3) == 3, ErrorKind::Config, "the synthetic fixture lives in n = 3");
    const auto fx = synthetic_quadratic_fixture(spec);
    u = fx.u;
    opt.density = fx.density;
    opt.derivatives = false;
  } else {
    const SphericalSolution s = detail::spherical_from(cfg);
    u = s.field();
    opt.exp_nu_decay = s.exp_nu_decay();
  }
  const Decomposition dec = asymptotic_decomposition(u, spec, opt);
  const GrowthReport growth = growth_criteria(u, dec);

  Outcome out;
  out.report = {{"decomposition", dec.to_json()}, {"field", synthetic ? "synthetic" : "spherical"}, {"growth", growth.to_json()}};
  CsvTable t({"r", "v_mean", "v_min", "v_max"});
  for (std::size_t i = 0; i < dec.fit.radii.size(); ++i)
    t.add_row({dec.fit.radii[i], dec.fit.v_means[i], dec.fit.v_mins[i], dec.fit.v_maxs[i]});
  out.tables.emplace("asymptotics", t);

  if (synthetic) {
    Polynomial want(3);
    want.set({0, 0, 0}, 5.0);
    for (int i = 0; i < 3; ++i) {
      MultiIndex a(3, 0);
      a[static_cast<std::size_t>(i)] = 2;
      want.set(a, -1.0);
    }
    double gap = 0.0;
    for (const auto& [a, c] : want.coeffs()) gap = std::max(gap, std::abs(dec.P.coeff(a) - c));
    for (const auto& [a, c] : dec.P.coeffs()) gap = std::max(gap, std::abs(c - want.coeff(a)));
    out.check("P_coefficients", gap <= 1e-4, "max coefficient error " + fmt(gap));
    const double lim = growth.laplacian_limits.at(0).limit;
    out.check("laplacian_limit", std::abs(lim + 6.0) <= 1e-2, "limit " + fmt(lim) + " vs -6");
  } else {
    const auto& f = dec.fit;
    const double target = cfg.get("alpha_tolerance", 0.1);
    out.check("alpha_hat", std::abs(f.alpha_hat - f.alpha_predicted) <= target,
              "alpha_hat " + fmt(f.alpha_hat) + " vs " + fmt(f.alpha_predicted));
    out.check("sandwich", f.lower_holds && f.upper_holds,
              "lower " + std::string(f.lower_holds ? "holds" : "fails") + ", upper " + (f.upper_holds ? "holds" : "fails"));
    out.check("deg_P", dec.deg_P == 0, "deg_P " + std::to_string(dec.deg_P));
    for (const auto& L : growth.laplacian_limits)
      out.check("laplacian_limit_j" + std::to_string(L.j), std::abs(L.limit) <= 1e-3, "limit " + fmt(L.limit));
    for (const auto& [b, r] : dec.derivative_decay)
      out.check("derivative_decay_" + detail::index_name(b), r.pass, "fitted " + fmt(r.fitted_exponent));
  }
  return out;
}

inline Outcome run_scaling(const Config& cfg, const QuadratureSpec& spec) {
  const int n = cfg.get("n", 3);
  const int j = cfg.get("j", 1);
  const double sigma = cfg.get("sigma", 0.5);
  const auto radii = cfg.get<std::vector<double>>("radii", {1.0, 2.0, 4.0});
  if (j < 0 || j > n - 1) throw Error(ErrorKind::Config, "j must lie in 0..n-1");
  const ScalingReport rep = scaling_law_check(n, j, sigma, radii, spec);
  Outcome out;
  out.report = rep.to_json();
  CsvTable t({"r", "value", "scaled_value", "err_est"});
  for (std::size_t i = 0; i < radii.size(); ++i) t.add_row({radii[i], rep.values[i], rep.scaled_values[i], rep.err_est[i]});
  out.tables.emplace("scaling", t);
  const double tol = cfg.get("tolerance", 0.02);
  out.check("scaling_spread", rep.spread <= tol, "spread " + fmt(rep.spread) + " vs " + fmt(tol));
  return out;
}

// ---------------------------------------------------------------------------
// Green / Poisson suites
// ---------------------------------------------------------------------------

namespace detail {

struct SuiteRow {
  std::string suite, name;
  int point = 0;
  double value = 0.0, expected = 0.0, err_est = 0.0, tolerance = 0.0;
};

inline CsvTable suite_table(const std::vector<SuiteRow>& rows) {
  CsvTable t({"suite", "case", "point", "value", "expected", "abs_error", "err_est", "tolerance"});
  for (const auto& r : rows)
    t.add_cells({r.suite, r.name, std::to_string(r.point), fmt(r.value), fmt(r.expected), fmt(std::abs(r.value - r.expected)),
                 fmt(r.err_est), fmt(r.tolerance)});
  return t;
}

inline ScalarField poly_field(int n, PointFn f, double degree) {
  ScalarField s;
  s.dim = n;
  s.eval = std::move(f);
  s.decay = DecayHint::poly_growth(degree);
  return s;
}

inline std::vector<SuiteRow> navier_suite(const QuadratureSpec& spec) {
  struct Harmonic {
    const char* name;
    int degree;
    PointFn f;
  };
  const std::vector<Harmonic> hs{
      {"1", 0, [](const Point&) { return 1.0; }},
      {"x1", 1, [](const Point& p) { return p[0]; }},
      {"x3", 1, [](const Point& p) { return p[2]; }},
      {"x1x2", 2, [](const Point& p) { return p[0] * p[1]; }},
      {"x1^2-x3^2", 2, [](const Point& p) { return p[0] * p[0] - p[2] * p[2]; }},
      {"x1x2x3", 3, [](const Point& p) { return p[0] * p[1] * p[2]; }},
      {"x1^3-3x1x2^2", 3, [](const Point& p) { return p[0] * p[0] * p[0] - 3.0 * p[0] * p[1] * p[1]; }},
  };
  const std::vector<Point> xs{Point(3), Point{0.3, -0.2, 0.4}, Point{-0.5, 0.1, 0.6}};
  std::vector<SuiteRow> rows;
  for (const auto& h : hs)
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const QuadResult q = navier_representation(1.0, {poly_field(3, h.f, h.degree)}, xs[i], spec);
      rows.push_back({"navier", h.name, static_cast<int>(i), q.value, h.f(xs[i]), q.err_est, 1e-6});
    }
  return rows;
}

// Constant and linear data at |x|/r in {0, 1/4, 1/2, 3/4} on B_2.
inline std::vector<SuiteRow> poisson_suite(const QuadratureSpec& spec, const std::vector<int>& dims) {
  const double r = 2.0;
  std::vector<SuiteRow> rows;
  for (int n : dims) {
    const std::string tag = "n" + std::to_string(n);
    for (int k = 0; k < 4; ++k) {
      const Point x = Point::axis(n, 0, 0.25 * k * r);
      const QuadResult one = poisson_extension_halflap(r, ScalarField::constant(n, 1.0), x, spec);
      rows.push_back({"poisson", tag + "_constant", k, one.value, 1.0, one.err_est, 1e-6});
      const QuadResult lin = poisson_extension_halflap(r, poly_field(n, [](const Point& p) { return p[0]; }, 1.0), x, spec);
      rows.push_back({"poisson", tag + "_linear", k, lin.value, x[0], lin.err_est, 1e-5});
    }
  }
  return rows;
}

inline std::vector<SuiteRow> g2_suite(const QuadratureSpec& spec) {
  std::vector<SuiteRow> rows;
  int k = 0;
  for (double x : {0.0, 0.5}) {
    const QuadResult h = g2_solve(1.0, ScalarField::constant(1, 1.0), Point::axis(1, 0, x), spec);
    rows.push_back({"g2", "n1_torsion", k++, h.value, std::sqrt(1.0 - x * x), h.err_est, 1e-3});
  }
  const ScalarField h3 = g2_torsion_field(3);
  k = 0;
  for (double x : {0.0, 0.3, 0.6}) {
    const QuadResult q = frac_lap_local(0.5, h3, Point::axis(3, 0, x), spec);
    rows.push_back({"g2", "n3_residual", k++, q.value, 1.0, q.err_est, 5e-2});
  }
  rows.push_back({"g2", "n1_zero_rhs", 0, g2_solve(1.0, zero_field(1), Point(1), spec).value, 0.0, 0.0, 0.0});
  return rows;
}

}  // namespace detail

inline Outcome run_green(const Config& cfg, const QuadratureSpec& spec) {
  const auto suite = cfg.get<std::string>("suite", "all");
  const bool all = suite == "all";
  if (!all && suite != "navier" && suite != "poisson" && suite != "g2" && suite != "maxprinciple" && suite != "kernels")
    throw Error(ErrorKind::Config, "unknown green suite '" + suite + "'");
  Outcome out;
  std::vector<detail::SuiteRow> rows;
  if (all || suite == "navier") {
    auto r = detail::navier_suite(spec);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  if (all || suite == "poisson") {
    auto r = detail::poisson_suite(spec, cfg.get<std::vector<int>>("poisson_dims", {1, 3}));
    rows.insert(rows.end(), r.begin(), r.end());
    nlohmann::json norm = nlohmann::json::object();
    for (int n : cfg.get<std::vector<int>>("poisson_dims", {1, 3})) norm[std::to_string(n)] = PoissonHalfLap::normalizer(n);
    out.report["poisson_normalizers"] = norm;
  }
  if (all || suite == "g2") {
    auto r = detail::g2_suite(spec);
    rows.insert(rows.end(), r.begin(), r.end());
    out.report["g2_calibration"] = {{"1", g2_calibration(1).to_json()}, {"3", g2_calibration(3).to_json()}};
  }
  std::map<std::string, std::pair<double, double>> worst;  // max |error| and its tolerance per case
  nlohmann::json rj = nlohmann::json::array();
  for (const auto& r : rows) {
    auto& w = worst.try_emplace(r.suite + ":" + r.name, 0.0, r.tolerance).first->second;
    w.first = std::max(w.first, std::abs(r.value - r.expected));
    rj.push_back({{"case", r.name}, {"err_est", r.err_est}, {"expected", r.expected}, {"point", r.point},
                  {"suite", r.suite}, {"tolerance", r.tolerance}, {"value", r.value}});
  }
  for (const auto& [key, w] : worst)
    out.check(key, w.first <= w.second, "max error " + fmt(w.first) + " vs " + fmt(w.second));
  out.report["cases"] = rj;
  if (!rows.empty()) out.tables.emplace("green", detail::suite_table(rows));

  if (all || suite == "maxprinciple") {
    const auto mp = maximum_principle_check(cfg.get<std::size_t>("samples", 1000), spec);
    out.report["maximum_principle"] = mp.to_json();
    out.check("maximum_principle", mp.violations == 0,
              std::to_string(mp.violations) + " violations in " + std::to_string(mp.samples));
  }
  if (suite == "kernels") {
    const auto kind = cfg.get<std::string>("kernel", "G1");
    const int n = cfg.get("n", 3);
    const double r = cfg.get("radius", 1.0);
    BallKernel k = kind == "G1"          ? BallKernel::g1(n, r)
                   : kind == "IteratedG" ? BallKernel::iterated(n, r, cfg.get("j", 0))
                   : kind == "Poisson"   ? BallKernel::poisson(n, r)
                   : kind == "G2"        ? BallKernel::g2(n, r)
                                         : throw Error(ErrorKind::Config, "unknown kernel '" + kind + "'");
    const auto xs = cfg.points("x", n, {Point(n)});
    const auto ys = cfg.points("y", n, {Point::axis(n, 0, 0.5 * r)});
    out.tables.emplace("kernel_grid", kernel_grid_csv(k, xs, ys, spec));
    out.report["kernel"] = {{"dim", n}, {"kind", BallKernel::name(k.kind)}, {"normalizer", k.normalizer}, {"radius", r}};
  }
  return out;
}

// ---------------------------------------------------------------------------
// Estimates
// ---------------------------------------------------------------------------

inline Outcome run_estimates(const Config& cfg, const QuadratureSpec& spec) {
  const auto kind = cfg.get<std::string>("kind", "all");
  const bool all = kind == "all";
  if (!all && kind != "schwartz" && kind != "moment" && kind != "support" && kind != "riesz")
    throw Error(ErrorKind::Config, "unknown estimate '" + kind + "'");
  const double rmin = cfg.get("r_min", 5.0), rmax = cfg.get("r_max", 40.0);
  Outcome out;
  CsvTable t({"check", "fitted", "predicted", "pass"});
  auto record = [&](const std::string& name, double fitted, double predicted, bool pass, nlohmann::json j) {
    t.add_cells({name, fmt(fitted), fmt(predicted), pass ? "1" : "0"});
    out.report[name] = std::move(j);
    out.check(name, pass, "fitted " + fmt(fitted) + " predicted " + fmt(predicted));
  };
  if (all || kind == "schwartz") {
    struct Case {
      int n, k;
      double sigma;
    };
    for (const Case c : {Case{1, 0, 0.5}, Case{3, 0, 0.5}, Case{1, 1, 0.5}}) {
      const auto r = schwartz_decay_check(gaussian(c.n), FracOrder(c.k, c.sigma), rmin, rmax, spec);
      record("schwartz_n" + std::to_string(c.n) + "_s" + fmt(c.k + c.sigma), r.fitted_exponent, r.predicted_exponent, r.pass, r.to_json());
    }
  }
  if (all || kind == "moment") {
    for (int k : {0, 1, -1}) {
      const auto r = moment_decay_check(k, 0.5, rmin, rmax, spec);
      record("moment_k" + std::to_string(k), r.fitted_exponent, r.predicted_exponent, r.pass, r.to_json());
    }
  }
  if (all || kind == "support") {
    const auto d = cfg.get<std::vector<double>>("distances", {0.01, 0.02, 0.05, 0.1, 5, 7, 10, 14, 20, 28, 40});
    const auto r = support_decay_check(bump(1, 1.0, 0.5), 2, 1.0, 0.5, d, spec);
    record("support_far", r.far.fitted_exponent, r.far.predicted_exponent, r.pass, r.to_json());
  }
  if (all || kind == "riesz") {
    const auto full = riesz_composition_check(cfg.get("n", 3), cfg.get("p", 2.0), cfg.get("q", 2.0),
                                              cfg.get<std::vector<double>>("separations", {0.5, 1.0, 2.0}), spec);
    record("riesz_full_space", full.spread, 3.0 * full.combined_err, full.pass, full.to_json());
    const auto ball = riesz_composition_check(3, 1.5, 1.5, {1e-1, 1e-2, 1e-3, 1e-4}, spec);
    record("riesz_ball", ball.fitted_slope, ball.slope_target, ball.pass, ball.to_json());
  }
  out.tables.emplace("estimates", t);
  return out;
}

// ---------------------------------------------------------------------------
// Brezis-Merle sweep and constants
// ---------------------------------------------------------------------------

inline Outcome run_bm(const Config& cfg, const QuadratureSpec& spec) {
  const int n = cfg.get("n", 1);
  const double mass = cfg.get("mass", 0.5 * geom_constants(n).gamma_n);
  std::vector<double> dflt;
  for (int i = 0; i <= 10; ++i) dflt.push_back(1.0 + 0.2 * i);
  const auto ps = cfg.get<std::vector<double>>("ps", dflt);
  BrezisMerleOptions opt;
  opt.eps0 = cfg.get("eps0", opt.eps0);
  opt.refinements = cfg.get("refinements", opt.refinements);
  opt.converge_tol = cfg.get("converge_tol", opt.converge_tol);
  opt.diverge_ratio = cfg.get("diverge_ratio", opt.diverge_ratio);
  const BrezisMerleStudy st = brezis_merle_study(n, mass, ps, cfg.get("R", 1.0), spec, opt);
  Outcome out;
  out.report = st.to_json();
  CsvTable t({"p", "verdict", "last_width", "last_integral", "last_ratio"});
  for (const auto& r : st.runs)
    t.add_cells({fmt(r.p), BrezisMerleRun::name(r.verdict), fmt(r.widths.back()), fmt(r.integrals.back()), fmt(r.ratios.back())});
  out.tables.emplace("bm", t);
  for (const auto& r : st.runs) {
    if (r.p == 1.0) out.check("converged_at_p1", r.verdict == BrezisMerleRun::Verdict::Converged, BrezisMerleRun::name(r.verdict));
    if (r.p == 3.0) out.check("diverged_at_p3", r.verdict == BrezisMerleRun::Verdict::Diverged, BrezisMerleRun::name(r.verdict));
  }
  const double band = cfg.get("transition_band", 0.4);
  out.check("transition", st.transition && std::abs(*st.transition - st.threshold) <= band,
            st.transition ? "transition " + fmt(*st.transition) + " threshold " + fmt(st.threshold) : "no transition found");
  return out;
}

// 4^s Gamma(n/2 + s) / (pi^{n/2} |Gamma(-s)|)
inline double normalization_closed_form(int n, double s) {
  return std::pow(4.0, s) * std::tgamma(0.5 * n + s) / (std::pow(kPi, 0.5 * n) * std::abs(std::tgamma(-s)));
}

inline Outcome run_constants(const Config& cfg, const QuadratureSpec&) {
  const auto ns = cfg.get<std::vector<int>>("ns", cfg.has("n") ? std::vector<int>{cfg.get("n", 1)} : std::vector<int>{1, 3, 5});
  const auto sigmas = cfg.get<std::vector<double>>("sigmas", {0.5});
  Outcome out;
  CsvTable t({"n", "sigma", "sphere_area", "ball_volume", "gamma_n", "C_n_sigma", "C_n_sigma_closed_form"});
  nlohmann::json rows = nlohmann::json::array();
  double worst = 0.0, worst_gamma = 0.0;
  for (int n : ns) {
    const auto g = geom_constants(n);
    if (n >= 3 && n % 2 == 1) worst_gamma = std::max(worst_gamma, std::abs(reciprocal_gamma_via_kernels(n) * g.gamma_n - 1.0));
    for (double s : sigmas) {
      const double c = normalization_constant(n, s), cf = normalization_closed_form(n, s);
      worst = std::max(worst, std::abs(c / cf - 1.0));
      t.add_row({static_cast<double>(n), s, g.sphere_area, g.ball_volume, g.gamma_n, c, cf});
      auto j = g.to_json();
      j["sigma"] = s;
      j["C_n_sigma"] = c;
      rows.push_back(j);
    }
  }
  out.report = {{"rows", rows}};
  out.tables.emplace("constants", t);
  out.check("normalization_constant", worst <= 1e-8, "max relative gap " + fmt(worst));
  out.check("gamma_via_kernels", worst_gamma <= 1e-12, "max relative gap " + fmt(worst_gamma));
  return out;
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

using Runner = Outcome (*)(const Config&, const QuadratureSpec&);

inline const std::map<std::string, std::pair<Runner, const char*>>& commands() {
  static const std::map<std::string, std::pair<Runner, const char*>> table{
      {"residual", {run_residual, "PDE residual table for a spherical solution"}},
      {"potential", {run_potential, "log-potential and derivatives along a ray"}},
      {"asymptotics", {run_asymptotics, "decomposition u = v + P and growth criteria"}},
      {"scaling", {run_scaling, "homogeneity of (-Delta)^sigma on log|x| and |x|^-j"}},
      {"green", {run_green, "Navier, Poisson and G2 validation suites"}},
      {"estimates", {run_estimates, "decay, support and Riesz composition reports"}},
      {"bm", {run_bm, "exponential integrability sweep over p"}},
      {"constants", {run_constants, "geometric and normalization constants"}},
  };
  return table;
}

inline void write_file(const std::filesystem::path& p, const std::string& data) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw Error(ErrorKind::Config, "cannot write " + p.string());
  f << data;
}

// Runs one command on a merged config. Output files depend only on
// (command, config, seed, version); the wall time lives in the manifest.
inline int execute(const std::string& command, const nlohmann::json& merged, bool check, std::ostream& out,
                   std::ostream& err) {
  const auto start = std::chrono::steady_clock::now();
  try {
    const Config cfg(merged);
    const QuadratureSpec spec =
        QuadratureSpec::from_json(cfg.has("quadrature") ? cfg.raw().at("quadrature") : nlohmann::json::object());
    const std::filesystem::path dir = cfg.get<std::string>("output_dir", "qcurv-out");
    const auto it = commands().find(command);
    require(it != commands().end(), ErrorKind::Config, "unknown command");

    Outcome res = it->second.first(cfg, spec);

    std::filesystem::create_directories(dir);
    nlohmann::json outputs = nlohmann::json::object();
    for (const auto& [stem, table] : res.tables) {
      const std::string body = table.str();
      write_file(dir / (stem + ".csv"), body);
      outputs[stem + ".csv"] = hex_digest(fnv1a(body));
    }
    nlohmann::json report = res.report;
    nlohmann::json cj = nlohmann::json::array();
    for (const auto& c : res.checks) cj.push_back({{"detail", c.detail}, {"name", c.name}, {"pass", c.pass}});
    report["checks"] = cj;
    const std::string body = report.dump(2) + "\n";
    write_file(dir / (command + ".json"), body);
    outputs[command + ".json"] = hex_digest(fnv1a(body));

    const std::string canonical = merged.dump();
    nlohmann::json manifest = {{"command", command},
                               {"config", merged},
                               {"config_digest", hex_digest(fnv1a(canonical))},
                               {"outputs", outputs},
                               {"seed", spec.seed},
                               {"tool_version", kToolVersion},
                               {"wall_time", std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()}};
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");

    out << command << ": wrote " << dir.string() << "\n";
    if (!check) return kOk;
    for (const auto& c : res.checks) out << (c.pass ? "PASS " : "FAIL ") << c.name << "  " << c.detail << "\n";
    return res.all_pass() ? kOk : kCheckFailed;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const nlohmann::json::exception& e) {
    err << "error: config: " << e.what() << "\n";
    return kInvalidConfig;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kInvalidConfig;
  }
}

inline nlohmann::json load_config(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  std::ifstream f(path);
  if (!f) throw Error(ErrorKind::Config, "cannot read config " + path);
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::Config, std::string("config is not valid JSON: ") + e.what());
  }
}

inline int dispatch(std::vector<std::string> args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Numerical companion for the Q-curvature equation (-Delta)^{n/2} u = (n-1)! e^{nu}", "qcurv"};
  app.require_subcommand(1);

  std::string config_path, out_dir, field, suite, kind;
  bool check = false;
  std::optional<int> n, j;
  std::optional<double> lambda, sigma, p, q;
  std::vector<double> radii, ps;
  std::vector<std::string> sets;

  for (const auto& [name, entry] : commands()) {
    CLI::App* sub = app.add_subcommand(name, entry.second);
    sub->add_option("-c,--config", config_path, "JSON config file");
    sub->add_option("-o,--out", out_dir, "output directory (overrides output_dir)");
    sub->add_flag("--check", check, "compare against the acceptance tolerances; exit 3 on failure");
    sub->add_option("--field", field, "field family: spherical or synthetic");
    sub->add_option("--n", n, "dimension");
    sub->add_option("--lambda", lambda, "spherical solution scale");
    sub->add_option("--j", j, "homogeneity index");
    sub->add_option("--sigma", sigma, "fractional order");
    sub->add_option("--radii", radii, "comma-separated radii")->delimiter(',');
    sub->add_option("--ps", ps, "comma-separated exponents p")->delimiter(',');
    sub->add_option("--p", p, "Riesz exponent p");
    sub->add_option("--q", q, "Riesz exponent q");
    sub->add_option("--suite", suite, "green suite: all, navier, poisson, g2, maxprinciple, kernels");
    sub->add_option("--kind", kind, "estimate: all, schwartz, moment, support, riesz");
    sub->add_option("--set", sets, "key=JSON override, repeatable");
  }

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInvalidConfig;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  nlohmann::json cfg;
  try {
    cfg = load_config(config_path);
    require(cfg.is_object(), ErrorKind::Config, "config must be a JSON object");
    if (!out_dir.empty()) cfg["output_dir"] = out_dir;
    if (!field.empty()) cfg["field"] = field;
    if (n) cfg["n"] = *n;
    if (lambda) cfg["lambda"] = *lambda;
    if (j) cfg["j"] = *j;
    if (sigma) cfg["sigma"] = *sigma;
    if (!radii.empty()) cfg["radii"] = radii;
    if (!ps.empty()) cfg["ps"] = ps;
    if (p) cfg["p"] = *p;
    if (q) cfg["q"] = *q;
    if (!suite.empty()) cfg["suite"] = suite;
    if (!kind.empty()) cfg["kind"] = kind;
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      require(eq != std::string::npos && eq > 0, ErrorKind::Config, "--set expects key=value");
      const std::string key = s.substr(0, eq), val = s.substr(eq + 1);
      auto parsed = nlohmann::json::parse(val, nullptr, false);
      cfg[key] = parsed.is_discarded() ? nlohmann::json(val) : parsed;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kInvalidConfig;
  }
  return execute(command, cfg, check, out, err);
}

inline int dispatch(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return dispatch(std::move(args));
}

}  // namespace qcurv::cli
