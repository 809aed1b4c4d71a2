#pragma once

// The log-potential v = (1/gamma_n) int log((1+|y|)/|x-y|) f(y) dy and its
// derivatives, the fundamental solutions Phi of (-Delta)^{1/2} and Psi of
// (-Delta)^{(n-1)/2}, and exponential integrability of log-potentials
// (the Jensen bound and the Brezis-Merle dichotomy).

#include "qcurv/fields.hpp"
#include "qcurv/quad.hpp"

namespace qcurv {

// ---------------------------------------------------------------------------
// Derivatives of log|w|
// ---------------------------------------------------------------------------

// D^alpha log|w| as a finite sum of c w^beta |w|^{-2k}, built by differentiating
// term by term: d_i (w^beta |w|^-2k) = beta_i w^{beta-e_i} |w|^-2k - 2k w^{beta+e_i} |w|^{-2k-2}.
class LogDerivative {
 public:
  LogDerivative(int n, const MultiIndex& alpha) : n_(n), order_(total_degree(alpha)) {
    require(static_cast<int>(alpha.size()) == n, ErrorKind::InvalidDimension, "multi-index length mismatch");
    require(order_ >= 1, ErrorKind::InvalidArgument, "derivative order must be positive");
    std::vector<int> dirs;
    for (int i = 0; i < n; ++i)
      for (int e = 0; e < alpha[static_cast<std::size_t>(i)]; ++e) dirs.push_back(i);
    std::map<std::pair<MultiIndex, int>, double> terms;
    MultiIndex b(static_cast<std::size_t>(n), 0);
    b[static_cast<std::size_t>(dirs[0])] = 1;
    terms[{b, 1}] = 1.0;
    for (std::size_t s = 1; s < dirs.size(); ++s) {
      const auto i = static_cast<std::size_t>(dirs[s]);
      std::map<std::pair<MultiIndex, int>, double> next;
      for (const auto& [key, c] : terms) {
        const auto& [beta, k] = key;
        if (beta[i] > 0) {
          MultiIndex lo = beta;
          lo[i] -= 1;
          next[{lo, k}] += c * beta[i];
        }
        MultiIndex hi = beta;
        hi[i] += 1;
        next[{hi, k + 1}] += -2.0 * k * c;
      }
      terms.clear();
      for (const auto& [key, c] : next)
        if (c != 0.0) terms[key] = c;
    }
    for (const auto& [key, c] : terms) terms_.push_back({key.first, key.second, c});
  }

  int order() const { return order_; }

  double operator()(const Point& w) const {
    const double r2 = w.norm2();
    CompensatedSum s;
    for (const auto& t : terms_) s += t.c * monomial(t.beta, w) * std::pow(r2, -t.k);
    return s.value();
  }

  // |D^alpha log|w|| <= coefficient_sum() |w|^{-|alpha|}
  double coefficient_sum() const {
    double s = 0.0;
    for (const auto& t : terms_) s += std::abs(t.c);
    return s;
  }

 private:
  struct Term {
    MultiIndex beta;
    int k;
    double c;
  };
  int n_;
  int order_;
  std::vector<Term> terms_;
};

// ---------------------------------------------------------------------------
// Log-potential
// ---------------------------------------------------------------------------

struct LogPotential {
  ScalarField density;
  int dim;
  double gamma_n;
  QuadratureSpec spec;

  explicit LogPotential(ScalarField f, QuadratureSpec s = {})
      : density(std::move(f)), dim(density.dim), gamma_n(geom_constants(density.dim).gamma_n), spec(s) {}
};

inline QuadResult log_potential_eval(const LogPotential& lp, const Point& x) {
  SingularKernel k;
  k.eval = [x](const Point& y) { return std::log((1.0 + y.norm()) / distance(x, y)); };
  k.singularity = 0.0;
  k.tail_exponent = 0.0;
  const double cn = lp.density.center().norm(), xn = x.norm();
  k.tail_coeff = [cn, xn](double R) {
    // |y| >= R - |c| =: t; (1+|y|)/|x-y| lies between (1+t)/(t+|x|) and (1+t)/(t-|x|)
    const double t = std::max(R - cn, 2.0 * xn + 2.0);
    return std::max(std::abs(std::log((1.0 + t) / (t - xn))), std::abs(std::log((1.0 + t) / (t + xn))));
  };
  return scaled(singular_convolution(k, lp.density, x, lp.spec), 1.0 / lp.gamma_n);
}

// D^alpha v(x) = -(1/gamma_n) int (D^alpha log|.|)(x - y) f(y) dy, 0 < |alpha| <= n-1.
inline QuadResult log_potential_derivative(const LogPotential& lp, const Point& x, const MultiIndex& alpha) {
  const int order = total_degree(alpha);
  if (order == 0) return log_potential_eval(lp, x);
  require(order <= lp.dim - 1, ErrorKind::Precondition,
          "derivative order must be at most n-1 (the kernel is not locally integrable beyond)");
  const LogDerivative dlog(lp.dim, alpha);
  SingularKernel k;
  k.eval = [x, dlog](const Point& y) { return -dlog(x - y); };
  k.singularity = order;
  k.tail_exponent = order;
  const double d = distance(x, lp.density.center()), cs = dlog.coefficient_sum();
  k.tail_coeff = [d, cs, order](double R) { return cs * std::pow(R / std::max(R - d, 0.5 * R), order); };
  return scaled(singular_convolution(k, lp.density, x, lp.spec), 1.0 / lp.gamma_n);
}

// ---------------------------------------------------------------------------
// Fundamental solutions
// ---------------------------------------------------------------------------

struct FundamentalSolution {
  enum class Kind { HalfLap, PolyHarm };
  Kind kind;
  int dim;

  double coefficient() const {
    return kind == Kind::HalfLap ? halflap_fs_coefficient(dim) : polyharmonic_fs_coefficient(dim);
  }
  double exponent() const { return kind == Kind::HalfLap ? dim - 1.0 : 1.0; }
  double operator()(const Point& x) const { return coefficient() * std::pow(x.norm(), -exponent()); }
};

inline QuadResult fundamental_convolve(const FundamentalSolution& fs, const ScalarField& f, const Point& x,
                                       const QuadratureSpec& spec) {
  require(fs.dim == f.dim, ErrorKind::InvalidDimension, "dimension mismatch");
  const double c = fs.coefficient(), a = fs.exponent();
  SingularKernel k;
  k.eval = [x, c, a](const Point& y) { return c * std::pow(distance(x, y), -a); };
  k.singularity = a;
  k.tail_exponent = a;
  const double d = distance(x, f.center());
  k.tail_coeff = [c, a, d](double R) { return c * std::pow(R / std::max(R - d, 0.5 * R), a); };
  return singular_convolution(k, f, x, spec);
}

// ---------------------------------------------------------------------------
// Exponential integrability
// ---------------------------------------------------------------------------

struct ExpIntegrability {
  double p = 0.0;
  double mass = 0.0;       // ||f||_1
  double threshold = 0.0;  // gamma_n / ||f||_1
  bool admissible = false; // p < threshold
  double integral = 0.0;   // int_{B_R} e^{np|u_2|}
  double err_est = 0.0;
  double jensen_bound = 0.0;  // +inf when the Jensen integrand is not integrable

  nlohmann::json to_json() const {
    return {{"admissible", admissible}, {"err_est", err_est}, {"integral", integral},
            {"jensen_bound", std::isfinite(jensen_bound) ? nlohmann::json(jensen_bound) : nlohmann::json("inf")},
            {"mass", mass}, {"p", p}, {"threshold", threshold}};
  }
};

// For f supported in B_R (about the origin): u_2 = log-potential of f, the
// integral int_{B_R} e^{np|u_2|} and the Jensen chain
// (1/||f||) int |f(y)| int_{B_R} ((1+|y|)/|x-y|)^{np||f||/gamma_n} dx dy.
inline ExpIntegrability exp_integrability_bound(const ScalarField& f, double p, double R, const QuadratureSpec& spec) {
  require(p > 0.0, ErrorKind::InvalidArgument, "p must be positive");
  require(R > 0.0, ErrorKind::InvalidArgument, "R must be positive");
  const int n = f.dim;
  ScalarField absf = f;
  absf.eval = [fe = f.eval](const Point& y) { return std::abs(fe(y)); };
  ExpIntegrability out;
  out.p = p;
  out.mass = truncated_integral(absf, FullSpace{}, spec).value;
  const double gamma = geom_constants(n).gamma_n;
  out.threshold = out.mass > 0.0 ? gamma / out.mass : std::numeric_limits<double>::infinity();
  out.admissible = p < out.threshold;
  const Ball ball{Point(n), R};
  const double vol = unit_ball_volume(n) * std::pow(R, n);
  if (out.mass == 0.0) {
    out.integral = vol;
    out.jensen_bound = vol;
    return out;
  }
  const LogPotential lp(f, spec);
  ScalarField g;
  g.dim = n;
  g.eval = [&lp, n, p](const Point& x) { return std::exp(n * p * std::abs(log_potential_eval(lp, x).value)); };
  std::vector<double> br;
  if (f.support_radius) br.push_back(*f.support_radius + f.center().norm());
  const QuadResult I = truncated_integral(g, ball, spec, br);
  out.integral = I.value;
  out.err_est = I.err_est;

  const double a = n * p * out.mass / gamma;
  if (a >= n) {
    out.jensen_bound = std::numeric_limits<double>::infinity();
    return out;
  }
  ScalarField outer = absf;
  outer.eval = [&, a](const Point& y) {
    const double fy = std::abs(f(y));
    if (fy == 0.0 || y.norm() >= R) return 0.0;
    const double s = 1.0 + y.norm();
    auto h = [&](const Point& z) { return std::pow(s / distance(z, y), a); };
    return fy * ray_integral(h, y, ball.center, R, spec, Point::axis(n, 0)).value;
  };
  out.jensen_bound = truncated_integral(outer, FullSpace{}, spec).value / out.mass;
  return out;
}

// Brezis-Merle dichotomy for a concentrating family: bumps of fixed mass and
// widths eps_k = eps0 2^-k about the origin. As eps_k -> 0 the log-potential
// tends to (mass/gamma_n) log(1/|x|) and int_{B_R} e^{np|u_2|} stays bounded
// exactly when p < gamma_n/mass.
struct BrezisMerleRun {
  double p = 0.0;
  std::vector<double> widths, integrals, ratios;
  enum class Verdict { Converged, Diverged, Undecided } verdict = Verdict::Undecided;

  static const char* name(Verdict v) {
    switch (v) {
      case Verdict::Converged: return "converged";
      case Verdict::Diverged: return "diverged";
      case Verdict::Undecided: break;
    }
    return "undecided";
  }
  nlohmann::json to_json() const {
    return {{"integrals", integrals}, {"p", p}, {"ratios", ratios}, {"verdict", name(verdict)}, {"widths", widths}};
  }
};

struct BrezisMerleStudy {
  int dim = 1;
  double mass = 0.0;
  double R = 1.0;
  double threshold = 0.0;  // gamma_n / mass
  std::vector<BrezisMerleRun> runs;
  std::optional<double> transition;  // midpoint of the last converged and first diverged p

  nlohmann::json to_json() const {
    nlohmann::json r = nlohmann::json::array();
    for (const auto& x : runs) r.push_back(x.to_json());
    return {{"dim", dim}, {"mass", mass}, {"R", R}, {"runs", r}, {"threshold", threshold},
            {"transition", transition ? nlohmann::json(*transition) : nlohmann::json(nullptr)}};
  }
};

struct BrezisMerleOptions {
  double eps0 = 0.5;
  int refinements = 10;  // at least 3
  double converge_tol = 0.05;
  double diverge_ratio = 1.2;
};

// The radial integral int_{B_R} e^{np|u_2|} for every p at once: u_2 is
// tabulated on a fixed composite Gauss-Kronrod grid, dyadically graded about
// the bump scale, and reused across p.
inline BrezisMerleStudy brezis_merle_study(int n, double mass, const std::vector<double>& ps, double R,
                                           const QuadratureSpec& spec, const BrezisMerleOptions& opt = {}) {
  require(opt.refinements >= 3, ErrorKind::InvalidArgument, "at least three refinements are required");
  require(mass > 0.0 && R > 0.0, ErrorKind::InvalidArgument, "mass and R must be positive");
  for (double p : ps) require(p > 0.0, ErrorKind::InvalidArgument, "p must be positive");
  BrezisMerleStudy st;
  st.dim = n;
  st.mass = mass;
  st.R = R;
  st.threshold = geom_constants(n).gamma_n / mass;
  const auto& gk = gauss_kronrod15();
  const double area = unit_sphere_area_in(n);
  st.runs.resize(ps.size());
  for (std::size_t i = 0; i < ps.size(); ++i) st.runs[i].p = ps[i];
  for (int level = 0; level <= opt.refinements; ++level) {
    const double eps = std::ldexp(opt.eps0, -level);
    const ScalarField f = bump(n, mass, eps);
    const LogPotential lp(f, spec);
    std::vector<double> br{0.0};
    for (int j = -30; eps * std::ldexp(1.0, j) < R; ++j) br.push_back(eps * std::ldexp(1.0, j));
    br.push_back(R);
    std::vector<double> nodes, weights;
    for (std::size_t b = 0; b + 1 < br.size(); ++b) {
      const double c = 0.5 * (br[b] + br[b + 1]), h = 0.5 * (br[b + 1] - br[b]);
      for (std::size_t q = 0; q < 15; ++q) {
        const double r = c + h * gk.nodes[q];
        nodes.push_back(r);
        weights.push_back(h * gk.kronrod[q] * area * std::pow(r, n - 1));
      }
    }
    const auto u = parallel_map<double>(nodes.size(), [&](std::size_t q) {
      return std::abs(log_potential_eval(lp, Point::axis(n, 0, nodes[q])).value);
    });
    for (auto& run : st.runs) {
      CompensatedSum s;
      for (std::size_t q = 0; q < nodes.size(); ++q) s += weights[q] * std::exp(n * run.p * u[q]);
      run.widths.push_back(eps);
      run.integrals.push_back(s.value());
      if (run.integrals.size() > 1) run.ratios.push_back(run.integrals.back() / run.integrals[run.integrals.size() - 2]);
    }
  }
  for (auto& run : st.runs) {
    const auto& r = run.ratios;
    const std::size_t m = r.size();
    if (std::abs(r.back() - 1.0) <= opt.converge_tol)
      run.verdict = BrezisMerleRun::Verdict::Converged;
    else if (m >= 3 && r[m - 1] >= opt.diverge_ratio && r[m - 2] >= opt.diverge_ratio && r[m - 3] >= opt.diverge_ratio)
      run.verdict = BrezisMerleRun::Verdict::Diverged;
  }
  std::optional<double> conv, div;
  for (const auto& run : st.runs) {
    if (run.verdict == BrezisMerleRun::Verdict::Converged) conv = std::max(conv.value_or(run.p), run.p);
    if (run.verdict == BrezisMerleRun::Verdict::Diverged) div = std::min(div.value_or(run.p), run.p);
  }
  if (conv && div && *conv < *div) st.transition = 0.5 * (*conv + *div);
  return st;
}

}  // namespace qcurv
