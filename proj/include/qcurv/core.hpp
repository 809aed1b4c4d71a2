#pragma once

// Shared domain types: points, fields, operator orders, polynomials,
// quadrature configuration and the geometric constants of unit spheres/balls.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace qcurv {

inline constexpr double kPi = std::numbers::pi;

// Largest ambient dimension a Point can carry. The library targets n in {1,3,5};
// the sphere-measure check of |S^5| needs directions in R^6.
inline constexpr int kMaxDim = 6;

enum class ErrorKind {
  InvalidArgument,
  InvalidDimension,
  SingularFit,
  TailNotCertified,
  BudgetExhausted,
  MomentVerification,
  Precondition,
  Config,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::InvalidDimension: return "invalid-dimension";
    case ErrorKind::SingularFit: return "singular-fit";
    case ErrorKind::TailNotCertified: return "tail-not-certified";
    case ErrorKind::BudgetExhausted: return "budget-exhausted";
    case ErrorKind::MomentVerification: return "moment-verification";
    case ErrorKind::Precondition: return "precondition";
    case ErrorKind::Config: return "config";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline void require(bool cond, ErrorKind kind, const char* msg) {
  if (!cond) throw Error(kind, msg);
}

// Neumaier-compensated accumulator. Summation order is the caller's order, so
// identical inputs give bitwise identical totals.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  CompensatedSum& operator+=(double x) {
    add(x);
    return *this;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

// ---------------------------------------------------------------------------
// Point
// ---------------------------------------------------------------------------

class Point {
 public:
  Point() = default;
  explicit Point(int dim) : dim_(dim) {
    require(dim >= 1 && dim <= kMaxDim, ErrorKind::InvalidDimension, "point dimension out of range");
  }
  Point(std::initializer_list<double> coords) : Point(static_cast<int>(coords.size())) {
    std::copy(coords.begin(), coords.end(), c_.begin());
  }
  static Point from(const std::vector<double>& coords) {
    Point p(static_cast<int>(coords.size()));
    std::copy(coords.begin(), coords.end(), p.c_.begin());
    return p;
  }
  static Point axis(int dim, int i, double scale = 1.0) {
    Point p(dim);
    p[i] = scale;
    return p;
  }

  int dim() const { return dim_; }
  double& operator[](int i) { return c_[static_cast<std::size_t>(i)]; }
  double operator[](int i) const { return c_[static_cast<std::size_t>(i)]; }

  double norm2() const {
    double s = 0.0;
    for (int i = 0; i < dim_; ++i) s += c_[i] * c_[i];
    return s;
  }
  double norm() const { return std::sqrt(norm2()); }

  std::vector<double> coords() const { return {c_.begin(), c_.begin() + dim_}; }

  Point& operator+=(const Point& o) {
    for (int i = 0; i < dim_; ++i) c_[i] += o.c_[i];
    return *this;
  }
  Point& operator-=(const Point& o) {
    for (int i = 0; i < dim_; ++i) c_[i] -= o.c_[i];
    return *this;
  }
  Point& operator*=(double s) {
    for (int i = 0; i < dim_; ++i) c_[i] *= s;
    return *this;
  }
  friend Point operator+(Point a, const Point& b) { return a += b; }
  friend Point operator-(Point a, const Point& b) { return a -= b; }
  friend Point operator*(Point a, double s) { return a *= s; }
  friend Point operator*(double s, Point a) { return a *= s; }
  friend Point operator-(Point a) { return a *= -1.0; }
  friend bool operator==(const Point& a, const Point& b) {
    if (a.dim_ != b.dim_) return false;
    for (int i = 0; i < a.dim_; ++i)
      if (a.c_[i] != b.c_[i]) return false;
    return true;
  }

 private:
  std::array<double, kMaxDim> c_{};
  int dim_ = 0;
};

inline double dot(const Point& a, const Point& b) {
  double s = 0.0;
  for (int i = 0; i < a.dim(); ++i) s += a[i] * b[i];
  return s;
}
inline double distance(const Point& a, const Point& b) { return (a - b).norm(); }

// ---------------------------------------------------------------------------
// Operator order s = k + sigma
// ---------------------------------------------------------------------------

class FracOrder {
 public:
  FracOrder(int integer_part, double frac_part) : k_(integer_part), sigma_(frac_part) {
    require(k_ >= 0, ErrorKind::InvalidArgument, "integer part of order must be nonnegative");
    require(sigma_ >= 0.0 && sigma_ < 1.0, ErrorKind::InvalidArgument, "fractional part must lie in [0,1)");
  }
  // Splits s = floor(s) + frac(s).
  static FracOrder from_total(double s) {
    require(s >= 0.0, ErrorKind::InvalidArgument, "order must be nonnegative");
    const double k = std::floor(s);
    return FracOrder(static_cast<int>(k), s - k);
  }
  // Order n/2 of the main equation; n odd gives k=(n-1)/2, sigma=1/2.
  static FracOrder half_dimension(int n) { return from_total(0.5 * n); }

  int integer_part() const { return k_; }
  double frac_part() const { return sigma_; }
  double total() const { return k_ + sigma_; }
  bool is_identity() const { return k_ == 0 && sigma_ == 0.0; }

 private:
  int k_;
  double sigma_;
};

// ---------------------------------------------------------------------------
// ScalarField
// ---------------------------------------------------------------------------

enum class Smoothness { C0, C2, Smooth };

struct DecayHint {
  enum class Kind { Schwartz, PowerDecay, LogGrowth, PolyGrowth, None };
  Kind kind = Kind::None;
  double rate = 0.0;  // decay rate r for PowerDecay, growth degree for PolyGrowth

  static DecayHint schwartz() { return {Kind::Schwartz, 0.0}; }
  static DecayHint power(double r) { return {Kind::PowerDecay, r}; }
  static DecayHint log_growth() { return {Kind::LogGrowth, 0.0}; }
  static DecayHint poly_growth(double degree) { return {Kind::PolyGrowth, degree}; }
  static DecayHint none() { return {Kind::None, 0.0}; }
};

using PointFn = std::function<double(const Point&)>;

// An evaluable function on R^n with the metadata quadrature needs: smoothness
// class, a far-field decay promise, and optional analytic closures for
// (-Delta)^k f. `feature_center` marks where the field's mass and variation
// concentrate; `support_radius` declares f == 0 outside B(feature_center, radius).
struct ScalarField {
  int dim = 1;
  PointFn eval;
  Smoothness smoothness = Smoothness::Smooth;
  DecayHint decay = DecayHint::none();
  std::vector<PointFn> neg_lap_powers;  // entry k-1 evaluates (-Delta)^k f
  std::optional<Point> feature_center;
  std::optional<double> support_radius;
  double feature_scale = 1.0;

  double operator()(const Point& x) const { return eval(x); }

  Point center() const { return feature_center.value_or(Point(dim)); }

  bool has_neg_lap(int k) const { return k == 0 || static_cast<int>(neg_lap_powers.size()) >= k; }

  // (-Delta)^k f as a field; only valid when has_neg_lap(k).
  ScalarField neg_lap_field(int k) const {
    if (k == 0) return *this;
    require(has_neg_lap(k), ErrorKind::Precondition, "no analytic integer-Laplacian closure registered");
    ScalarField out = *this;
    out.eval = neg_lap_powers[static_cast<std::size_t>(k - 1)];
    out.neg_lap_powers.assign(neg_lap_powers.begin() + k, neg_lap_powers.end());
    // Differentiating a growing field lowers its growth; a decaying one decays faster.
    switch (decay.kind) {
      case DecayHint::Kind::PowerDecay: out.decay = DecayHint::power(decay.rate + 2.0 * k); break;
      case DecayHint::Kind::LogGrowth: out.decay = DecayHint::power(2.0 * k); break;
      case DecayHint::Kind::PolyGrowth:
        out.decay = decay.rate - 2.0 * k >= 0 ? DecayHint::poly_growth(decay.rate - 2.0 * k)
                                              : DecayHint::power(2.0 * k - decay.rate);
        break;
      default: break;
    }
    return out;
  }

  static ScalarField constant(int dim, double c) {
    ScalarField f;
    f.dim = dim;
    f.eval = [c](const Point&) { return c; };
    f.decay = DecayHint::poly_growth(0.0);
    f.neg_lap_powers = {[](const Point&) { return 0.0; }, [](const Point&) { return 0.0; },
                        [](const Point&) { return 0.0; }};
    return f;
  }
};

// Linear combination a f + b g; closures are combined when both sides carry them.
inline ScalarField combine(double a, const ScalarField& f, double b, const ScalarField& g) {
  require(f.dim == g.dim, ErrorKind::InvalidDimension, "dimension mismatch");
  ScalarField out = f;
  out.eval = [a, b, fe = f.eval, ge = g.eval](const Point& x) { return a * fe(x) + b * ge(x); };
  out.neg_lap_powers.clear();
  const std::size_t k = std::min(f.neg_lap_powers.size(), g.neg_lap_powers.size());
  for (std::size_t i = 0; i < k; ++i)
    out.neg_lap_powers.push_back(
        [a, b, fe = f.neg_lap_powers[i], ge = g.neg_lap_powers[i]](const Point& x) { return a * fe(x) + b * ge(x); });
  // Keep the weaker of the two far-field promises.
  auto rank = [](DecayHint h) {
    switch (h.kind) {
      case DecayHint::Kind::Schwartz: return 1e300;
      case DecayHint::Kind::PowerDecay: return h.rate;
      case DecayHint::Kind::LogGrowth: return -1e-9;
      case DecayHint::Kind::PolyGrowth: return h.rate == 0.0 ? 0.0 : -h.rate;
      case DecayHint::Kind::None: break;
    }
    return -1e300;
  };
  auto slower = [&](DecayHint x, DecayHint y) { return rank(x) <= rank(y) ? x : y; };
  out.decay = slower(f.decay, g.decay);
  if (f.smoothness != g.smoothness) out.smoothness = std::min(f.smoothness, g.smoothness);
  if (f.support_radius && g.support_radius && f.center() == g.center())
    out.support_radius = std::max(*f.support_radius, *g.support_radius);
  else
    out.support_radius.reset();
  return out;
}

// f(. - h): the same field translated by h.
inline ScalarField translated(const ScalarField& f, const Point& h) {
  ScalarField out = f;
  out.eval = [fe = f.eval, h](const Point& x) { return fe(x - h); };
  for (auto& c : out.neg_lap_powers) c = [c, h](const Point& x) { return c(x - h); };
  out.feature_center = f.center() + h;
  return out;
}

// f(mu .): the same field dilated; (-Delta)^k picks up mu^{2k}.
inline ScalarField dilated(const ScalarField& f, double mu) {
  ScalarField out = f;
  out.eval = [fe = f.eval, mu](const Point& x) { return fe(mu * x); };
  for (std::size_t k = 0; k < out.neg_lap_powers.size(); ++k) {
    const double w = std::pow(mu, 2.0 * static_cast<double>(k + 1));
    out.neg_lap_powers[k] = [c = f.neg_lap_powers[k], mu, w](const Point& x) { return w * c(mu * x); };
  }
  out.feature_center = f.center() * (1.0 / mu);
  out.feature_scale = f.feature_scale / mu;
  if (f.support_radius) out.support_radius = *f.support_radius / mu;
  return out;
}

// ---------------------------------------------------------------------------
// Polynomial in n variables
// ---------------------------------------------------------------------------

using MultiIndex = std::vector<int>;

inline int total_degree(const MultiIndex& a) {
  int s = 0;
  for (int v : a) s += v;
  return s;
}

// Graded lexicographic order: lower total degree first; within a degree the
// larger leading exponent comes first (x1^2 before x1 x2 before x2^2).
struct GradedLex {
  bool operator()(const MultiIndex& a, const MultiIndex& b) const {
    const int da = total_degree(a), db = total_degree(b);
    if (da != db) return da < db;
    return std::lexicographical_compare(b.begin(), b.end(), a.begin(), a.end());
  }
};

// All multi-indices in n variables of degree <= d, in graded lex order.
inline std::vector<MultiIndex> monomials_up_to(int n, int d) {
  std::vector<MultiIndex> out;
  MultiIndex cur(static_cast<std::size_t>(n), 0);
  std::function<void(int, int)> rec = [&](int i, int left) {
    if (i == n - 1) {
      cur[static_cast<std::size_t>(i)] = left;
      out.push_back(cur);
      return;
    }
    for (int e = left; e >= 0; --e) {
      cur[static_cast<std::size_t>(i)] = e;
      rec(i + 1, left - e);
    }
  };
  for (int deg = 0; deg <= d; ++deg) rec(0, deg);
  std::sort(out.begin(), out.end(), GradedLex{});
  return out;
}

inline double monomial(const MultiIndex& a, const Point& x) {
  double v = 1.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (int e = 0; e < a[i]; ++e) v *= x[static_cast<int>(i)];
  return v;
}

class Polynomial {
 public:
  explicit Polynomial(int dim) : dim_(dim) {
    require(dim >= 1, ErrorKind::InvalidDimension, "polynomial dimension must be positive");
  }

  int dim() const { return dim_; }
  const std::map<MultiIndex, double, GradedLex>& coeffs() const { return coeffs_; }

  void set(const MultiIndex& a, double c) {
    require(static_cast<int>(a.size()) == dim_, ErrorKind::InvalidDimension, "multi-index length mismatch");
    if (c == 0.0)
      coeffs_.erase(a);
    else
      coeffs_[a] = c;
  }
  double coeff(const MultiIndex& a) const {
    auto it = coeffs_.find(a);
    return it == coeffs_.end() ? 0.0 : it->second;
  }
  // Max |alpha| over nonzero coefficients; the zero polynomial reports -1.
  int degree() const {
    int d = -1;
    for (const auto& [a, c] : coeffs_) d = std::max(d, total_degree(a));
    return d;
  }
  double operator()(const Point& x) const {
    CompensatedSum s;
    for (const auto& [a, c] : coeffs_) s += c * monomial(a, x);
    return s.value();
  }

  nlohmann::json to_json() const {
    nlohmann::json terms = nlohmann::json::array();
    for (const auto& [a, c] : coeffs_) terms.push_back({{"coeff", c}, {"exponent", a}});
    return {{"degree", degree()}, {"dim", dim_}, {"terms", terms}};
  }

 private:
  int dim_;
  std::map<MultiIndex, double, GradedLex> coeffs_;
};

struct PolyFit {
  Polynomial poly;
  double max_residual = 0.0;
};

// Least-squares polynomial of total degree <= max_degree through the samples.
// Coefficients below 1e-12 of the data scale are dropped so that exact data
// reproduces a canonical sparse polynomial.
inline PolyFit poly_fit(const std::vector<std::pair<Point, double>>& samples, int max_degree) {
  require(!samples.empty(), ErrorKind::InvalidArgument, "no samples");
  require(max_degree >= 0, ErrorKind::InvalidArgument, "negative degree");
  const int n = samples.front().first.dim();
  const auto basis = monomials_up_to(n, max_degree);
  const auto m = static_cast<Eigen::Index>(samples.size());
  const auto p = static_cast<Eigen::Index>(basis.size());
  require(m >= p, ErrorKind::SingularFit, "fewer samples than monomials");

  // Columns are scaled by the sample extent to keep the design well conditioned.
  double extent = 0.0;
  for (const auto& [x, _] : samples) extent = std::max(extent, x.norm());
  const double scale = extent > 0.0 ? extent : 1.0;

  Eigen::MatrixXd a(m, p);
  Eigen::VectorXd b(m);
  double ymax = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& [x, y] = samples[static_cast<std::size_t>(i)];
    require(x.dim() == n, ErrorKind::InvalidDimension, "mixed sample dimensions");
    const Point xs = x * (1.0 / scale);
    for (Eigen::Index j = 0; j < p; ++j) a(i, j) = monomial(basis[static_cast<std::size_t>(j)], xs);
    b(i) = y;
    ymax = std::max(ymax, std::abs(y));
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  qr.setThreshold(1e-12);
  require(qr.rank() == p, ErrorKind::SingularFit, "rank-deficient design (degenerate sample geometry)");
  const Eigen::VectorXd c = qr.solve(b);

  Polynomial poly(n);
  const double drop = 1e-12 * std::max(ymax, 1.0);
  for (Eigen::Index j = 0; j < p; ++j) {
    const auto& alpha = basis[static_cast<std::size_t>(j)];
    const double cj = c(j) / std::pow(scale, total_degree(alpha));
    if (std::abs(c(j)) > drop) poly.set(alpha, cj);
  }
  double res = 0.0;
  for (const auto& [x, y] : samples) res = std::max(res, std::abs(poly(x) - y));
  return {poly, res};
}

// ---------------------------------------------------------------------------
// Quadrature configuration
// ---------------------------------------------------------------------------

struct QuadratureSpec {
  double truncation_radius = 1099511627776.0;  // 2^40
  double rel_tol = 1e-10;
  double abs_tol = 1e-13;
  int max_subdivisions = 80;  // dyadic shells below the truncation radius
  int angular_order = 24;
  std::uint64_t mc_samples = 200000;
  std::uint64_t seed = 20240229;
  int max_refine_depth = 18;  // bisections allowed per shell
  bool strict = false;        // throw when the tolerance is not met within budget

  void validate() const {
    require(truncation_radius > 0.0, ErrorKind::Config, "truncation_radius must be positive");
    require(rel_tol > 0.0 && abs_tol > 0.0, ErrorKind::Config, "tolerances must be positive");
    require(max_subdivisions >= 1, ErrorKind::Config, "max_subdivisions must be positive");
    require(angular_order >= 1, ErrorKind::Config, "angular_order must be positive");
    require(max_refine_depth >= 0, ErrorKind::Config, "max_refine_depth must be nonnegative");
  }

  // Angular order suited to a dimension: n = 5 product rules grow as order^4.
  int angular_order_for(int n) const {
    if (n <= 3) return angular_order;
    return std::max(4, angular_order / 3);
  }

  static QuadratureSpec from_json(const nlohmann::json& j) {
    QuadratureSpec s;
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    try {
      get("truncation_radius", s.truncation_radius);
      get("rel_tol", s.rel_tol);
      get("abs_tol", s.abs_tol);
      get("max_subdivisions", s.max_subdivisions);
      get("angular_order", s.angular_order);
      get("mc_samples", s.mc_samples);
      get("seed", s.seed);
      get("max_refine_depth", s.max_refine_depth);
      get("strict", s.strict);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::Config, std::string("quadrature block: ") + e.what());
    }
    s.validate();
    return s;
  }
  nlohmann::json to_json() const {
    return {{"abs_tol", abs_tol},       {"angular_order", angular_order},
            {"max_refine_depth", max_refine_depth}, {"max_subdivisions", max_subdivisions},
            {"mc_samples", mc_samples}, {"rel_tol", rel_tol},
            {"seed", seed},             {"strict", strict},
            {"truncation_radius", truncation_radius}};
  }
};

// ---------------------------------------------------------------------------
// Geometric constants
// ---------------------------------------------------------------------------

// Surface area of the unit sphere S^{d-1} in R^d.
inline double unit_sphere_area_in(int d) {
  require(d >= 1, ErrorKind::InvalidDimension, "sphere dimension");
  return 2.0 * std::pow(kPi, 0.5 * d) / std::tgamma(0.5 * d);
}
// Volume of the unit ball in R^d.
inline double unit_ball_volume(int d) {
  require(d >= 1, ErrorKind::InvalidDimension, "ball dimension");
  return std::pow(kPi, 0.5 * d) / std::tgamma(0.5 * d + 1.0);
}

inline double factorial(int m) {
  require(m >= 0, ErrorKind::InvalidArgument, "factorial of negative integer");
  double f = 1.0;
  for (int i = 2; i <= m; ++i) f *= i;
  return f;
}

struct GeomConstants {
  int dim = 0;
  double sphere_area = 0.0;  // |S^n|, the n-sphere in R^{n+1}
  double ball_volume = 0.0;  // |B_1| in R^n
  double gamma_n = 0.0;      // (n-1)!/2 |S^n|

  nlohmann::json to_json() const {
    return {{"ball_volume", ball_volume}, {"dim", dim}, {"gamma_n", gamma_n}, {"sphere_area", sphere_area}};
  }
};

inline GeomConstants geom_constants(int n) {
  require(n >= 1, ErrorKind::InvalidDimension, "n must be >= 1");
  GeomConstants g;
  g.dim = n;
  g.sphere_area = unit_sphere_area_in(n + 1);
  g.ball_volume = unit_ball_volume(n);
  g.gamma_n = factorial(n - 1) / 2.0 * g.sphere_area;
  return g;
}

// Coefficient of the Psi kernel, the fundamental solution of (-Delta)^{(n-1)/2}: Psi = c/|x|.
inline double polyharmonic_fs_coefficient(int n) {
  require(n >= 3 && n % 2 == 1, ErrorKind::InvalidDimension, "Psi needs odd n >= 3");
  const double b1 = unit_ball_volume(n);
  return std::tgamma(0.5) / (n * std::pow(2.0, n - 2) * b1 * std::tgamma(0.5 * n) * factorial((n - 3) / 2));
}
// Coefficient of Phi, the fundamental solution of (-Delta)^{1/2}: Phi = c/|x|^{n-1}.
inline double halflap_fs_coefficient(int n) {
  require(n >= 3 && n % 2 == 1, ErrorKind::InvalidDimension, "Phi needs odd n >= 3");
  return factorial((n - 3) / 2) / (2.0 * std::pow(kPi, 0.5 * (n + 1)));
}

// |S^{n-1}| * coeff(Psi) * coeff(Phi); equals 1/gamma_n.
inline double reciprocal_gamma_via_kernels(int n) {
  return unit_sphere_area_in(n) * polyharmonic_fs_coefficient(n) * halflap_fs_coefficient(n);
}

}  // namespace qcurv
