#pragma once

// Fixed quadrature rules: Gauss-Legendre on [-1,1], the 7/15-point
// Gauss-Kronrod pair, and product rules on unit spheres S^{d-1} in R^d.

#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "qcurv/core.hpp"

namespace qcurv {

struct Rule1D {
  std::vector<double> nodes;
  std::vector<double> weights;
};

namespace detail {

inline Rule1D compute_gauss_legendre(int m) {
  Rule1D r;
  r.nodes.resize(static_cast<std::size_t>(m));
  r.weights.resize(static_cast<std::size_t>(m));
  // P_m(x) and P_m'(x) by the three-term recurrence.
  auto legendre = [m](double x) {
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= m; ++k) {
      const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    return std::pair{p1, m * (x * p1 - p0) / (x * x - 1.0)};
  };
  for (int i = 0; i < (m + 1) / 2; ++i) {
    double x = std::cos(kPi * (i + 0.75) / (m + 0.5));
    for (int it = 0; it < 100; ++it) {
      const auto [p, dp] = legendre(x);
      const double dx = p / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double dp = legendre(x).second;
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    r.nodes[static_cast<std::size_t>(i)] = -x;
    r.nodes[static_cast<std::size_t>(m - 1 - i)] = x;
    r.weights[static_cast<std::size_t>(i)] = w;
    r.weights[static_cast<std::size_t>(m - 1 - i)] = w;
  }
  if (m % 2 == 1) r.nodes[static_cast<std::size_t>(m / 2)] = 0.0;
  return r;
}

}  // namespace detail

// m-point Gauss-Legendre rule on [-1,1], cached per m.
inline const Rule1D& gauss_legendre(int m) {
  require(m >= 1, ErrorKind::InvalidArgument, "Gauss-Legendre order must be positive");
  static std::mutex mu;
  static std::map<int, std::unique_ptr<Rule1D>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[m];
  if (!slot) slot = std::make_unique<Rule1D>(detail::compute_gauss_legendre(m));
  return *slot;
}

// 15-point Kronrod extension of the 7-point Gauss rule on [-1,1].
struct KronrodPair {
  std::array<double, 15> nodes{};
  std::array<double, 15> kronrod{};
  std::array<double, 15> gauss{};  // zero at the Kronrod-only nodes
};

inline const KronrodPair& gauss_kronrod15() {
  static const KronrodPair pair = [] {
    using GK = boost::math::quadrature::gauss_kronrod<double, 15>;
    using G = boost::math::quadrature::gauss<double, 7>;
    const auto a = GK::abscissa();
    const auto w = GK::weights();
    const auto gw = G::weights();
    KronrodPair p;
    std::size_t k = 0;
    for (std::size_t i = a.size(); i-- > 1;) {
      p.nodes[k] = -a[i];
      p.kronrod[k] = w[i];
      p.gauss[k] = (i % 2 == 0) ? gw[i / 2] : 0.0;
      ++k;
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
      p.nodes[k] = a[i];
      p.kronrod[k] = w[i];
      p.gauss[k] = (i % 2 == 0) ? gw[i / 2] : 0.0;
      ++k;
    }
    return p;
  }();
  return pair;
}

// ---------------------------------------------------------------------------
// Sphere rules
// ---------------------------------------------------------------------------

// Nodes and weights on S^{d-1} in R^d; weights sum to |S^{d-1}|.
//
// d = 1: the two points +-1.  d = 2: trapezoid with 2*order azimuths.
// d >= 3: recursive product. A direction is (t, sqrt(1-t^2) w') with w' on
// S^{d-2}; t carries the weight (1-t^2)^{(d-3)/2}. Odd d makes that weight a
// polynomial and t uses Gauss-Legendre; even d uses Gauss-Chebyshev of the
// second kind, exact for sqrt(1-t^2) times polynomials. For d = 3 this is
// Gauss-Legendre in cos(theta) times a uniform azimuthal trapezoid; for d = 5
// it is two polar Gauss rules over that S^2 rule, order^2 * 2*order^2 nodes.
struct SphereRule {
  int dim = 0;
  std::vector<Point> nodes;
  std::vector<double> weights;
};

namespace detail {

inline SphereRule build_sphere_rule(int d, int order) {
  SphereRule rule;
  rule.dim = d;
  if (d == 1) {
    rule.nodes = {Point{1.0}, Point{-1.0}};
    rule.weights = {1.0, 1.0};
    return rule;
  }
  if (d == 2) {
    const int m = 2 * order;
    for (int k = 0; k < m; ++k) {
      const double phi = 2.0 * kPi * (k + 0.5) / m;
      rule.nodes.push_back(Point{std::cos(phi), std::sin(phi)});
      rule.weights.push_back(2.0 * kPi / m);
    }
    return rule;
  }
  const SphereRule sub = build_sphere_rule(d - 1, order);
  std::vector<double> ts, ws;
  if (d % 2 == 1) {
    const int pow_half = (d - 3) / 2;
    const Rule1D& gl = gauss_legendre(order + pow_half);
    for (std::size_t i = 0; i < gl.nodes.size(); ++i) {
      const double t = gl.nodes[i];
      ts.push_back(t);
      ws.push_back(gl.weights[i] * std::pow(1.0 - t * t, pow_half));
    }
  } else {
    // (1-t^2)^{(d-3)/2} = sqrt(1-t^2) * (1-t^2)^{(d-4)/2}
    const int extra = (d - 4) / 2;
    const int m = order + extra;
    for (int k = 1; k <= m; ++k) {
      const double th = k * kPi / (m + 1);
      const double t = std::cos(th);
      ts.push_back(t);
      ws.push_back(kPi / (m + 1) * std::sin(th) * std::sin(th) * std::pow(1.0 - t * t, extra));
    }
  }
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const double t = ts[i];
    const double st = std::sqrt(std::max(0.0, 1.0 - t * t));
    for (std::size_t j = 0; j < sub.nodes.size(); ++j) {
      Point p(d);
      p[0] = t;
      for (int c = 0; c < d - 1; ++c) p[c + 1] = st * sub.nodes[j][c];
      rule.nodes.push_back(p);
      rule.weights.push_back(ws[i] * sub.weights[j]);
    }
  }
  return rule;
}

}  // namespace detail

inline const SphereRule& sphere_rule(int d, int order) {
  require(d >= 1 && d <= kMaxDim, ErrorKind::InvalidDimension, "sphere rule dimension");
  require(order >= 1, ErrorKind::InvalidArgument, "sphere rule order");
  static std::mutex mu;
  static std::map<std::pair<int, int>, std::unique_ptr<SphereRule>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[{d, order}];
  if (!slot) slot = std::make_unique<SphereRule>(detail::build_sphere_rule(d, d == 1 ? 1 : order));
  return *slot;
}

// Sphere rule whose polar axis (the first coordinate) is carried onto `pole`
// by a Householder reflection. Aligning the pole with a feature direction puts
// the polar node clustering where the integrand varies fastest.
inline SphereRule oriented_sphere_rule(int d, int order, const Point& pole) {
  SphereRule rule = sphere_rule(d, order);
  const double pn = pole.norm();
  if (d == 1 || pn == 0.0) return rule;
  Point e = pole * (1.0 / pn);
  Point v(d);
  v[0] = 1.0;
  v -= e;
  const double vv = v.norm2();
  if (vv < 1e-28) return rule;
  for (auto& p : rule.nodes) {
    const double c = 2.0 * dot(v, p) / vv;
    p -= c * v;
  }
  return rule;
}

// Sphere rule in d >= 2 whose polar variable t = <w, pole> is integrated by a
// composite Gauss-Legendre rule on the pieces of [-1,1] cut at t_breaks, each
// piece with `order` nodes. Integrands with a sharp polar feature at a known
// t (a cutoff seen from another centre) stay spectrally resolved.
inline SphereRule banded_sphere_rule(int d, int order, const Point& pole, std::vector<double> t_breaks) {
  require(d >= 2, ErrorKind::InvalidDimension, "banded rule needs d >= 2");
  SphereRule rule;
  rule.dim = d;
  t_breaks.push_back(-1.0);
  t_breaks.push_back(1.0);
  std::sort(t_breaks.begin(), t_breaks.end());
  std::vector<double> ts, ws;
  const Rule1D& gl = gauss_legendre(order);
  const int pow_half = d - 3;  // weight (1-t^2)^{(d-3)/2}, as a power of sqrt(1-t^2)
  for (std::size_t b = 0; b + 1 < t_breaks.size(); ++b) {
    const double lo = std::max(-1.0, t_breaks[b]), hi = std::min(1.0, t_breaks[b + 1]);
    if (!(hi > lo)) continue;
    if (d == 2) {
      // t = cos(phi) on both half circles: integrate in phi with the same cuts
      const double pa = std::acos(hi), pb = std::acos(lo);
      for (std::size_t i = 0; i < gl.nodes.size(); ++i) {
        const double phi = 0.5 * (pa + pb) + 0.5 * (pb - pa) * gl.nodes[i];
        ts.push_back(phi);
        ws.push_back(0.5 * (pb - pa) * gl.weights[i]);
      }
      continue;
    }
    for (std::size_t i = 0; i < gl.nodes.size(); ++i) {
      const double t = 0.5 * (lo + hi) + 0.5 * (hi - lo) * gl.nodes[i];
      ts.push_back(t);
      ws.push_back(0.5 * (hi - lo) * gl.weights[i] * std::pow(std::sqrt(std::max(0.0, 1.0 - t * t)), pow_half));
    }
  }
  if (d == 2) {
    for (std::size_t i = 0; i < ts.size(); ++i)
      for (double sgn : {1.0, -1.0}) {
        rule.nodes.push_back(Point{std::cos(ts[i]), sgn * std::sin(ts[i])});
        rule.weights.push_back(ws[i]);
      }
  } else {
    const SphereRule& sub = sphere_rule(d - 1, order);
    for (std::size_t i = 0; i < ts.size(); ++i) {
      const double st = std::sqrt(std::max(0.0, 1.0 - ts[i] * ts[i]));
      for (std::size_t j = 0; j < sub.nodes.size(); ++j) {
        Point p(d);
        p[0] = ts[i];
        for (int c = 0; c < d - 1; ++c) p[c + 1] = st * sub.nodes[j][c];
        rule.nodes.push_back(p);
        rule.weights.push_back(ws[i] * sub.weights[j]);
      }
    }
  }
  const double pn = pole.norm();
  Point e = pole * (1.0 / pn);
  Point v(d);
  v[0] = 1.0;
  v -= e;
  const double vv = v.norm2();
  if (vv > 1e-28)
    for (auto& p : rule.nodes) p -= (2.0 * dot(v, p) / vv) * v;
  return rule;
}

}  // namespace qcurv
