// One-dimensional Legendre kernels, the integrated Legendre functions psi_j,
// and Gauss-Legendre quadrature (plain and geometrically graded).
#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <utility>
#include <vector>

namespace hpexp::orthopoly {

/// L_n(x) by the three-term recurrence.
inline double legendre(int n, double x) {
  if (n == 0) return 1.0;
  double pm1 = 1.0, p = x;
  for (int k = 1; k < n; ++k) {
    const double next = ((2 * k + 1) * x * p - k * pm1) / (k + 1);
    pm1 = p;
    p = next;
  }
  return p;
}

/// Values L_0(x) .. L_n(x).
inline std::vector<double> legendre_all(int n, double x) {
  std::vector<double> v(static_cast<std::size_t>(n) + 1);
  v[0] = 1.0;
  if (n >= 1) v[1] = x;
  for (int k = 1; k < n; ++k) v[k + 1] = ((2 * k + 1) * x * v[k] - k * v[k - 1]) / (k + 1);
  return v;
}

/// Table t[k][m] = L_m^{(k)}(x) for m <= n, k <= kmax, built from
/// D^k L_{m+1} = D^k L_{m-1} + (2m+1) D^{k-1} L_m.
inline std::vector<std::vector<double>> legendre_deriv_table(int n, int kmax, double x) {
  std::vector<std::vector<double>> t(static_cast<std::size_t>(kmax) + 1);
  t[0] = legendre_all(n, x);
  for (int k = 1; k <= kmax; ++k) {
    auto& row = t[k];
    const auto& prev = t[k - 1];
    row.assign(static_cast<std::size_t>(n) + 1, 0.0);
    if (n >= 1) row[1] = (k == 1) ? 1.0 : 0.0;
    for (int m = 1; m < n; ++m) row[m + 1] = row[m - 1] + (2 * m + 1) * prev[m];
  }
  return t;
}

/// k-th derivative of L_n at x; zero when k > n.
inline double legendre_deriv(int n, int k, double x) {
  if (k > n) return 0.0;
  if (k == 0) return legendre(n, x);
  return legendre_deriv_table(n, k, x)[k][n];
}

/// psi_j(x) = int_{-1}^x L_j. psi_0 = x + 1; psi_j = -(1-x^2) L_j'(x) / (j(j+1)) for j >= 1.
inline double psi(int j, double x) {
  if (j == 0) return x + 1.0;
  return -(1.0 - x * x) * legendre_deriv(j, 1, x) / (static_cast<double>(j) * (j + 1));
}

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
  int exactness_degree = 0;

  [[nodiscard]] std::size_t size() const { return nodes.size(); }

  template <class F>
  [[nodiscard]] double integrate(F&& f) const {
    double s = 0.0;
    for (std::size_t q = 0; q < nodes.size(); ++q) s += weights[q] * f(nodes[q]);
    return s;
  }
};

/// n-point Gauss-Legendre rule on [-1,1]. Newton on L_n from Chebyshev guesses.
inline QuadratureRule gauss_rule(int n) {
  if (n < 1) throw std::invalid_argument("gauss_rule: node count must be >= 1");
  QuadratureRule r;
  r.nodes.resize(n);
  r.weights.resize(n);
  r.exactness_degree = 2 * n - 1;
  // returns L_n'(x), leaves L_n(x) in value
  const auto eval = [n](double x, double& value) {
    double p0 = 1.0, p1 = x;
    for (int k = 1; k < n; ++k) {
      const double p2 = ((2 * k + 1) * x * p1 - k * p0) / (k + 1);
      p0 = p1;
      p1 = p2;
    }
    value = p1;
    return n * (x * p1 - p0) / (x * x - 1.0);
  };
  const int half = (n + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double value = 0.0;
    for (int it = 0; it < 100; ++it) {
      const double d = eval(x, value);
      const double step = value / d;
      x -= step;
      if (std::abs(step) < 1e-15) break;
    }
    const double dp = eval(x, value);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    r.nodes[i] = -x;
    r.nodes[n - 1 - i] = x;
    r.weights[i] = w;
    r.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) r.nodes[n / 2] = 0.0;
  return r;
}

/// Composite Gauss rule on [a,b] built from a reference rule.
inline void append_mapped(const QuadratureRule& ref, double a, double b, QuadratureRule& out) {
  const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
  for (std::size_t q = 0; q < ref.size(); ++q) {
    out.nodes.push_back(mid + half * ref.nodes[q]);
    out.weights.push_back(half * ref.weights[q]);
  }
}

/// Composite rule with cells shrinking geometrically (factor `ratio`) toward `marked_end`.
struct GradedRule {
  QuadratureRule base;  // per-cell reference rule
  std::vector<double> breakpoints;
  double ratio = 0.15;
  int layers = 0;
  int marked_end = -1;
  QuadratureRule composite;

  template <class F>
  [[nodiscard]] double integrate(F&& f) const {
    return composite.integrate(std::forward<F>(f));
  }
};

inline GradedRule graded_rule(double ratio, int layers, int per_cell_order, int marked_end) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw std::invalid_argument("graded_rule: ratio must lie in (0,1)");
  if (layers < 1) throw std::invalid_argument("graded_rule: layers must be >= 1");
  if (marked_end != -1 && marked_end != 1) throw std::invalid_argument("graded_rule: marked_end must be -1 or +1");
  GradedRule g;
  g.base = gauss_rule(per_cell_order);
  g.ratio = ratio;
  g.layers = layers;
  g.marked_end = marked_end;
  // distance from the marked end: 0, 2 r^L, 2 r^{L-1}, ..., 2 r, 2
  std::vector<double> dist{0.0};
  for (int k = layers; k >= 1; --k) dist.push_back(2.0 * std::pow(ratio, k));
  dist.push_back(2.0);
  if (marked_end == -1) {
    for (double t : dist) g.breakpoints.push_back(-1.0 + t);
  } else {
    for (auto it = dist.rbegin(); it != dist.rend(); ++it) g.breakpoints.push_back(1.0 - *it);
  }
  g.composite.exactness_degree = g.base.exactness_degree;
  for (std::size_t c = 0; c + 1 < g.breakpoints.size(); ++c)
    append_mapped(g.base, g.breakpoints[c], g.breakpoints[c + 1], g.composite);
  return g;
}

}  // namespace hpexp::orthopoly
