// Tensorized Legendre expansions on the reference element (-1,1)^d:
// coefficient storage, evaluation, exact spectral differentiation, Parseval
// norms and the weighted seminorms |.|_{V^s}.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "hpexp/indexsets.hpp"
#include "hpexp/orthopoly.hpp"

namespace hpexp {

using Point = std::array<double, 3>;
using PointFunction = std::function<double(const Point&)>;

/// Point evaluator on the reference element plus optional gradient.
struct FunctionOracle {
  PointFunction value;
  std::function<std::array<double, 3>(const Point&)> gradient;  // may be empty
};

struct LegendreBasisTag {};
struct PsiBasisTag {};

/// Dense d-dimensional array (d = 2 or 3) of basis coefficients. The basis is
/// fixed by the tag; extents are per-axis sizes.
template <class Tag>
class BasicTensor {
 public:
  BasicTensor() = default;
  BasicTensor(int dim, std::array<int, 3> extents) : dim_(dim), ext_(extents) {
    if (dim != 2 && dim != 3) throw std::invalid_argument("tensor dimension must be 2 or 3");
    if (dim == 2) ext_[2] = 1;
    for (int k = 0; k < 3; ++k)
      if (ext_[k] < 1) throw std::invalid_argument("tensor extents must be positive");
    data_.assign(static_cast<std::size_t>(ext_[0]) * ext_[1] * ext_[2], 0.0);
  }

  /// Legendre-style constructor: per-axis maximum degree.
  static BasicTensor with_degrees(int dim, std::array<int, 3> degrees) {
    return BasicTensor(dim, {degrees[0] + 1, degrees[1] + 1, degrees[2] + 1});
  }
  static BasicTensor with_degree(int dim, int degree) {
    return with_degrees(dim, {degree, degree, degree});
  }

  [[nodiscard]] int dim() const { return dim_; }
  [[nodiscard]] int extent(int axis) const { return ext_[axis]; }
  [[nodiscard]] std::array<int, 3> extents() const { return ext_; }
  [[nodiscard]] int degree(int axis) const { return ext_[axis] - 1; }
  [[nodiscard]] int max_degree() const { return *std::max_element(ext_.begin(), ext_.begin() + dim_) - 1; }
  [[nodiscard]] std::size_t size() const { return data_.size(); }
  [[nodiscard]] bool empty() const { return data_.empty(); }

  [[nodiscard]] std::size_t offset(int i0, int i1, int i2 = 0) const {
    return (static_cast<std::size_t>(i0) * ext_[1] + i1) * ext_[2] + i2;
  }
  double& operator()(int i0, int i1, int i2 = 0) { return data_[offset(i0, i1, i2)]; }
  double operator()(int i0, int i1, int i2 = 0) const { return data_[offset(i0, i1, i2)]; }
  double& operator[](const MultiIndex& i) { return (*this)(i[0], i[1], dim_ == 3 ? i[2] : 0); }
  double operator[](const MultiIndex& i) const { return (*this)(i[0], i[1], dim_ == 3 ? i[2] : 0); }

  /// Coefficient or zero when i lies outside the stored box.
  [[nodiscard]] double get(const MultiIndex& i) const {
    for (int k = 0; k < dim_; ++k)
      if (i[k] >= ext_[k]) return 0.0;
    return (*this)[i];
  }

  [[nodiscard]] std::vector<double>& data() { return data_; }
  [[nodiscard]] const std::vector<double>& data() const { return data_; }

  template <class F>
  void for_each(F&& f) const {
    for (int a = 0; a < ext_[0]; ++a)
      for (int b = 0; b < ext_[1]; ++b)
        for (int c = 0; c < ext_[2]; ++c) {
          MultiIndex i = dim_ == 2 ? MultiIndex{a, b} : MultiIndex{a, b, c};
          f(i, data_[offset(a, b, c)]);
        }
  }

  /// Copy into a larger (or smaller) box; entries outside are dropped/zero.
  [[nodiscard]] BasicTensor resized(std::array<int, 3> extents) const {
    BasicTensor out(dim_, extents);
    for (int a = 0; a < std::min(ext_[0], out.ext_[0]); ++a)
      for (int b = 0; b < std::min(ext_[1], out.ext_[1]); ++b)
        for (int c = 0; c < std::min(ext_[2], out.ext_[2]); ++c) out(a, b, c) = (*this)(a, b, c);
    return out;
  }

  BasicTensor& operator+=(const BasicTensor& o) {
    require_same_shape(o);
    for (std::size_t n = 0; n < data_.size(); ++n) data_[n] += o.data_[n];
    return *this;
  }
  BasicTensor& operator-=(const BasicTensor& o) {
    require_same_shape(o);
    for (std::size_t n = 0; n < data_.size(); ++n) data_[n] -= o.data_[n];
    return *this;
  }
  BasicTensor& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }
  friend BasicTensor operator+(BasicTensor a, const BasicTensor& b) { return a += b; }
  friend BasicTensor operator-(BasicTensor a, const BasicTensor& b) { return a -= b; }
  friend BasicTensor operator*(double s, BasicTensor a) { return a *= s; }

  [[nodiscard]] double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
  }

 private:
  void require_same_shape(const BasicTensor& o) const {
    if (dim_ != o.dim_ || ext_ != o.ext_) throw std::invalid_argument("tensor shape mismatch");
  }

  int dim_ = 2;
  std::array<int, 3> ext_{1, 1, 1};
  std::vector<double> data_;
};

using CoeffTensor = BasicTensor<LegendreBasisTag>;

/// New tensor with `axis` transformed by A (rows = new extent, cols = old extent).
template <class OutTag, class InTag>
BasicTensor<OutTag> apply_axis(const BasicTensor<InTag>& t, int axis, const Eigen::MatrixXd& A) {
  if (A.cols() != t.extent(axis)) throw std::invalid_argument("apply_axis: operator width mismatch");
  auto ext = t.extents();
  ext[axis] = static_cast<int>(A.rows());
  BasicTensor<OutTag> out(t.dim(), ext);
  const auto in_ext = t.extents();
  for (int a = 0; a < in_ext[0]; ++a)
    for (int b = 0; b < in_ext[1]; ++b)
      for (int c = 0; c < in_ext[2]; ++c) {
        const double v = t(a, b, c);
        if (v == 0.0) continue;
        const int src = axis == 0 ? a : (axis == 1 ? b : c);
        for (int r = 0; r < A.rows(); ++r) {
          const double w = A(r, src);
          if (w == 0.0) continue;
          if (axis == 0) out(r, b, c) += w * v;
          else if (axis == 1) out(a, r, c) += w * v;
          else out(a, b, r) += w * v;
        }
      }
  return out;
}

template <class Tag>
BasicTensor<Tag> apply_axis(const BasicTensor<Tag>& t, int axis, const Eigen::MatrixXd& A) {
  return apply_axis<Tag, Tag>(t, axis, A);
}

namespace expansion {

/// 1D Legendre derivative map: (n-1)+1 x n+1 matrix for degree n (n >= 1).
inline Eigen::MatrixXd derivative_matrix(int degree) {
  const int out = std::max(degree, 1);  // degree 0 maps to a single zero coefficient
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(out, degree + 1);
  for (int m = 0; m < degree; ++m)
    for (int n = m + 1; n <= degree; n += 2) D(m, n) = 2 * m + 1;
  return D;
}

/// 1D L2 mode weights 2/(2i+1).
inline double mode_weight(int i) { return 2.0 / (2 * i + 1); }

/// a_i = prod (2 i_k + 1)/2 * int f prod L_{i_k} by tensor Gauss quadrature.
inline CoeffTensor expand(const PointFunction& f, int dim, std::array<int, 3> degrees, int quad_order) {
  const int maxdeg = *std::max_element(degrees.begin(), degrees.begin() + dim);
  if (quad_order < maxdeg + 1)
    throw std::invalid_argument("expand: quad_order must be at least max degree + 1");
  const auto rule = orthopoly::gauss_rule(quad_order);
  const int nq = quad_order;
  // samples on the tensor grid
  BasicTensor<LegendreBasisTag> samples(dim, {nq, nq, dim == 3 ? nq : 1});
  for (int a = 0; a < nq; ++a)
    for (int b = 0; b < nq; ++b)
      for (int c = 0; c < (dim == 3 ? nq : 1); ++c)
        samples(a, b, c) = f({rule.nodes[a], rule.nodes[b], dim == 3 ? rule.nodes[c] : 0.0});
  CoeffTensor out = samples;
  for (int axis = 0; axis < dim; ++axis) {
    const int n = degrees[axis];
    Eigen::MatrixXd B(n + 1, nq);
    for (int q = 0; q < nq; ++q) {
      const auto L = orthopoly::legendre_all(n, rule.nodes[q]);
      for (int i = 0; i <= n; ++i) B(i, q) = 0.5 * (2 * i + 1) * L[i] * rule.weights[q];
    }
    out = apply_axis(out, axis, B);
  }
  return out;
}

inline CoeffTensor expand(const PointFunction& f, int dim, int degree) {
  return expand(f, dim, {degree, degree, degree}, degree + 10);
}

/// Point value of the expansion.
template <class Tag>
double evaluate_with(const BasicTensor<Tag>& u, const Point& x,
                     const std::function<std::vector<double>(int, double)>& basis) {
  std::array<std::vector<double>, 3> v;
  for (int k = 0; k < 3; ++k) v[k] = k < u.dim() ? basis(u.extent(k) - 1, x[k]) : std::vector<double>{1.0};
  double s = 0.0;
  for (int a = 0; a < u.extent(0); ++a)
    for (int b = 0; b < u.extent(1); ++b) {
      const double ab = v[0][a] * v[1][b];
      for (int c = 0; c < u.extent(2); ++c) s += u(a, b, c) * ab * v[2][c];
    }
  return s;
}

inline double evaluate(const CoeffTensor& u, const Point& x) {
  return evaluate_with(u, x, [](int n, double t) { return orthopoly::legendre_all(n, t); });
}

/// Legendre coefficients of the partial derivative along `axis` (exact).
inline CoeffTensor differentiate(const CoeffTensor& u, int axis) {
  if (axis < 0 || axis >= u.dim()) throw std::invalid_argument("differentiate: bad axis");
  return apply_axis(u, axis, derivative_matrix(u.degree(axis)));
}

/// D^alpha u.
inline CoeffTensor differentiate(const CoeffTensor& u, const MultiIndex& alpha) {
  CoeffTensor r = u;
  for (int k = 0; k < u.dim(); ++k)
    for (int n = 0; n < alpha[k]; ++n) r = differentiate(r, k);
  return r;
}

/// sqrt(sum over kept modes of a_i^2 prod 2/(2 i_k + 1)).
template <class Keep>
double mode_energy_norm(const CoeffTensor& u, Keep&& keep) {
  double s = 0.0;
  u.for_each([&](const MultiIndex& i, double a) {
    if (a == 0.0 || !keep(i)) return;
    double w = a * a;
    for (int k = 0; k < u.dim(); ++k) w *= mode_weight(i[k]);
    s += w;
  });
  return std::sqrt(s);
}

inline double l2_norm(const CoeffTensor& u) {
  return mode_energy_norm(u, [](const MultiIndex&) { return true; });
}

/// All alpha with |alpha| = s in dimension d.
inline std::vector<MultiIndex> alphas(int dim, int s) {
  std::vector<MultiIndex> out;
  if (dim == 2) {
    for (int a = s; a >= 0; --a) out.push_back(MultiIndex{a, s - a});
  } else {
    for (int a = s; a >= 0; --a)
      for (int b = s - a; b >= 0; --b) out.push_back(MultiIndex{a, b, s - a - b});
  }
  return out;
}

/// Gamma(i+a+1)/Gamma(i-a+1) = (i-a+1)(i-a+2)...(i+a), for integer i >= a >= 0.
inline double gamma_ratio(int i, int a) {
  double r = 1.0;
  for (int t = i - a + 1; t <= i + a; ++t) r *= t;
  return r;
}

/// |u|_{V^s} from the diagonal Legendre identity.
inline double weighted_seminorm(const CoeffTensor& u, int s) {
  if (s < 0) throw std::invalid_argument("weighted_seminorm: s must be >= 0");
  const auto as = alphas(u.dim(), s);
  double total = 0.0;
  u.for_each([&](const MultiIndex& i, double a) {
    if (a == 0.0) return;
    double base = a * a;
    for (int k = 0; k < u.dim(); ++k) base *= mode_weight(i[k]);
    for (const auto& al : as) {
      if (!i.geq(al)) continue;
      double g = base;
      for (int k = 0; k < u.dim(); ++k) g *= gamma_ratio(i[k], al[k]);
      total += g;
    }
  });
  return std::sqrt(total);
}

/// |u|_{H^s} = sqrt(sum_{|alpha|=s} ||D^alpha u||^2) by exact differentiation.
inline double sobolev_seminorm(const CoeffTensor& u, int s) {
  if (s < 0) throw std::invalid_argument("sobolev_seminorm: s must be >= 0");
  double total = 0.0;
  for (const auto& al : alphas(u.dim(), s)) {
    const double n = l2_norm(differentiate(u, al));
    total += n * n;
  }
  return std::sqrt(total);
}

/// Fraction of the L2 energy carried by the outermost shell of the stored
/// box (modes with some i_k at its top degree).
inline double tail_energy_fraction(const CoeffTensor& u) {
  const double total = l2_norm(u);
  if (total == 0.0) return 0.0;
  const double shell = mode_energy_norm(u, [&](const MultiIndex& i) {
    for (int k = 0; k < u.dim(); ++k)
      if (i[k] == u.degree(k) && u.degree(k) > 0) return true;
    return false;
  });
  return (shell * shell) / (total * total);
}

inline constexpr int kReferenceMargin = 20;
inline constexpr double kTailTolerance = 1e-14;

/// Reference expansion at degree p + 20 with the tail-energy trust check.
struct ReferenceExpansion {
  CoeffTensor coeffs;
  double tail_fraction = 0.0;
  bool trusted = false;
};

inline ReferenceExpansion reference_expansion(const PointFunction& f, int dim, int p) {
  ReferenceExpansion r;
  r.coeffs = expand(f, dim, p + kReferenceMargin);
  r.tail_fraction = tail_energy_fraction(r.coeffs);
  r.trusted = r.tail_fraction < kTailTolerance;
  return r;
}

}  // namespace expansion
}  // namespace hpexp
