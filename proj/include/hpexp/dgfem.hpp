// Symmetric interior penalty DG for the Poisson problem on 2D box meshes with
// modal Legendre bases restricted to P_p or Q_p per element.
#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <chrono>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "hpexp/expansion.hpp"
#include "hpexp/fem.hpp"
#include "hpexp/indexsets.hpp"
#include "hpexp/mesh.hpp"
#include "hpexp/orthopoly.hpp"
#include "hpexp/records.hpp"

namespace hpexp {

struct DgSpec {
  Family family = Family::Q;
  int p = 1;
  double gamma = 10.0;

  void validate() const {
    if (family == Family::S) throw std::invalid_argument("DgSpec: family must be P or Q");
    if (p < 1) throw std::invalid_argument("DgSpec: p must be >= 1");
    if (!(gamma > 0.0)) throw std::invalid_argument("DgSpec: gamma must be positive");
  }
  /// sigma_F = gamma p^2 / h_F
  [[nodiscard]] double penalty(double h_facet) const { return gamma * p * p / h_facet; }
};

namespace dg {
/// The element basis uses L2(-1,1)-normalized Legendre polynomials sqrt((2i+1)/2) L_i.
inline double normalization(int i) { return std::sqrt(0.5 * (2 * i + 1)); }
}  // namespace dg

struct BrokenSolution {
  const Mesh* mesh = nullptr;
  DgSpec spec;
  std::vector<MultiIndex> modes;  // per-element Legendre modes
  Eigen::VectorXd coefficients;   // element-major, normalized basis
  double relative_residual = 0.0;

  [[nodiscard]] int local_size() const { return static_cast<int>(modes.size()); }

  /// Coefficients of element e on the plain Legendre products L_i L_j.
  [[nodiscard]] CoeffTensor element_tensor(int e) const {
    CoeffTensor t = CoeffTensor::with_degree(2, spec.p);
    for (int i = 0; i < local_size(); ++i)
      t(modes[i][0], modes[i][1]) = coefficients[e * local_size() + i] * dg::normalization(modes[i][0]) *
                                    dg::normalization(modes[i][1]);
    return t;
  }
};

struct DgSystem {
  const Mesh* mesh = nullptr;
  DgSpec spec;
  std::vector<MultiIndex> modes;
  Eigen::SparseMatrix<double> matrix;  // full symmetric storage
  Eigen::VectorXd rhs;
};

namespace dg {

namespace detail {

/// Per-point values and physical gradients of every local mode.
struct ModeSample {
  Eigen::VectorXd value;
  Eigen::MatrixXd grad;  // rows: axis
};

inline ModeSample sample(const std::vector<MultiIndex>& modes, int p, const MeshElement& el, const Point& xi) {
  const auto tx = orthopoly::legendre_deriv_table(p, 1, xi[0]);
  const auto ty = orthopoly::legendre_deriv_table(p, 1, xi[1]);
  const Eigen::Index n = static_cast<Eigen::Index>(modes.size());
  ModeSample s{Eigen::VectorXd(n), Eigen::MatrixXd(2, n)};
  for (Eigen::Index m = 0; m < n; ++m) {
    const int i = modes[m][0], j = modes[m][1];
    const double c = normalization(i) * normalization(j);
    s.value[m] = c * tx[0][i] * ty[0][j];
    s.grad(0, m) = c * 2.0 / el.extent[0] * tx[1][i] * ty[0][j];
    s.grad(1, m) = c * 2.0 / el.extent[1] * tx[0][i] * ty[1][j];
  }
  return s;
}

inline Point reference_point(const MeshElement& el, const Point& x) {
  Point xi{0.0, 0.0, 0.0};
  for (int k = 0; k < 2; ++k) xi[k] = 2.0 * (x[k] - el.lower[k]) / el.extent[k] - 1.0;
  return xi;
}

inline Point physical_point(const MeshElement& el, const Point& xi) {
  Point x{0.0, 0.0, 0.0};
  for (int k = 0; k < 2; ++k) x[k] = el.lower[k] + 0.5 * el.extent[k] * (1.0 + xi[k]);
  return x;
}

/// Quadrature points of facet (axis, side) of el in physical coordinates with weights.
inline std::vector<std::pair<Point, double>> facet_points(const MeshElement& el, int axis, int side,
                                                          const orthopoly::QuadratureRule& rule) {
  const int t = 1 - axis;
  std::vector<std::pair<Point, double>> out;
  for (std::size_t q = 0; q < rule.size(); ++q) {
    Point xi{0.0, 0.0, 0.0};
    xi[axis] = side ? 1.0 : -1.0;
    xi[t] = rule.nodes[q];
    out.emplace_back(physical_point(el, xi), rule.weights[q] * 0.5 * el.extent[t]);
  }
  return out;
}

inline void add_block(std::vector<Eigen::Triplet<double>>& trip, int row0, int col0, const Eigen::MatrixXd& B) {
  for (Eigen::Index i = 0; i < B.rows(); ++i)
    for (Eigen::Index j = 0; j < B.cols(); ++j)
      if (B(i, j) != 0.0) trip.emplace_back(row0 + static_cast<int>(i), col0 + static_cast<int>(j), B(i, j));
}

}  // namespace detail

inline std::vector<MultiIndex> local_modes(const DgSpec& spec) {
  return indexsets::enumerate_modes(BasisSpec{2, spec.p, spec.family});
}

/// Volume int grad u . grad v; interior facets -{du/dn}[v] - {dv/dn}[u] + sigma [u][v];
/// boundary facets carry the Dirichlet data in the right-hand side.
inline DgSystem assemble_sip(const Mesh& mesh, const DgSpec& spec, const PointFunction& f, const PointFunction& g) {
  spec.validate();
  if (mesh.dim != 2) throw std::invalid_argument("assemble_sip: only 2D meshes are supported");
  DgSystem sys;
  sys.mesh = &mesh;
  sys.spec = spec;
  sys.modes = local_modes(spec);
  const int p = spec.p, n = static_cast<int>(sys.modes.size()), ne = mesh.element_count();
  sys.rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n) * ne);
  std::vector<Eigen::Triplet<double>> trip;

  // volume terms: exact via Legendre orthogonality, load via (p+10)-point Gauss
  std::vector<double> nrm(p + 1);
  for (int i = 0; i <= p; ++i) nrm[i] = normalization(i);
  const auto rule_v = orthopoly::gauss_rule(p + 2);
  Eigen::MatrixXd K1 = Eigen::MatrixXd::Zero(p + 1, p + 1);
  for (std::size_t q = 0; q < rule_v.size(); ++q)
    for (int i = 0; i <= p; ++i)
      for (int k = 0; k <= p; ++k)
        K1(i, k) += rule_v.weights[q] * nrm[i] * nrm[k] * orthopoly::legendre_deriv(i, 1, rule_v.nodes[q]) *
                    orthopoly::legendre_deriv(k, 1, rule_v.nodes[q]);
  const auto rule_f = orthopoly::gauss_rule(p + 10);
  for (int e = 0; e < ne; ++e) {
    const auto& el = mesh.elements[e];
    const double hx = 0.5 * el.extent[0], hy = 0.5 * el.extent[1];
    Eigen::MatrixXd A(n, n);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        const auto& s = sys.modes[a];
        const auto& t = sys.modes[b];
        A(a, b) = K1(s[0], t[0]) / hx * (s[1] == t[1] ? hy : 0.0) + K1(s[1], t[1]) / hy * (s[0] == t[0] ? hx : 0.0);
      }
    detail::add_block(trip, e * n, e * n, A);
    for (std::size_t qa = 0; qa < rule_f.size(); ++qa)
      for (std::size_t qb = 0; qb < rule_f.size(); ++qb) {
        const Point xi{rule_f.nodes[qa], rule_f.nodes[qb], 0.0};
        const double w = rule_f.weights[qa] * rule_f.weights[qb] * hx * hy;
        const auto la = orthopoly::legendre_all(p, xi[0]);
        const auto lb = orthopoly::legendre_all(p, xi[1]);
        const double fv = w * f(detail::physical_point(el, xi));
        for (int m = 0; m < n; ++m) {
          const int i = sys.modes[m][0], j = sys.modes[m][1];
          sys.rhs[e * n + m] += fv * nrm[i] * nrm[j] * la[i] * lb[j];
        }
      }
  }

  // facets
  const auto rule_s = orthopoly::gauss_rule(p + 2);
  for (int e = 0; e < ne; ++e) {
    const auto& el = mesh.elements[e];
    for (int axis = 0; axis < 2; ++axis)
      for (int side = 0; side < 2; ++side) {
        const int f_id = 2 * axis + side;
        const int nb = el.neighbors[f_id];
        const double normal = side ? 1.0 : -1.0;  // outward from e along axis
        if (nb >= 0 && side == 0) continue;        // each interior facet once, from its lower element
        const auto pts = detail::facet_points(el, axis, side, rule_s);
        if (nb < 0) {
          const double sigma = spec.penalty(el.extent[axis]);
          Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
          for (const auto& [x, w] : pts) {
            const auto s = detail::sample(sys.modes, p, el, detail::reference_point(el, x));
            const Eigen::VectorXd dn = normal * s.grad.row(axis).transpose();
            A += w * (-(s.value * dn.transpose()) - dn * s.value.transpose() + sigma * s.value * s.value.transpose());
            const double gv = g(x);
            sys.rhs.segment(static_cast<Eigen::Index>(e) * n, n) += w * gv * (sigma * s.value - dn);
          }
          detail::add_block(trip, e * n, e * n, A);
          continue;
        }
        const auto& en = mesh.elements[nb];
        const double sigma = spec.penalty(std::min(el.extent[axis], en.extent[axis]));
        Eigen::MatrixXd Amm = Eigen::MatrixXd::Zero(n, n), Amp = Amm, Apm = Amm, App = Amm;
        for (const auto& [x, w] : pts) {
          const auto sm = detail::sample(sys.modes, p, el, detail::reference_point(el, x));
          auto xi_p = detail::reference_point(en, x);
          xi_p[axis] = -1.0;
          const auto sp = detail::sample(sys.modes, p, en, xi_p);
          // n points from e (minus) to nb (plus); [u] = u_m - u_p, {du/dn} = (dn u_m + dn u_p)/2
          const Eigen::VectorXd dm = 0.5 * sm.grad.row(axis).transpose();
          const Eigen::VectorXd dp = 0.5 * sp.grad.row(axis).transpose();
          const Eigen::VectorXd& vm = sm.value;
          const Eigen::VectorXd& vp = sp.value;
          // rows: test function, cols: trial function
          Amm += w * (-(vm * dm.transpose()) - dm * vm.transpose() + sigma * vm * vm.transpose());
          Amp += w * (-(vm * dp.transpose()) + dm * vp.transpose() - sigma * vm * vp.transpose());
          Apm += w * ((vp * dm.transpose()) - dp * vm.transpose() - sigma * vp * vm.transpose());
          App += w * ((vp * dp.transpose()) + dp * vp.transpose() + sigma * vp * vp.transpose());
        }
        detail::add_block(trip, e * n, e * n, Amm);
        detail::add_block(trip, e * n, nb * n, Amp);
        detail::add_block(trip, nb * n, e * n, Apm);
        detail::add_block(trip, nb * n, nb * n, App);
      }
  }
  const Eigen::Index N = static_cast<Eigen::Index>(n) * ne;
  sys.matrix.resize(N, N);
  sys.matrix.setFromTriplets(trip.begin(), trip.end());
  sys.matrix.makeCompressed();
  return sys;
}

inline BrokenSolution solve(const DgSystem& sys) {
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(sys.matrix);
  if (ldlt.info() != Eigen::Success || (ldlt.vectorD().array() <= 0.0).any())
    throw std::runtime_error("SIP system is not positive definite; increase the penalty factor gamma");
  BrokenSolution sol;
  sol.mesh = sys.mesh;
  sol.spec = sys.spec;
  sol.modes = sys.modes;
  sol.coefficients = ldlt.solve(sys.rhs);
  const double bn = sys.rhs.norm();
  const double rn = (sys.matrix * sol.coefficients - sys.rhs).norm();
  sol.relative_residual = bn > 0.0 ? rn / bn : rn;
  return sol;
}

struct DgErrors {
  double l2 = 0.0;
  double broken_h1 = 0.0;
  double dg_norm = 0.0;
};

/// Broken L2 / H1 errors (order >= 2p+4 quadrature) and the SIP energy norm
/// sqrt(|u-u_h|^2_{H1,h} + sum_F sigma_F ||[u-u_h]||^2_F).
inline DgErrors dg_errors(const BrokenSolution& sol, const FunctionOracle& exact) {
  if (!exact.gradient) throw std::invalid_argument("dg_errors: exact gradient required");
  const Mesh& mesh = *sol.mesh;
  const int p = sol.spec.p, n = sol.local_size();
  const auto rule = orthopoly::gauss_rule(p + 6);
  double l2 = 0.0, h1 = 0.0, jump = 0.0;
  for (int e = 0; e < mesh.element_count(); ++e) {
    const auto& el = mesh.elements[e];
    const Eigen::VectorXd c = sol.coefficients.segment(static_cast<Eigen::Index>(e) * n, n);
    const double jac = 0.25 * el.extent[0] * el.extent[1];
    for (std::size_t qa = 0; qa < rule.size(); ++qa)
      for (std::size_t qb = 0; qb < rule.size(); ++qb) {
        const Point xi{rule.nodes[qa], rule.nodes[qb], 0.0};
        const double w = rule.weights[qa] * rule.weights[qb] * jac;
        const auto s = detail::sample(sol.modes, p, el, xi);
        const Point x = detail::physical_point(el, xi);
        const double dv = exact.value(x) - s.value.dot(c);
        const auto ge = exact.gradient(x);
        const Eigen::Vector2d gh = s.grad * c;
        l2 += w * dv * dv;
        h1 += w * ((ge[0] - gh[0]) * (ge[0] - gh[0]) + (ge[1] - gh[1]) * (ge[1] - gh[1]));
      }
    for (int axis = 0; axis < 2; ++axis)
      for (int side = 0; side < 2; ++side) {
        const int nb = el.neighbors[2 * axis + side];
        if (nb >= 0 && side == 0) continue;
        const double sigma =
            sol.spec.penalty(nb >= 0 ? std::min(el.extent[axis], mesh.elements[nb].extent[axis]) : el.extent[axis]);
        for (const auto& [x, w] : detail::facet_points(el, axis, side, rule)) {
          const auto sm = detail::sample(sol.modes, p, el, detail::reference_point(el, x));
          double jmp = 0.0;
          if (nb < 0) {
            jmp = exact.value(x) - sm.value.dot(c);
          } else {
            const auto& en = mesh.elements[nb];
            auto xi_p = detail::reference_point(en, x);
            xi_p[axis] = -1.0;
            const auto sp = detail::sample(sol.modes, p, en, xi_p);
            jmp = sm.value.dot(c) - sp.value.dot(sol.coefficients.segment(static_cast<Eigen::Index>(nb) * n, n));
          }
          jump += w * sigma * jmp * jmp;
        }
      }
  }
  return {std::sqrt(l2), std::sqrt(h1), std::sqrt(h1 + jump)};
}

inline std::string method_tag(Family family) { return std::string("DGFEM(") + std::string(to_string(family)) + ")"; }

/// Sine problem on the n x n unit-square mesh.
inline ConvergenceRecords run_p_sweep(int n, Family family, const std::vector<int>& p_list, double gamma = 10.0) {
  const fem::Problem problem = fem::sine_problem(2, n);
  ConvergenceRecords out;
  for (int p : p_list) {
    ConvergenceRecord rec;
    rec.method = method_tag(family);
    rec.p = p;
    try {
      const DgSpec spec{family, p, gamma};
      spec.validate();
      rec.dof = static_cast<long long>(n) * n * indexsets::dof_count(BasisSpec{2, p, family});
      const auto t0 = std::chrono::steady_clock::now();
      const DgSystem sys = assemble_sip(problem.mesh, spec, problem.source, problem.exact.value);
      const BrokenSolution sol = solve(sys);
      const auto t1 = std::chrono::steady_clock::now();
      const DgErrors err = dg_errors(sol, problem.exact);
      rec.errors["l2"] = err.l2;
      rec.errors["broken_h1"] = err.broken_h1;
      rec.errors["dg_norm"] = err.dg_norm;
      rec.diagnostics["solver_residual"] = sol.relative_residual;
      rec.diagnostics["gamma"] = gamma;
      rec.diagnostics["solve_seconds"] = std::chrono::duration<double>(t1 - t0).count();
    } catch (const std::exception& ex) {
      rec.failure = ex.what();
    }
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace dg
}  // namespace hpexp
