// Conforming FEM(Q) / FEM(S) Poisson solver with hierarchical shape functions,
// static condensation and inhomogeneous Dirichlet data.
#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hpexp/expansion.hpp"
#include "hpexp/indexsets.hpp"
#include "hpexp/mesh.hpp"
#include "hpexp/orthopoly.hpp"
#include "hpexp/records.hpp"

namespace hpexp {

struct ShapeSlotTag {};
/// Coefficients (or point values) on the 1D hierarchical shape functions per axis.
using SlotTensor = BasicTensor<ShapeSlotTag>;

namespace fem {

// ---------------------------------------------------------------------------
// 1D hierarchical basis: slot 0 = (1-x)/2, slot 1 = (1+x)/2, slot k >= 2 = psi_{k-1}.

inline void shape_values(int p, double x, double* value, double* deriv) {
  const auto L = orthopoly::legendre_all(std::max(p, 1), x);
  value[0] = 0.5 * (1.0 - x);
  value[1] = 0.5 * (1.0 + x);
  deriv[0] = -0.5;
  deriv[1] = 0.5;
  for (int s = 2; s <= p; ++s) {
    const int j = s - 1;
    value[s] = (L[j + 1] - L[j - 1]) / (2 * j + 1);
    deriv[s] = L[j];
  }
}

/// Rows: points, columns: slots 0..p.
inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> shape_tables(int p, const std::vector<double>& x) {
  Eigen::MatrixXd V(static_cast<Eigen::Index>(x.size()), p + 1), D(static_cast<Eigen::Index>(x.size()), p + 1);
  std::vector<double> v(p + 2), d(p + 2);
  for (std::size_t q = 0; q < x.size(); ++q) {
    shape_values(p, x[q], v.data(), d.data());
    for (int s = 0; s <= p; ++s) {
      V(static_cast<Eigen::Index>(q), s) = v[s];
      D(static_cast<Eigen::Index>(q), s) = d[s];
    }
  }
  return {V, D};
}

/// Reference 1D stiffness and mass matrices, exact with (p+1)-point Gauss.
inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> reference_matrices_1d(int p) {
  const auto rule = orthopoly::gauss_rule(p + 1);
  const auto [V, D] = shape_tables(p, rule.nodes);
  const Eigen::Map<const Eigen::VectorXd> w(rule.weights.data(), static_cast<Eigen::Index>(rule.weights.size()));
  Eigen::MatrixXd K = D.transpose() * w.asDiagonal() * D;
  Eigen::MatrixXd M = V.transpose() * w.asDiagonal() * V;
  return {K, M};
}

// ---------------------------------------------------------------------------
// Degrees of freedom

inline int bubble_count(const MultiIndex& slots) {
  int b = 0;
  for (int k = 0; k < slots.dim(); ++k) b += slots[k] >= 2;
  return b;
}

/// Family filter on a local mode: S keeps bubble products with psi-index sum <= p - (#bubble factors).
inline bool keep_mode(const MultiIndex& slots, int p, Family family) {
  if (family == Family::Q) return true;
  int b = 0, t = 0;
  for (int k = 0; k < slots.dim(); ++k)
    if (slots[k] >= 2) {
      ++b;
      t += slots[k] - 1;
    }
  return b < 2 || t <= p - b;
}

struct ReferenceModes {
  int dim = 2;
  int p = 1;
  Family family = Family::Q;
  std::vector<MultiIndex> slots;  // skeleton modes first, interior modes last
  int skeleton_count = 0;

  [[nodiscard]] int size() const { return static_cast<int>(slots.size()); }
  [[nodiscard]] int interior_count() const { return size() - skeleton_count; }
};

inline ReferenceModes reference_modes(int dim, int p, Family family) {
  ReferenceModes r;
  r.dim = dim;
  r.p = p;
  r.family = family;
  std::vector<MultiIndex> interior;
  const int n2 = dim == 3 ? p + 1 : 1;
  for (int c = 0; c < n2; ++c)
    for (int b = 0; b <= p; ++b)
      for (int a = 0; a <= p; ++a) {
        MultiIndex s = dim == 2 ? MultiIndex{a, b} : MultiIndex{a, b, c};
        if (!keep_mode(s, p, family)) continue;
        (bubble_count(s) == dim ? interior : r.slots).push_back(s);
      }
  r.skeleton_count = static_cast<int>(r.slots.size());
  r.slots.insert(r.slots.end(), interior.begin(), interior.end());
  return r;
}

struct ElementDofs {
  std::vector<int> global;
  std::vector<double> sign;
};

struct DofMap {
  int dim = 2;
  int p = 1;
  Family family = Family::Q;
  ReferenceModes modes;
  std::vector<ElementDofs> elements;
  int vertex_dofs = 0, edge_dofs = 0, face_dofs = 0, interior_dofs = 0;
  int edge_count = 0, face_count = 0;
  int edge_mode_count = 0, face_mode_count = 0;

  [[nodiscard]] int skeleton_count() const { return vertex_dofs + edge_dofs + face_dofs; }
  [[nodiscard]] int total() const { return skeleton_count() + interior_dofs; }
};

namespace detail {

inline int local_vertex(const std::array<int, 3>& bits) { return bits[0] + 2 * bits[1] + 4 * bits[2]; }

inline std::array<int, 3> vertex_bits(const MultiIndex& slots, int dim) {
  std::array<int, 3> bits{0, 0, 0};
  for (int k = 0; k < dim; ++k) bits[k] = slots[k] == 1 ? 1 : 0;
  return bits;
}

inline double parity_sign(int psi_index, bool flipped) {
  // psi_j(-x) = (-1)^{j+1} psi_j(x)
  return flipped && psi_index % 2 == 0 ? -1.0 : 1.0;
}

}  // namespace detail

inline DofMap build_dofmap(const Mesh& mesh, int p, Family family) {
  if (p < 1) throw std::invalid_argument("build_dofmap: p must be >= 1");
  if (family == Family::P) throw std::invalid_argument("build_dofmap: conforming FEM supports families Q and S");
  const int d = mesh.dim;
  DofMap m;
  m.dim = d;
  m.p = p;
  m.family = family;
  m.modes = reference_modes(d, p, family);
  m.edge_mode_count = p - 1;

  std::vector<std::pair<int, int>> face_pairs;
  for (const auto& s : m.modes.slots)
    if (d == 3 && bubble_count(s) == 2 && s[2] < 2) face_pairs.emplace_back(s[0] - 1, s[1] - 1);
  // each psi pair shows up once per side of the fixed axis
  std::sort(face_pairs.begin(), face_pairs.end());
  face_pairs.erase(std::unique(face_pairs.begin(), face_pairs.end()), face_pairs.end());
  std::map<std::pair<int, int>, int> face_pos;
  for (std::size_t i = 0; i < face_pairs.size(); ++i) face_pos.emplace(face_pairs[i], static_cast<int>(i));
  m.face_mode_count = static_cast<int>(face_pairs.size());

  m.vertex_dofs = mesh.vertex_count();
  std::map<std::pair<int, int>, int> edge_offset;
  std::map<std::array<int, 4>, int> face_offset;
  std::vector<std::pair<int, int>> edge_keys;
  std::vector<std::array<int, 4>> face_keys;
  // first pass: number edges and faces in element order
  for (const auto& el : mesh.elements)
    for (const auto& s : m.modes.slots) {
      const int b = bubble_count(s);
      if (b == 1) {
        int axis = 0;
        while (s[axis] < 2) ++axis;
        auto bits = detail::vertex_bits(s, d);
        bits[axis] = 0;
        const int g0 = el.vertices[detail::local_vertex(bits)];
        bits[axis] = 1;
        const int g1 = el.vertices[detail::local_vertex(bits)];
        const std::pair<int, int> key{std::min(g0, g1), std::max(g0, g1)};
        if (edge_offset.emplace(key, 0).second) edge_keys.push_back(key);
      } else if (b == 2 && d == 3) {
        std::array<int, 4> key{};
        int n = 0;
        auto bits = detail::vertex_bits(s, d);
        int a0 = -1, a1 = -1;
        for (int k = 0; k < 3; ++k)
          if (s[k] >= 2) (a0 < 0 ? a0 : a1) = k;
        for (int u = 0; u < 2; ++u)
          for (int v = 0; v < 2; ++v) {
            bits[a0] = u;
            bits[a1] = v;
            key[n++] = el.vertices[detail::local_vertex(bits)];
          }
        std::sort(key.begin(), key.end());
        if (face_offset.emplace(key, 0).second) face_keys.push_back(key);
      }
    }
  int next = m.vertex_dofs;
  for (const auto& k : edge_keys) {
    edge_offset[k] = next;
    next += m.edge_mode_count;
  }
  m.edge_count = static_cast<int>(edge_keys.size());
  m.edge_dofs = m.edge_count * m.edge_mode_count;
  for (const auto& k : face_keys) {
    face_offset[k] = next;
    next += m.face_mode_count;
  }
  m.face_count = static_cast<int>(face_keys.size());
  m.face_dofs = m.face_count * m.face_mode_count;

  const int n_int = m.modes.interior_count();
  m.interior_dofs = n_int * mesh.element_count();
  m.elements.resize(mesh.elements.size());
  for (std::size_t e = 0; e < mesh.elements.size(); ++e) {
    const auto& el = mesh.elements[e];
    auto& ed = m.elements[e];
    ed.global.resize(m.modes.slots.size());
    ed.sign.assign(m.modes.slots.size(), 1.0);
    int interior_next = m.skeleton_count() + static_cast<int>(e) * n_int;
    for (std::size_t i = 0; i < m.modes.slots.size(); ++i) {
      const auto& s = m.modes.slots[i];
      const int b = bubble_count(s);
      auto bits = detail::vertex_bits(s, d);
      if (b == 0) {
        ed.global[i] = el.vertices[detail::local_vertex(bits)];
      } else if (b == 1) {
        int axis = 0;
        while (s[axis] < 2) ++axis;
        bits[axis] = 0;
        const int g0 = el.vertices[detail::local_vertex(bits)];
        bits[axis] = 1;
        const int g1 = el.vertices[detail::local_vertex(bits)];
        const int j = s[axis] - 1;
        ed.global[i] = edge_offset.at({std::min(g0, g1), std::max(g0, g1)}) + (j - 1);
        ed.sign[i] = detail::parity_sign(j, g0 > g1);
      } else if (b == 2 && d == 3) {
        int a0 = -1, a1 = -1;
        for (int k = 0; k < 3; ++k)
          if (s[k] >= 2) (a0 < 0 ? a0 : a1) = k;
        std::array<int, 4> key{};
        int n = 0, min_id = -1;
        std::array<int, 2> min_bits{0, 0};
        for (int u = 0; u < 2; ++u)
          for (int v = 0; v < 2; ++v) {
            bits[a0] = u;
            bits[a1] = v;
            const int g = el.vertices[detail::local_vertex(bits)];
            key[n++] = g;
            if (min_id < 0 || g < min_id) {
              min_id = g;
              min_bits = {u, v};
            }
          }
        std::sort(key.begin(), key.end());
        const int ja = s[a0] - 1, jb = s[a1] - 1;
        ed.global[i] = face_offset.at(key) + face_pos.at({ja, jb});
        ed.sign[i] = detail::parity_sign(ja, min_bits[0] == 1) * detail::parity_sign(jb, min_bits[1] == 1);
      } else {
        ed.global[i] = interior_next++;
      }
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Problems

struct Problem {
  std::string name;
  Mesh mesh;
  PointFunction source;
  FunctionOracle exact;
};

inline FunctionOracle sine_solution(int dim) {
  constexpr double pi = std::numbers::pi;
  FunctionOracle o;
  o.value = [dim](const Point& x) {
    double v = 1.0;
    for (int k = 0; k < dim; ++k) v *= std::sin(pi * x[k]);
    return v;
  };
  o.gradient = [dim](const Point& x) {
    std::array<double, 3> g{0.0, 0.0, 0.0};
    for (int a = 0; a < dim; ++a) {
      double v = pi * std::cos(pi * x[a]);
      for (int k = 0; k < dim; ++k)
        if (k != a) v *= std::sin(pi * x[k]);
      g[a] = v;
    }
    return g;
  };
  return o;
}

/// r^{2/3} sin(2 phi / 3) with phi in [0, 2 pi) from the positive x-axis; zero on the
/// two edges meeting the reentrant corner of the L-shape.
inline FunctionOracle lshape_solution() {
  constexpr double a = 2.0 / 3.0;
  const auto angle = [](const Point& x) {
    double phi = std::atan2(x[1], x[0]);
    if (phi < 0.0) phi += 2.0 * std::numbers::pi;
    return phi;
  };
  FunctionOracle o;
  o.value = [angle](const Point& x) {
    const double r = std::hypot(x[0], x[1]);
    return r == 0.0 ? 0.0 : std::pow(r, a) * std::sin(a * angle(x));
  };
  o.gradient = [angle](const Point& x) {
    const double r = std::hypot(x[0], x[1]);
    if (r == 0.0) return std::array<double, 3>{0.0, 0.0, 0.0};
    const double phi = angle(x), c = a * std::pow(r, a - 1.0);
    return std::array<double, 3>{c * std::sin((a - 1.0) * phi), c * std::cos((a - 1.0) * phi), 0.0};
  };
  return o;
}

inline Problem sine_problem(int dim, int n) {
  Problem pr;
  pr.name = dim == 2 ? "sine2d" : "sine3d";
  pr.mesh = mesh::unit_uniform(dim, n);
  pr.exact = sine_solution(dim);
  const double lambda = dim * std::numbers::pi * std::numbers::pi;
  const auto u = pr.exact.value;
  pr.source = [u, lambda](const Point& x) { return lambda * u(x); };
  return pr;
}

inline Problem lshape_problem() {
  Problem pr;
  pr.name = "lshape";
  pr.mesh = mesh::lshape();
  pr.exact = lshape_solution();
  pr.source = [](const Point&) { return 0.0; };
  return pr;
}

inline Problem problem_by_name(const std::string& name, int n) {
  if (name == "sine2d") return sine_problem(2, n);
  if (name == "sine3d") return sine_problem(3, n);
  if (name == "lshape") return lshape_problem();
  throw std::invalid_argument("unknown problem '" + name + "' (expected sine2d, sine3d or lshape)");
}

// ---------------------------------------------------------------------------
// Assembly

struct ElementOperator {
  Point extent{};
  Eigen::MatrixXd K;  // local stiffness in reference-mode order, unsigned
  bool condensed = false;
  Eigen::LLT<Eigen::MatrixXd> interior_llt;
  Eigen::MatrixXd interior_solve_coupling;  // K_II^{-1} K_IB
  Eigen::MatrixXd schur;                    // K_BB - K_BI K_II^{-1} K_IB
};

struct AssembledSystem {
  const Mesh* mesh = nullptr;
  const DofMap* dofmap = nullptr;
  std::vector<ElementOperator> operators;
  std::vector<int> operator_of;        // per element
  std::vector<Eigen::VectorXd> loads;  // per element, unsigned local
  std::vector<char> constrained;       // per global dof
  std::vector<double> values;          // prescribed values on constrained dofs
  int load_points = 0;
  int boundary_points = 0;
};

inline Eigen::MatrixXd element_stiffness(const ReferenceModes& modes, const Eigen::MatrixXd& K1,
                                         const Eigen::MatrixXd& M1, const Point& extent) {
  const int n = modes.size(), d = modes.dim;
  std::array<double, 3> h{0.5 * extent[0], 0.5 * extent[1], 0.5 * extent[2]};
  Eigen::MatrixXd K(n, n);
  for (int i = 0; i < n; ++i) {
    const auto& s = modes.slots[i];
    for (int j = 0; j <= i; ++j) {
      const auto& t = modes.slots[j];
      double v = 0.0;
      for (int a = 0; a < d; ++a) {
        double term = K1(s[a], t[a]) / h[a];
        for (int k = 0; k < d; ++k)
          if (k != a) term *= M1(s[k], t[k]) * h[k];
        v += term;
      }
      K(i, j) = v;
      K(j, i) = v;
    }
  }
  return K;
}

namespace detail {

/// Tensor-product quadrature of f against every slot product on one element.
inline SlotTensor slot_moments(const PointFunction& f, const MeshElement& el, int dim, int p,
                               const orthopoly::QuadratureRule& rule) {
  const int nq = static_cast<int>(rule.size());
  SlotTensor vals(dim, {nq, nq, dim == 3 ? nq : 1});
  double jac = 1.0;
  for (int k = 0; k < dim; ++k) jac *= 0.5 * el.extent[k];
  for (int c = 0; c < (dim == 3 ? nq : 1); ++c)
    for (int b = 0; b < nq; ++b)
      for (int a = 0; a < nq; ++a) {
        Point x{el.lower[0] + 0.5 * el.extent[0] * (1.0 + rule.nodes[a]),
                el.lower[1] + 0.5 * el.extent[1] * (1.0 + rule.nodes[b]),
                dim == 3 ? el.lower[2] + 0.5 * el.extent[2] * (1.0 + rule.nodes[c]) : 0.0};
        double w = rule.weights[a] * rule.weights[b] * jac;
        if (dim == 3) w *= rule.weights[c];
        vals(a, b, c) = w * f(x);
      }
  const auto [V, D] = shape_tables(p, rule.nodes);
  (void)D;
  const Eigen::MatrixXd Vt = V.transpose();
  SlotTensor out = vals;
  for (int k = 0; k < dim; ++k) out = apply_axis(out, k, Vt);
  return out;
}

inline std::vector<std::pair<int, int>> element_op_keys(const Mesh& mesh, std::vector<int>& op_of) {
  std::map<std::array<long long, 3>, int> index;
  std::vector<std::pair<int, int>> firsts;  // (operator id, first element)
  op_of.resize(mesh.elements.size());
  for (std::size_t e = 0; e < mesh.elements.size(); ++e) {
    std::array<long long, 3> key{};
    for (int k = 0; k < 3; ++k) key[k] = std::llround(mesh.elements[e].extent[k] * 1e12);
    const auto [it, fresh] = index.emplace(key, static_cast<int>(firsts.size()));
    if (fresh) firsts.emplace_back(it->second, static_cast<int>(e));
    op_of[e] = it->second;
  }
  return firsts;
}

inline bool facet_contains(const MultiIndex& slots, int dim, int axis, int side) {
  (void)dim;
  return slots[axis] == side;  // bubble slots (>= 2) never lie on a facet
}

inline bool on_boundary(const MeshElement& el, const MultiIndex& slots, int dim) {
  for (int a = 0; a < dim; ++a)
    for (int side = 0; side < 2; ++side)
      if (el.facets[2 * a + side] == FacetKind::boundary && facet_contains(slots, dim, a, side)) return true;
  return false;
}

}  // namespace detail

/// Stiffness (per element geometry), loads with a (p+10)-point rule, and Dirichlet values:
/// vertex interpolation, then edge-wise and (3D) face-wise L2 projection of the remainder.
inline AssembledSystem assemble_poisson(const Mesh& mesh, const DofMap& dm, const PointFunction& f,
                                        const PointFunction& g) {
  if (dm.dim != mesh.dim || dm.elements.size() != mesh.elements.size())
    throw std::invalid_argument("assemble_poisson: dofmap was not built on this mesh");
  const int d = mesh.dim, p = dm.p;
  const auto& modes = dm.modes;
  AssembledSystem sys;
  sys.mesh = &mesh;
  sys.dofmap = &dm;
  const auto [K1, M1] = reference_matrices_1d(p);
  for (const auto& [op, e] : detail::element_op_keys(mesh, sys.operator_of)) {
    ElementOperator eo;
    eo.extent = mesh.elements[e].extent;
    eo.K = element_stiffness(modes, K1, M1, eo.extent);
    sys.operators.push_back(std::move(eo));
    (void)op;
  }

  sys.load_points = p + 10;
  const auto load_rule = orthopoly::gauss_rule(sys.load_points);
  sys.loads.resize(mesh.elements.size());
  for (std::size_t e = 0; e < mesh.elements.size(); ++e) {
    const SlotTensor mom = detail::slot_moments(f, mesh.elements[e], d, p, load_rule);
    Eigen::VectorXd F(modes.size());
    for (int i = 0; i < modes.size(); ++i) {
      const auto& s = modes.slots[i];
      F[i] = mom(s[0], s[1], d == 3 ? s[2] : 0);
    }
    sys.loads[e] = std::move(F);
  }

  // Dirichlet data
  sys.boundary_points = p + 10;
  const auto bq = orthopoly::gauss_rule(sys.boundary_points);
  const auto [BV, BD] = shape_tables(p, bq.nodes);
  (void)BD;
  sys.constrained.assign(dm.total(), 0);
  sys.values.assign(dm.total(), 0.0);
  const auto element_point = [](const MeshElement& el, const Point& xi) {
    Point x{};
    for (int k = 0; k < 3; ++k) x[k] = el.lower[k] + 0.5 * el.extent[k] * (1.0 + xi[k]);
    return x;
  };
  // vertices
  for (std::size_t e = 0; e < mesh.elements.size(); ++e) {
    const auto& el = mesh.elements[e];
    for (int i = 0; i < modes.skeleton_count; ++i) {
      const auto& s = modes.slots[i];
      if (bubble_count(s) != 0 || !detail::on_boundary(el, s, d)) continue;
      const int gid = dm.elements[e].global[i];
      if (sys.constrained[gid]) continue;
      Point xi{};
      for (int k = 0; k < 3; ++k) xi[k] = k < d ? (s[k] == 1 ? 1.0 : -1.0) : 0.0;
      sys.constrained[gid] = 1;
      sys.values[gid] = g(element_point(el, xi));
    }
  }
  const Eigen::MatrixXd Mb = M1.bottomRightCorner(p - 1, p - 1);
  const Eigen::LLT<Eigen::MatrixXd> Mb_llt(Mb);
  // edges: project g minus the vertex interpolant onto psi_1..psi_{p-1}
  for (std::size_t e = 0; e < mesh.elements.size() && p >= 2; ++e) {
    const auto& el = mesh.elements[e];
    const auto& ed = dm.elements[e];
    std::map<std::pair<int, int>, Eigen::VectorXd> done;  // (axis, fixed-bit code) -> coefficients
    for (int i = 0; i < modes.skeleton_count; ++i) {
      const auto& s = modes.slots[i];
      if (bubble_count(s) != 1 || !detail::on_boundary(el, s, d)) continue;
      const int gid = ed.global[i];
      if (sys.constrained[gid]) continue;
      int axis = 0;
      while (s[axis] < 2) ++axis;
      auto bits = detail::vertex_bits(s, d);
      bits[axis] = 0;
      const int code = detail::local_vertex(bits);
      auto it = done.find({axis, code});
      if (it == done.end()) {
        Point xi{};
        for (int k = 0; k < 3; ++k) xi[k] = k < d ? (bits[k] ? 1.0 : -1.0) : 0.0;
        Point xa = xi, xb = xi;
        xa[axis] = -1.0;
        xb[axis] = 1.0;
        const double ga = g(element_point(el, xa)), gb = g(element_point(el, xb));
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(p - 1);
        for (std::size_t q = 0; q < bq.size(); ++q) {
          Point x = xi;
          x[axis] = bq.nodes[q];
          const double t = bq.nodes[q];
          const double r = g(element_point(el, x)) - (ga * 0.5 * (1.0 - t) + gb * 0.5 * (1.0 + t));
          for (int sl = 2; sl <= p; ++sl) rhs[sl - 2] += bq.weights[q] * r * BV(static_cast<Eigen::Index>(q), sl);
        }
        it = done.emplace(std::make_pair(axis, code), Mb_llt.solve(rhs)).first;
      }
      sys.constrained[gid] = 1;
      sys.values[gid] = ed.sign[i] * it->second[s[axis] - 2];
    }
  }
  // faces (3D): project the remainder onto the face's bubble products
  for (std::size_t e = 0; e < mesh.elements.size() && d == 3 && p >= 2; ++e) {
    const auto& el = mesh.elements[e];
    const auto& ed = dm.elements[e];
    for (int fa = 0; fa < 3; ++fa)
      for (int side = 0; side < 2; ++side) {
        if (el.facets[2 * fa + side] != FacetKind::boundary) continue;
        std::vector<int> on_face, bubbles;
        for (int i = 0; i < modes.skeleton_count; ++i) {
          const auto& s = modes.slots[i];
          if (s[fa] != side) continue;
          on_face.push_back(i);
          if (bubble_count(s) == 2) bubbles.push_back(i);
        }
        if (bubbles.empty() || sys.constrained[ed.global[bubbles.front()]]) continue;
        const int a0 = fa == 0 ? 1 : 0, a1 = fa == 2 ? 1 : 2;
        const int nq = static_cast<int>(bq.size());
        const int nb = static_cast<int>(bubbles.size());
        Eigen::MatrixXd M(nb, nb);
        for (int r = 0; r < nb; ++r)
          for (int c = 0; c < nb; ++c) {
            const auto& s = modes.slots[bubbles[r]];
            const auto& t = modes.slots[bubbles[c]];
            M(r, c) = M1(s[a0], t[a0]) * M1(s[a1], t[a1]);
          }
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nb);
        for (int qa = 0; qa < nq; ++qa)
          for (int qb = 0; qb < nq; ++qb) {
            Point xi{0.0, 0.0, 0.0};
            xi[fa] = side ? 1.0 : -1.0;
            xi[a0] = bq.nodes[qa];
            xi[a1] = bq.nodes[qb];
            double r = g(element_point(el, xi));
            for (int i : on_face) {
              const auto& s = modes.slots[i];
              if (bubble_count(s) == 2) continue;
              r -= ed.sign[i] * sys.values[ed.global[i]] * BV(qa, s[a0]) * BV(qb, s[a1]);
            }
            const double w = bq.weights[qa] * bq.weights[qb];
            for (int k = 0; k < nb; ++k) {
              const auto& s = modes.slots[bubbles[k]];
              rhs[k] += w * r * BV(qa, s[a0]) * BV(qb, s[a1]);
            }
          }
        const Eigen::VectorXd c = M.llt().solve(rhs);
        for (int k = 0; k < nb; ++k) {
          const int gid = ed.global[bubbles[k]];
          sys.constrained[gid] = 1;
          sys.values[gid] = ed.sign[bubbles[k]] * c[k];
        }
      }
  }
  return sys;
}

// ---------------------------------------------------------------------------
// Solvers

struct FemSolution {
  const Mesh* mesh = nullptr;
  const DofMap* dofmap = nullptr;
  Eigen::VectorXd u;
  double relative_residual = 0.0;
  int free_skeleton_dofs = 0;
  bool condensed = true;
};

namespace detail {

/// Accumulates symmetric element contributions (lower triangle) in batches.
class SymmetricAccumulator {
 public:
  explicit SymmetricAccumulator(int n) : A_(n, n) {}
  void add(int i, int j, double v) {
    if (i < j) std::swap(i, j);
    trip_.emplace_back(i, j, v);
    if (trip_.size() > kBatch) flush();
  }
  Eigen::SparseMatrix<double> finish() {
    flush();
    A_.makeCompressed();
    return std::move(A_);
  }

 private:
  void flush() {
    if (trip_.empty()) return;
    Eigen::SparseMatrix<double> B(A_.rows(), A_.cols());
    B.setFromTriplets(trip_.begin(), trip_.end());
    A_ += B;
    trip_.clear();
  }
  static constexpr std::size_t kBatch = 4'000'000;
  Eigen::SparseMatrix<double> A_;
  std::vector<Eigen::Triplet<double>> trip_;
};

inline void ensure_condensed(ElementOperator& op, int nb) {
  if (op.condensed) return;
  const Eigen::Index n = op.K.rows(), ni = n - nb;
  if (ni > 0) {
    op.interior_llt.compute(op.K.bottomRightCorner(ni, ni));
    if (op.interior_llt.info() != Eigen::Success)
      throw std::runtime_error("condense_solve: interior block is not positive definite");
    op.interior_solve_coupling = op.interior_llt.solve(op.K.bottomLeftCorner(ni, nb));
    op.schur = op.K.topLeftCorner(nb, nb) - op.K.bottomLeftCorner(ni, nb).transpose() * op.interior_solve_coupling;
  } else {
    op.schur = op.K;
    op.interior_solve_coupling.resize(0, nb);
  }
  op.condensed = true;
}

inline Eigen::VectorXd solve_sparse(const Eigen::SparseMatrix<double>& A, const Eigen::VectorXd& b, double& rel) {
  if (A.rows() == 0) {
    rel = 0.0;
    return {};
  }
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower> ldlt(A);
  if (ldlt.info() != Eigen::Success) throw std::runtime_error("factorization failed: system is not positive definite");
  Eigen::VectorXd x = ldlt.solve(b);
  if (ldlt.info() != Eigen::Success) throw std::runtime_error("sparse solve failed");
  if ((ldlt.vectorD().array() <= 0.0).any())
    throw std::runtime_error("factorization failed: system is not positive definite");
  const Eigen::VectorXd r = A.selfadjointView<Eigen::Lower>() * x - b;
  const double bn = b.norm();
  rel = bn > 0.0 ? r.norm() / bn : r.norm();
  return x;
}

}  // namespace detail

/// Static condensation of interior modes, sparse LDL^T on the skeleton, back-substitution.
inline FemSolution condense_solve(AssembledSystem& sys) {
  const Mesh& mesh = *sys.mesh;
  const DofMap& dm = *sys.dofmap;
  const int nb = dm.modes.skeleton_count;
  std::vector<int> free_index(dm.skeleton_count(), -1);
  int nfree = 0;
  for (int gi = 0; gi < dm.skeleton_count(); ++gi)
    if (!sys.constrained[gi]) free_index[gi] = nfree++;
  for (auto& op : sys.operators) detail::ensure_condensed(op, nb);

  detail::SymmetricAccumulator acc(nfree);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nfree);
  for (std::size_t e = 0; e < mesh.elements.size(); ++e) {
    const auto& op = sys.operators[sys.operator_of[e]];
    const auto& ed = dm.elements[e];
    const Eigen::VectorXd& F = sys.loads[e];
    const Eigen::Index ni = F.size() - nb;
    Eigen::VectorXd gB = F.head(nb);
    if (ni > 0) gB -= op.interior_solve_coupling.transpose() * F.tail(ni);
    for (int i = 0; i < nb; ++i) {
      const int fi = free_index[ed.global[i]];
      if (fi < 0) continue;
      rhs[fi] += ed.sign[i] * gB[i];
      for (int j = 0; j < nb; ++j) {
        const double a = ed.sign[i] * ed.sign[j] * op.schur(i, j);
        const int fj = free_index[ed.global[j]];
        if (fj < 0) rhs[fi] -= a * sys.values[ed.global[j]];
        else if (fj <= fi) acc.add(fi, fj, a);
      }
    }
  }
  FemSolution sol;
  sol.mesh = &mesh;
  sol.dofmap = &dm;
  sol.free_skeleton_dofs = nfree;
  const Eigen::SparseMatrix<double> A = acc.finish();
  const Eigen::VectorXd x = detail::solve_sparse(A, rhs, sol.relative_residual);
  sol.u = Eigen::VectorXd::Zero(dm.total());
  for (int gi = 0; gi < dm.skeleton_count(); ++gi)
    sol.u[gi] = sys.constrained[gi] ? sys.values[gi] : x[free_index[gi]];
  for (std::size_t e = 0; e < mesh.elements.size(); ++e) {
    const auto& op = sys.operators[sys.operator_of[e]];
    const auto& ed = dm.elements[e];
    const Eigen::VectorXd& F = sys.loads[e];
    const Eigen::Index ni = F.size() - nb;
    if (ni == 0) continue;
    Eigen::VectorXd uB(nb);
    for (int i = 0; i < nb; ++i) uB[i] = ed.sign[i] * sol.u[ed.global[i]];
    const Eigen::VectorXd uI = op.interior_llt.solve(F.tail(ni)) - op.interior_solve_coupling * uB;
    for (Eigen::Index k = 0; k < ni; ++k) sol.u[ed.global[nb + k]] = uI[k];
  }
  return sol;
}

/// Uncondensed global system on the free dofs (oracle for the condensed path).
/// Free-dof system. Only the lower triangle of the matrix is stored.
inline std::pair<Eigen::SparseMatrix<double>, Eigen::VectorXd> free_system(const AssembledSystem& sys,
                                                                           std::vector<int>& free_index) {
  const Mesh& mesh = *sys.mesh;
  const DofMap& dm = *sys.dofmap;
  free_index.assign(dm.total(), -1);
  int nfree = 0;
  for (int gi = 0; gi < dm.total(); ++gi)
    if (!sys.constrained[gi]) free_index[gi] = nfree++;
  detail::SymmetricAccumulator acc(nfree);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nfree);
  const int n = dm.modes.size();
  for (std::size_t e = 0; e < mesh.elements.size(); ++e) {
    const auto& K = sys.operators[sys.operator_of[e]].K;
    const auto& ed = dm.elements[e];
    for (int i = 0; i < n; ++i) {
      const int fi = free_index[ed.global[i]];
      if (fi < 0) continue;
      rhs[fi] += ed.sign[i] * sys.loads[e][i];
      for (int j = 0; j < n; ++j) {
        const double a = ed.sign[i] * ed.sign[j] * K(i, j);
        const int fj = free_index[ed.global[j]];
        if (fj < 0) rhs[fi] -= a * sys.values[ed.global[j]];
        else if (fj <= fi) acc.add(fi, fj, a);
      }
    }
  }
  return {acc.finish(), rhs};
}

inline FemSolution direct_solve(const AssembledSystem& sys) {
  std::vector<int> free_index;
  const auto [A, b] = free_system(sys, free_index);
  FemSolution sol;
  sol.mesh = sys.mesh;
  sol.dofmap = sys.dofmap;
  sol.condensed = false;
  const Eigen::VectorXd x = detail::solve_sparse(A, b, sol.relative_residual);
  sol.u = Eigen::VectorXd::Zero(sys.dofmap->total());
  for (int gi = 0; gi < sys.dofmap->total(); ++gi)
    sol.u[gi] = free_index[gi] < 0 ? sys.values[gi] : x[free_index[gi]];
  return sol;
}

/// Max over free dofs of |(A u - F)_i| relative to max |F|, from element data.
inline double galerkin_residual(const AssembledSystem& sys, const FemSolution& sol) {
  const DofMap& dm = *sys.dofmap;
  Eigen::VectorXd r = Eigen::VectorXd::Zero(dm.total()), load = Eigen::VectorXd::Zero(dm.total());
  for (std::size_t e = 0; e < sys.mesh->elements.size(); ++e) {
    const auto& K = sys.operators[sys.operator_of[e]].K;
    const auto& ed = dm.elements[e];
    Eigen::VectorXd ul(K.rows());
    for (Eigen::Index i = 0; i < ul.size(); ++i) ul[i] = ed.sign[i] * sol.u[ed.global[i]];
    const Eigen::VectorXd ke = K * ul - sys.loads[e];
    for (Eigen::Index i = 0; i < ul.size(); ++i) {
      r[ed.global[i]] += ed.sign[i] * ke[i];
      load[ed.global[i]] += ed.sign[i] * sys.loads[e][i];
    }
  }
  double rmax = 0.0, fmax = 0.0;
  for (int gi = 0; gi < dm.total(); ++gi) {
    fmax = std::max(fmax, std::abs(load[gi]));
    if (!sys.constrained[gi]) rmax = std::max(rmax, std::abs(r[gi]));
  }
  return fmax > 0.0 ? rmax / fmax : rmax;
}

/// 1/2 u^T A u over the whole (unconstrained) stiffness.
inline double energy(const AssembledSystem& sys, const FemSolution& sol) {
  const DofMap& dm = *sys.dofmap;
  double en = 0.0;
  for (std::size_t e = 0; e < sys.mesh->elements.size(); ++e) {
    const auto& K = sys.operators[sys.operator_of[e]].K;
    const auto& ed = dm.elements[e];
    Eigen::VectorXd ul(K.rows());
    for (Eigen::Index i = 0; i < ul.size(); ++i) ul[i] = ed.sign[i] * sol.u[ed.global[i]];
    en += 0.5 * ul.dot(K * ul);
  }
  return en;
}

// ---------------------------------------------------------------------------
// Evaluation and errors

/// Local coefficients of the solution on element e as a slot tensor.
inline SlotTensor local_coefficients(const FemSolution& sol, int e) {
  const DofMap& dm = *sol.dofmap;
  const int p = dm.p, d = dm.dim;
  SlotTensor c(d, {p + 1, p + 1, d == 3 ? p + 1 : 1});
  const auto& ed = dm.elements[e];
  for (int i = 0; i < dm.modes.size(); ++i) {
    const auto& s = dm.modes.slots[i];
    c(s[0], s[1], d == 3 ? s[2] : 0) = ed.sign[i] * sol.u[ed.global[i]];
  }
  return c;
}

struct PointValue {
  double value = 0.0;
  std::array<double, 3> gradient{0.0, 0.0, 0.0};
};

/// Value and gradient of the discrete solution at x (first element containing x).
inline PointValue evaluate(const FemSolution& sol, const Point& x) {
  const Mesh& mesh = *sol.mesh;
  const int d = mesh.dim, p = sol.dofmap->p;
  for (int e = 0; e < mesh.element_count(); ++e) {
    const auto& el = mesh.elements[e];
    bool inside = true;
    Point xi{};
    for (int k = 0; k < d; ++k) {
      xi[k] = 2.0 * (x[k] - el.lower[k]) / el.extent[k] - 1.0;
      inside = inside && xi[k] >= -1.0 - 1e-12 && xi[k] <= 1.0 + 1e-12;
    }
    if (!inside) continue;
    std::vector<std::vector<double>> v(3, std::vector<double>(p + 2, 0.0)), dv = v;
    for (int k = 0; k < d; ++k) shape_values(p, xi[k], v[k].data(), dv[k].data());
    PointValue out;
    const SlotTensor c = local_coefficients(sol, e);
    for (int i2 = 0; i2 < (d == 3 ? p + 1 : 1); ++i2)
      for (int i1 = 0; i1 <= p; ++i1)
        for (int i0 = 0; i0 <= p; ++i0) {
          const double cf = c(i0, i1, i2);
          if (cf == 0.0) continue;
          const std::array<int, 3> idx{i0, i1, i2};
          double prod = 1.0;
          for (int k = 0; k < d; ++k) prod *= v[k][idx[k]];
          out.value += cf * prod;
          for (int a = 0; a < d; ++a) {
            double g = 2.0 / el.extent[a];
            for (int k = 0; k < d; ++k) g *= k == a ? dv[k][idx[k]] : v[k][idx[k]];
            out.gradient[a] += cf * g;
          }
        }
    return out;
  }
  throw std::invalid_argument("evaluate: point outside the mesh");
}

struct ErrorQuadrature {
  std::optional<Point> graded_at;  // singular vertex, if any
  double graded_ratio = 0.15;
  int graded_layers = 0;        // 0: max(p, 20)
  int graded_order = 0;         // per-cell points, 0: 2p + 10
  int plain_points = 0;         // 0: 2p + 2
};

struct FemErrors {
  double h1_semi = 0.0;
  double l2 = 0.0;
};

inline FemErrors fem_errors(const FemSolution& sol, const FunctionOracle& exact, const ErrorQuadrature& q = {}) {
  if (!exact.gradient) throw std::invalid_argument("h1_error: exact gradient required");
  const Mesh& mesh = *sol.mesh;
  const int d = mesh.dim, p = sol.dofmap->p;
  const auto plain = orthopoly::gauss_rule(q.plain_points > 0 ? q.plain_points : 2 * p + 2);
  double h1 = 0.0, l2 = 0.0;
  for (int e = 0; e < mesh.element_count(); ++e) {
    const auto& el = mesh.elements[e];
    std::array<orthopoly::QuadratureRule, 3> rules;
    std::optional<Point> corner;
    if (q.graded_at) {
      for (int v = 0; v < mesh.local_vertex_count(); ++v) {
        const Point xv = el.vertex_position(v);
        bool same = true;
        for (int k = 0; k < d; ++k) same = same && std::abs(xv[k] - (*q.graded_at)[k]) < 1e-12;
        if (same) corner = xv;
      }
    }
    for (int k = 0; k < 3; ++k) {
      if (k >= d) {
        rules[k].nodes = {0.0};
        rules[k].weights = {1.0};
      } else if (corner) {
        const int marked = std::abs((*corner)[k] - el.lower[k]) < 1e-12 ? -1 : 1;
        rules[k] = orthopoly::graded_rule(q.graded_ratio, q.graded_layers > 0 ? q.graded_layers : std::max(p, 20),
                                          q.graded_order > 0 ? q.graded_order : 2 * p + 10, marked)
                       .composite;
      } else {
        rules[k] = plain;
      }
    }
    const SlotTensor c = local_coefficients(sol, e);
    std::array<Eigen::MatrixXd, 3> V, D;
    for (int k = 0; k < d; ++k) std::tie(V[k], D[k]) = shape_tables(p, rules[k].nodes);
    SlotTensor val = c;
    for (int k = 0; k < d; ++k) val = apply_axis(val, k, V[k]);
    std::array<SlotTensor, 3> grad;
    for (int a = 0; a < d; ++a) {
      grad[a] = c;
      for (int k = 0; k < d; ++k) grad[a] = apply_axis(grad[a], k, k == a ? Eigen::MatrixXd(D[k] * (2.0 / el.extent[k])) : V[k]);
    }
    double jac = 1.0;
    for (int k = 0; k < d; ++k) jac *= 0.5 * el.extent[k];
    const int n0 = static_cast<int>(rules[0].size()), n1 = static_cast<int>(rules[1].size()),
              n2 = static_cast<int>(rules[2].size());
    for (int i2 = 0; i2 < n2; ++i2)
      for (int i1 = 0; i1 < n1; ++i1)
        for (int i0 = 0; i0 < n0; ++i0) {
          const std::array<int, 3> idx{i0, i1, i2};
          Point x{0.0, 0.0, 0.0};
          double w = jac;
          for (int k = 0; k < d; ++k) {
            x[k] = el.lower[k] + 0.5 * el.extent[k] * (1.0 + rules[k].nodes[idx[k]]);
            w *= rules[k].weights[idx[k]];
          }
          const auto ge = exact.gradient(x);
          double s = 0.0;
          for (int a = 0; a < d; ++a) {
            const double diff = ge[a] - grad[a](i0, i1, i2);
            s += diff * diff;
          }
          h1 += w * s;
          const double dv = exact.value(x) - val(i0, i1, i2);
          l2 += w * dv * dv;
        }
  }
  return {std::sqrt(h1), std::sqrt(l2)};
}

inline double h1_error(const FemSolution& sol, const FunctionOracle& exact, std::optional<Point> graded_at = {}) {
  ErrorQuadrature q;
  q.graded_at = graded_at;
  return fem_errors(sol, exact, q).h1_semi;
}

// ---------------------------------------------------------------------------
// Sweeps

struct SweepOptions {
  ErrorQuadrature quadrature;
  bool use_graded_quadrature = true;  // only meaningful when the mesh has a singular point
};

inline std::string method_tag(Family family) { return std::string("FEM(") + std::string(to_string(family)) + ")"; }

inline ConvergenceRecords run_p_sweep(const Problem& problem, Family family, const std::vector<int>& p_list,
                                      SweepOptions options = {}) {
  ConvergenceRecords out;
  if (options.use_graded_quadrature && problem.mesh.singular_point && !options.quadrature.graded_at)
    options.quadrature.graded_at = problem.mesh.singular_point;
  for (int p : p_list) {
    ConvergenceRecord rec;
    rec.method = method_tag(family);
    rec.p = p;
    try {
      const auto t0 = std::chrono::steady_clock::now();
      const DofMap dm = build_dofmap(problem.mesh, p, family);
      rec.dof = dm.total();
      AssembledSystem sys = assemble_poisson(problem.mesh, dm, problem.source, problem.exact.value);
      const FemSolution sol = condense_solve(sys);
      const auto t1 = std::chrono::steady_clock::now();
      const FemErrors err = fem_errors(sol, problem.exact, options.quadrature);
      const auto t2 = std::chrono::steady_clock::now();
      rec.errors["h1_semi"] = err.h1_semi;
      rec.errors["l2"] = err.l2;
      rec.diagnostics["solver_residual"] = sol.relative_residual;
      rec.diagnostics["skeleton_dofs"] = sol.free_skeleton_dofs;
      rec.diagnostics["solve_seconds"] = std::chrono::duration<double>(t1 - t0).count();
      rec.diagnostics["error_seconds"] = std::chrono::duration<double>(t2 - t1).count();
    } catch (const std::exception& ex) {
      rec.failure = ex.what();
    }
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace fem
}  // namespace hpexp
