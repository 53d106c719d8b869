// L2-orthogonal truncations onto Q_p / P_p and the constructive H1-projections
// onto Q_p, S_p and P_p on the reference element, with error measurement
// against a reference expansion.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "hpexp/bounds.hpp"
#include "hpexp/expansion.hpp"
#include "hpexp/indexsets.hpp"

namespace hpexp {

/// Coefficients in the 1D basis {1, psi_0, psi_1, ..., psi_{p-1}} per axis.
/// Slot 0 is the constant, slot 1 is psi_0 = x+1, slot s >= 2 is psi_{s-1}.
using PsiTensor = BasicTensor<PsiBasisTag>;

enum class ProjectionKind { L2_Q, L2_P, H1_Q, H1_S, H1_P };

inline std::string to_string(ProjectionKind k) {
  switch (k) {
    case ProjectionKind::L2_Q: return "l2q";
    case ProjectionKind::L2_P: return "l2p";
    case ProjectionKind::H1_Q: return "h1q";
    case ProjectionKind::H1_S: return "h1s";
    case ProjectionKind::H1_P: return "h1p";
  }
  return "?";
}

inline ProjectionKind projection_kind_from_string(const std::string& s) {
  if (s == "l2q") return ProjectionKind::L2_Q;
  if (s == "l2p") return ProjectionKind::L2_P;
  if (s == "h1q") return ProjectionKind::H1_Q;
  if (s == "h1s") return ProjectionKind::H1_S;
  if (s == "h1p") return ProjectionKind::H1_P;
  throw std::invalid_argument("unknown projection kind '" + s + "'");
}

struct ProjectionResult {
  CoeffTensor projected;  // plain Legendre coefficients
  ProjectionKind kind = ProjectionKind::L2_Q;
  int p = 0;
  PsiTensor psi;  // construction-basis coefficients (H1 kinds only)
};

struct ProjectionErrors {
  double l2 = 0.0;
  double h1_semi = 0.0;
  bool trusted = true;
};

namespace projections {

/// Target family of a projection kind at degree p (H1_P is reported as P_p).
inline BasisSpec target_space(ProjectionKind kind, int dim, int p) {
  switch (kind) {
    case ProjectionKind::L2_Q:
    case ProjectionKind::H1_Q: return {dim, p, Family::Q};
    case ProjectionKind::L2_P:
    case ProjectionKind::H1_P: return {dim, p, Family::P};
    case ProjectionKind::H1_S: return {dim, p, Family::S};
  }
  return {dim, p, Family::Q};
}

inline ProjectionResult project_l2(const CoeffTensor& u, Family family, int p) {
  if (family == Family::S) throw std::invalid_argument("project_l2: family must be Q or P");
  if (p < 0) throw std::invalid_argument("project_l2: p must be >= 0");
  ProjectionResult r;
  r.kind = family == Family::Q ? ProjectionKind::L2_Q : ProjectionKind::L2_P;
  r.p = p;
  std::array<int, 3> deg{};
  for (int k = 0; k < 3; ++k) deg[k] = k < u.dim() ? std::min(p, u.degree(k)) : 0;
  r.projected = CoeffTensor::with_degrees(u.dim(), deg);
  const BasisSpec spec{u.dim(), p, family};
  r.projected.for_each([&](const MultiIndex& i, double) {
    if (indexsets::contains(spec, i)) r.projected[i] = u[i];
  });
  return r;
}

/// 1D H1-projection of degree p from Legendre degree n into psi slots:
/// row 0 is evaluation at -1, row j+1 the j-th Legendre coefficient of the derivative.
inline Eigen::MatrixXd h1_slot_matrix(int n, int p) {
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(p + 1, n + 1);
  for (int m = 0; m <= n; ++m) H(0, m) = (m % 2 == 0) ? 1.0 : -1.0;
  for (int j = 0; j < p; ++j)
    for (int m = j + 1; m <= n; m += 2) H(j + 1, m) = 2 * j + 1;
  return H;
}

/// psi slots -> Legendre coefficients of degree p:
/// 1 -> L_0, psi_0 -> L_0 + L_1, psi_j -> (L_{j+1} - L_{j-1})/(2j+1).
inline Eigen::MatrixXd psi_to_legendre_matrix(int p) {
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(p + 1, p + 1);
  C(0, 0) = 1.0;
  if (p >= 1) {
    C(0, 1) = 1.0;
    C(1, 1) = 1.0;
  }
  for (int j = 1; j < p; ++j) {
    C(j + 1, j + 1) = 1.0 / (2 * j + 1);
    C(j - 1, j + 1) = -1.0 / (2 * j + 1);
  }
  return C;
}

inline CoeffTensor psi_to_legendre(const PsiTensor& t, const std::vector<int>& axes) {
  CoeffTensor out = apply_axis<LegendreBasisTag>(t, axes.front(), psi_to_legendre_matrix(t.extent(axes.front()) - 1));
  for (std::size_t n = 1; n < axes.size(); ++n)
    out = apply_axis(out, axes[n], psi_to_legendre_matrix(out.extent(axes[n]) - 1));
  return out;
}

/// Fiber-wise tensor H1-projection of degree p along the listed axes; other
/// axes keep their Legendre representation. Result is in psi slots on `axes`.
inline PsiTensor h1_psi_tensor(const CoeffTensor& u, int p, const std::vector<int>& axes) {
  PsiTensor out = apply_axis<PsiBasisTag>(u, axes.front(), h1_slot_matrix(u.degree(axes.front()), p));
  for (std::size_t n = 1; n < axes.size(); ++n)
    out = apply_axis(out, axes[n], h1_slot_matrix(out.extent(axes[n]) - 1, p));
  return out;
}

/// Slot s >= 2 carries the bubble psi_{s-1}.
inline bool is_bubble_slot(int s) { return s >= 2; }

/// Zero the bubble products of total psi-degree above the serendipity limits:
/// pairs (two bubble slots among `axes`) keep psi-totals <= p-2, triples keep <= p-3.
inline void serendipity_filter(PsiTensor& t, int p, const std::vector<int>& axes) {
  const auto ext = t.extents();
  for (int a = 0; a < ext[0]; ++a)
    for (int b = 0; b < ext[1]; ++b)
      for (int c = 0; c < ext[2]; ++c) {
        const std::array<int, 3> s{a, b, c};
        int bubbles = 0, total = 0;
        for (int k : axes)
          if (is_bubble_slot(s[k])) {
            ++bubbles;
            total += s[k] - 1;
          }
        if ((bubbles == 2 && total > p - 2) || (bubbles == 3 && total > p - 3)) t(a, b, c) = 0.0;
      }
}

inline std::vector<int> all_axes(int dim) { return dim == 2 ? std::vector<int>{0, 1} : std::vector<int>{0, 1, 2}; }

inline ProjectionResult project_h1_q(const CoeffTensor& u, int p) {
  if (u.empty()) throw std::invalid_argument("project_h1_q: empty reference expansion");
  if (p < 1) throw std::invalid_argument("project_h1_q: p must be >= 1");
  ProjectionResult r;
  r.kind = ProjectionKind::H1_Q;
  r.p = p;
  r.psi = h1_psi_tensor(u, p, all_axes(u.dim()));
  r.projected = psi_to_legendre(r.psi, all_axes(u.dim()));
  return r;
}

inline int serendipity_min_degree(int dim) { return dim == 2 ? 4 : 6; }

inline ProjectionResult project_h1_s(const CoeffTensor& u, int p) {
  if (u.empty()) throw std::invalid_argument("project_h1_s: empty reference expansion");
  const int pmin = serendipity_min_degree(u.dim());
  if (p < pmin)
    throw std::invalid_argument("project_h1_s: requires p >= " + std::to_string(pmin) + " in " +
                                std::to_string(u.dim()) + "D");
  ProjectionResult r;
  r.kind = ProjectionKind::H1_S;
  r.p = p;
  r.psi = h1_psi_tensor(u, p, all_axes(u.dim()));
  serendipity_filter(r.psi, p, all_axes(u.dim()));
  r.projected = psi_to_legendre(r.psi, all_axes(u.dim()));
  return r;
}

/// pi_P := pi_{S, p+1-d}, defined for p >= 3d-1.
inline ProjectionResult project_h1_p(const CoeffTensor& u, int p) {
  const int d = u.dim();
  if (p < 3 * d - 1)
    throw std::invalid_argument("project_h1_p: requires p >= " + std::to_string(3 * d - 1));
  ProjectionResult r = project_h1_s(u, p + 1 - d);
  r.kind = ProjectionKind::H1_P;
  r.p = p;
  return r;
}

inline ProjectionResult project(const CoeffTensor& u, ProjectionKind kind, int p) {
  switch (kind) {
    case ProjectionKind::L2_Q: return project_l2(u, Family::Q, p);
    case ProjectionKind::L2_P: return project_l2(u, Family::P, p);
    case ProjectionKind::H1_Q: return project_h1_q(u, p);
    case ProjectionKind::H1_S: return project_h1_s(u, p);
    case ProjectionKind::H1_P: return project_h1_p(u, p);
  }
  throw std::invalid_argument("project: unknown kind");
}

/// Dimension of the target space (per element).
inline long long projection_dof(ProjectionKind kind, int dim, int p) {
  if (kind == ProjectionKind::H1_P) return indexsets::dof_count({dim, p, Family::P});
  return indexsets::dof_count(target_space(kind, dim, p));
}

inline std::array<int, 3> common_extents(const CoeffTensor& a, const CoeffTensor& b) {
  std::array<int, 3> e{};
  for (int k = 0; k < 3; ++k) e[k] = std::max(a.extent(k), b.extent(k));
  return e;
}

/// L2 and H1-seminorm errors by Parseval on the coefficient difference.
inline ProjectionErrors projection_errors(const CoeffTensor& u_ref, const CoeffTensor& approx, int p) {
  const auto e = common_extents(u_ref, approx);
  const CoeffTensor diff = u_ref.resized(e) - approx.resized(e);
  ProjectionErrors out;
  out.l2 = expansion::l2_norm(diff);
  out.h1_semi = expansion::sobolev_seminorm(diff, 1);
  int min_deg = u_ref.degree(0);
  for (int k = 1; k < u_ref.dim(); ++k) min_deg = std::min(min_deg, u_ref.degree(k));
  out.trusted = min_deg >= p + expansion::kReferenceMargin &&
                expansion::tail_energy_fraction(u_ref) < expansion::kTailTolerance;
  return out;
}

inline ProjectionErrors projection_errors(const CoeffTensor& u_ref, const ProjectionResult& proj) {
  return projection_errors(u_ref, proj.projected, proj.p);
}

/// pi_p^(1) pi_p^(2) u - pi_{S,p}^(1,2) u for a 3D expansion, applied fiber-wise in x3.
inline CoeffTensor partial_q_minus_s_12(const CoeffTensor& u, int p) {
  if (u.dim() != 3) throw std::invalid_argument("partial_q_minus_s_12: needs a 3D expansion");
  const std::vector<int> axes{0, 1};
  PsiTensor q = h1_psi_tensor(u, p, axes);
  PsiTensor s = q;
  serendipity_filter(s, p, axes);
  return psi_to_legendre(q, axes) - psi_to_legendre(s, axes);
}

/// The face block T_{2,a}: sum over psi pairs (i1,i2), i1+i2 >= p-1, 1 <= i_k <= p-1,
/// of the full x3 expansion (a_{i1 i2 i3} psi_{i3} and the b_{i1 i2} term), taken
/// from the 3D H1 psi-tensor with x3 resolved exactly.
inline CoeffTensor face_block_t2a(const CoeffTensor& u, int p) {
  if (u.dim() != 3) throw std::invalid_argument("face_block_t2a: needs a 3D expansion");
  const int exact = u.degree(2) + 1;  // the 1D H1-projection of this degree is the identity
  PsiTensor full = h1_psi_tensor(u, p, {0, 1});
  full = apply_axis(full, 2, h1_slot_matrix(u.degree(2), exact));
  PsiTensor block(3, full.extents());
  for (int a = 2; a < full.extent(0); ++a)
    for (int b = 2; b < full.extent(1); ++b) {
      if ((a - 1) + (b - 1) < p - 1) continue;
      for (int c = 0; c < full.extent(2); ++c) block(a, b, c) = full(a, b, c);
    }
  return psi_to_legendre(block, {0, 1, 2});
}

/// Outcome of checking ||u - Pi_P u||^2 <= Phi_d(p+1,s) |u|^2_{V^s} on random tensors.
struct L2BoundAudit {
  int dim = 2;
  int p = 0;
  int samples = 0;
  int checks = 0;
  int violations = 0;
  double worst_ratio = 0.0;  // max of lhs / rhs
  int worst_s = -1;
};

inline L2BoundAudit audit_l2p_bound(int dim, int p, int samples, unsigned seed) {
  L2BoundAudit r;
  r.dim = dim;
  r.p = p;
  r.samples = samples;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int n = 0; n < samples; ++n) {
    CoeffTensor u = CoeffTensor::with_degree(dim, p + 6);
    for (double& v : u.data()) v = normal(rng);
    const auto proj = project_l2(u, Family::P, p);
    const double err = projection_errors(u, proj).l2;
    for (int s = 0; s <= p + 1; ++s) {
      const double v = expansion::weighted_seminorm(u, s);
      const double rhs = bounds::phi(dim, p + 1, s) * v * v;
      ++r.checks;
      const double ratio = err * err / rhs;
      if (ratio > 1.0 + 1e-12) ++r.violations;
      if (ratio > r.worst_ratio) {
        r.worst_ratio = ratio;
        r.worst_s = s;
      }
    }
  }
  return r;
}

}  // namespace projections
}  // namespace hpexp
