// Gamma-ratio bound machinery: Phi_d, Stirling envelopes, the exhaustive
// lattice audit of the optimization lemma, the sharp per-mode constant of the
// L2(P_p) estimate, analytic envelopes and the exponential-slope predictors.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hpexp/expansion.hpp"
#include "hpexp/indexsets.hpp"

namespace hpexp::bounds {

/// Phi_d(m,n) = (Gamma((m-n)/d + 1) / Gamma((m+n)/d + 1))^d, via log-Gamma.
inline double log_phi(double d, double m, double n) {
  if (n > m) throw std::invalid_argument("phi: requires n <= m");
  if (n < 0 || d < 1) throw std::invalid_argument("phi: requires n >= 0 and d >= 1");
  return d * (std::lgamma((m - n) / d + 1.0) - std::lgamma((m + n) / d + 1.0));
}

inline double phi(double d, double m, double n) { return std::exp(log_phi(d, m, n)); }

/// phi(d,m,n) <= (e/2)^{2n} (d/m)^{2n}.
inline bool stirling_envelope_check(int d, int m, int n) {
  if (n == 0) return phi(d, m, 0) <= 1.0 + 1e-15;
  if (n > m || m < 1) throw std::invalid_argument("stirling_envelope_check: requires 1 <= n <= m");
  const double lhs = log_phi(d, m, n);
  const double rhs = 2.0 * n * (1.0 - std::numbers::ln2) + 2.0 * n * std::log(static_cast<double>(d) / m);
  return lhs <= rhs + 1e-12;
}

/// F(xi, rho) = prod Gamma(rho_k - xi_k + 1) / Gamma(rho_k + xi_k + 1).
inline double lattice_objective(const std::vector<int>& xi, const std::vector<int>& rho) {
  double lf = 0.0;
  for (std::size_t k = 0; k < xi.size(); ++k)
    lf += std::lgamma(rho[k] - xi[k] + 1.0) - std::lgamma(rho[k] + xi[k] + 1.0);
  return std::exp(lf);
}

struct LemmaAuditReport {
  int d = 0, M = 0, m = 0;
  double lattice_max = 0.0;
  std::vector<int> argmax_xi, argmax_rho;
  double phi = 0.0;
  bool holds = false;
};

inline constexpr int kLemmaAuditCap = 40;

inline void compositions(int total, int parts, std::vector<int>& cur, std::vector<std::vector<int>>& out) {
  if (parts == 1) {
    cur.push_back(total);
    out.push_back(cur);
    cur.pop_back();
    return;
  }
  for (int v = total; v >= 0; --v) {
    cur.push_back(v);
    compositions(total - v, parts - 1, cur, out);
    cur.pop_back();
  }
}

inline std::vector<std::vector<int>> compositions(int total, int parts) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur;
  compositions(total, parts, cur, out);
  return out;
}

/// Exhaustive maximum of F over integer xi <= rho with |xi| = m, |rho| = M.
inline LemmaAuditReport lemma_audit(int d, int M, int m) {
  if (d < 1 || d > 3) throw std::invalid_argument("lemma_audit: d must be 1, 2 or 3");
  if (m < 0 || m > M) throw std::invalid_argument("lemma_audit: requires 0 <= m <= M");
  if (M > kLemmaAuditCap)
    throw std::invalid_argument("lemma_audit: M exceeds the enumeration cap of " + std::to_string(kLemmaAuditCap));
  LemmaAuditReport r;
  r.d = d;
  r.M = M;
  r.m = m;
  r.lattice_max = -1.0;
  const auto rhos = compositions(M, d);
  const auto xis = compositions(m, d);
  for (const auto& rho : rhos)
    for (const auto& xi : xis) {
      bool ok = true;
      for (int k = 0; k < d; ++k) ok = ok && xi[k] <= rho[k];
      if (!ok) continue;
      const double f = lattice_objective(xi, rho);
      if (f > r.lattice_max * (1.0 + 1e-14)) {
        r.lattice_max = f;
        r.argmax_xi = xi;
        r.argmax_rho = rho;
      }
    }
  r.phi = phi(d, M, m);
  r.holds = r.lattice_max <= r.phi * (1.0 + 1e-12);
  return r;
}

/// Smallest M (searched up to m_cap) beyond which Phi_n(M, delta M) <= Phi_d(M, delta M)
/// holds for every larger M up to the cap; nullopt when it never settles.
inline std::optional<int> asymptotic_ordering_threshold(int d, int n, double delta, int m_cap = 400) {
  std::optional<int> threshold;
  for (int M = 1; M <= m_cap; ++M) {
    const double m = delta * M;
    const bool ok = log_phi(n, M, m) <= log_phi(d, M, m) + 1e-13;
    if (ok && !threshold) threshold = M;
    if (!ok) threshold.reset();
  }
  return threshold;
}

struct SharpRatio {
  double max_ratio = 0.0;
  MultiIndex argmax;
};

/// Exact worst single-mode value of ||u - Pi_P u||^2 / |u|^2_{V^s} over shells
/// |i| in [p+1, p+1+shell_buffer].
inline SharpRatio sharp_l2_ratio(int d, int p, int s, int shell_buffer = 6) {
  if (s < 0 || s > p + 1) throw std::invalid_argument("sharp_l2_ratio: requires 0 <= s <= p+1");
  if (d != 2 && d != 3) throw std::invalid_argument("sharp_l2_ratio: d must be 2 or 3");
  const auto as = expansion::alphas(d, s);
  SharpRatio best;
  for (int t = p + 1; t <= p + 1 + shell_buffer; ++t) {
    for (const auto& i : expansion::alphas(d, t)) {
      double denom = 0.0;
      for (const auto& al : as) {
        if (!i.geq(al)) continue;
        double g = 1.0;
        for (int k = 0; k < d; ++k) g *= expansion::gamma_ratio(i[k], al[k]);
        denom += g;
      }
      if (denom <= 0.0) continue;
      const double ratio = 1.0 / denom;
      if (ratio > best.max_ratio * (1.0 + 1e-14)) {
        best.max_ratio = ratio;
        best.argmax = i;
      }
    }
  }
  return best;
}

/// F_1(R, eps) = (1-eps)^{1-eps} / (1+eps)^{1+eps} (eps R)^{2 eps}.
inline double f1(double R, double eps) {
  return std::exp((1.0 - eps) * std::log(1.0 - eps) - (1.0 + eps) * std::log(1.0 + eps) +
                  2.0 * eps * std::log(eps * R));
}

inline double epsilon_min(double R) {
  if (!(R > 0.0)) throw std::invalid_argument("epsilon_min: R must be positive");
  return 1.0 / std::sqrt(1.0 + R * R);
}

struct SlopePrediction {
  double eps_min = 0.0;
  double f1_min = 0.0;
  double b1 = 0.0;
  double b2 = 0.0;
};

inline SlopePrediction slope_predict(double R, double h, int d) {
  if (!(R > 0.0)) throw std::invalid_argument("slope_predict: R must be positive");
  if (!(h > 0.0 && h <= 2.0)) throw std::invalid_argument("slope_predict: requires 0 < h <= 2");
  SlopePrediction s;
  s.eps_min = epsilon_min(R);
  const double q = R / (std::sqrt(1.0 + R * R) + 1.0);
  s.f1_min = q * q;
  s.b1 = 0.5 * std::abs(std::log(s.f1_min)) + s.eps_min * std::abs(std::log(h));
  s.b2 = s.b1 - s.eps_min * std::log(static_cast<double>(d));
  return s;
}

// ---------------------------------------------------------------------------
// Right-hand sides of the projection error estimates.

enum class BoundKind {
  L2Q,       // ||u - Pi_Q u||^2 <= Phi_1(p+1,s) |u|^2_{H^s}
  L2P,       // ||u - Pi_P u||^2 <= Phi_d(p+1,s) |u|^2_{V^s}
  H1Q_L2,    // pi_Q, L2 norm (2D or 3D)
  H1Q_H1,    // pi_Q, gradient
  H1S_L2,    // pi_S, L2 norm
  H1S_H1,    // pi_S, gradient
  H1P_L2,    // pi_P = pi_{S,p+1-d}, L2 norm
  H1P_H1,    // pi_P, gradient
};

inline std::string to_string(BoundKind k) {
  switch (k) {
    case BoundKind::L2Q: return "approxL2-Q";
    case BoundKind::L2P: return "approxL2-P";
    case BoundKind::H1Q_L2: return "H1-projector-L2 norm";
    case BoundKind::H1Q_H1: return "H1-projector-H1 norm";
    case BoundKind::H1S_L2: return "H1-projector-L2 norm S";
    case BoundKind::H1S_H1: return "H1-projector-H1 norm S";
    case BoundKind::H1P_L2: return "H1-projector-L2 norm P";
    case BoundKind::H1P_H1: return "H1-projector-H1 norm P";
  }
  return "?";
}

/// Seminorm values (not squared) keyed as:
///   "H^k"      |u|_{H^k}
///   "V^k"      |u|_{V^k}
///   "D(a,b)" / "D(a,b,c)"   ||d^alpha u||_{L2}
///   "V12^k"    |d1 d2 u|_{V^k}       "V123^k"  |d1 d2 d3 u|_{V^k}
using SeminormTable = std::map<std::string, double>;

inline std::string key_h(int k) { return "H^" + std::to_string(k); }
inline std::string key_v(int k) { return "V^" + std::to_string(k); }
inline std::string key_v12(int k) { return "V12^" + std::to_string(k); }
inline std::string key_v123(int k) { return "V123^" + std::to_string(k); }
inline std::string key_d(const MultiIndex& a) { return "D" + a.str(); }

inline std::pair<int, int> admissible_s(BoundKind kind, int d, int p) {
  switch (kind) {
    case BoundKind::L2Q:
    case BoundKind::L2P: return {0, p + 1};
    case BoundKind::H1Q_L2:
    case BoundKind::H1Q_H1:
    case BoundKind::H1S_L2:
    case BoundKind::H1S_H1: return {d - 1, p};
    case BoundKind::H1P_L2:
    case BoundKind::H1P_H1: return {d - 1, p + 1 - d};
  }
  return {0, 0};
}

namespace detail {

inline MultiIndex axis_power(int d, int axis, int power) {
  MultiIndex a(d);
  a[axis] = power;
  return a;
}

inline MultiIndex mixed(int d, std::initializer_list<std::pair<int, int>> parts) {
  MultiIndex a(d);
  for (auto [axis, power] : parts) a[axis] += power;
  return a;
}

class Lookup {
 public:
  explicit Lookup(const SeminormTable& t) : t_(t) {}
  double sq(const std::string& key) const {
    const auto it = t_.find(key);
    if (it == t_.end()) throw std::invalid_argument("bound_rhs: missing seminorm '" + key + "'");
    return it->second * it->second;
  }

 private:
  const SeminormTable& t_;
};

inline double q2d_l2(const Lookup& L, int p, int s) {
  const double pp = static_cast<double>(p) * (p + 1);
  return 2.0 / pp * phi(1, p, s) * (L.sq(key_d(axis_power(2, 0, s + 1))) + 2.0 * L.sq(key_d(axis_power(2, 1, s + 1)))) +
         4.0 / (pp * pp) * phi(1, p, s - 1) * L.sq(key_d(mixed(2, {{0, 1}, {1, s}})));
}

inline double q2d_h1(const Lookup& L, int p, int s) {
  const double pp = static_cast<double>(p) * (p + 1);
  return 2.0 * phi(1, p, s) * (L.sq(key_d(axis_power(2, 0, s + 1))) + L.sq(key_d(axis_power(2, 1, s + 1)))) +
         8.0 / pp * phi(1, p, s - 1) *
             (L.sq(key_d(mixed(2, {{0, s}, {1, 1}}))) + L.sq(key_d(mixed(2, {{0, 1}, {1, s}}))));
}

inline double q3d_l2(const Lookup& L, int p, int s) {
  const double pp = static_cast<double>(p) * (p + 1);
  double pure = 0.0;
  for (int k = 0; k < 3; ++k) pure += L.sq(key_d(axis_power(3, k, s + 1)));
  const double cross = L.sq(key_d(mixed(3, {{0, 1}, {1, s}}))) + L.sq(key_d(mixed(3, {{0, 1}, {2, s}}))) +
                       L.sq(key_d(mixed(3, {{1, 1}, {2, s}})));
  const double triple = L.sq(key_d(mixed(3, {{0, 1}, {1, 1}, {2, s - 1}})));
  return 8.0 / pp * phi(1, p, s) * pure + 8.0 / (pp * pp) * phi(1, p, s - 1) * cross +
         8.0 / (pp * pp * pp) * phi(1, p, s - 2) * triple;
}

inline double q3d_h1(const Lookup& L, int p, int s) {
  const double pp = static_cast<double>(p) * (p + 1);
  double pure = 0.0;
  for (int k = 0; k < 3; ++k) pure += L.sq(key_d(axis_power(3, k, s + 1)));
  double cross = 0.0;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      if (a != b) cross += L.sq(key_d(mixed(3, {{a, 1}, {b, s}})));
  const double triple = L.sq(key_d(mixed(3, {{0, 1}, {1, 1}, {2, s - 1}}))) +
                        L.sq(key_d(mixed(3, {{0, 1}, {1, s - 1}, {2, 1}}))) +
                        L.sq(key_d(mixed(3, {{0, s - 1}, {1, 1}, {2, 1}})));
  return 2.0 * phi(1, p, s) * pure + 8.0 / pp * phi(1, p, s - 1) * cross +
         8.0 / (pp * pp) * phi(1, p, s - 2) * triple;
}

inline double s2d_l2(const Lookup& L, int p, int s) {
  return 2.0 * q2d_l2(L, p, s) + 72.0 * phi(2, p + 1, s + 1) * L.sq(key_v12(s - 1));
}

inline double s2d_h1(const Lookup& L, int p, int s) {
  return 2.0 * q2d_h1(L, p, s) + 24.0 * phi(2, p, s) * L.sq(key_v12(s - 1));
}

// 3D serendipity: the stated estimates carry unnamed constants; these follow
// the explicit chain (interior block 216, each face block 504 resp. 36 and 84
// per partial derivative, four blocks, triangle inequality).
inline double s3d_l2(const Lookup& L, int p, int s) {
  const double ph = phi(3, p + 1, s + 1);
  const double diff = 4.0 * (216.0 * ph * L.sq(key_v123(s - 2)) + 3.0 * 504.0 * ph * L.sq(key_h(s + 1)));
  return 2.0 * q3d_l2(L, p, s) + 2.0 * diff;
}

inline double s3d_h1(const Lookup& L, int p, int s) {
  const double ph = phi(3, p, s);
  const double per_axis = 4.0 * (36.0 * ph * L.sq(key_v123(s - 2)) + 3.0 * 84.0 * ph * L.sq(key_h(s + 1)));
  return 2.0 * q3d_h1(L, p, s) + 2.0 * 3.0 * per_axis;
}

}  // namespace detail

/// Seminorm keys a bound formula reads.
inline std::vector<std::string> required_seminorms(BoundKind kind, int d, int p, int s) {
  using detail::axis_power;
  using detail::mixed;
  std::vector<std::string> keys;
  if (kind == BoundKind::H1P_L2 || kind == BoundKind::H1P_H1)
    return required_seminorms(kind == BoundKind::H1P_L2 ? BoundKind::H1S_L2 : BoundKind::H1S_H1, d, p + 1 - d, s);
  if (kind == BoundKind::L2Q) return {key_h(s)};
  if (kind == BoundKind::L2P) return {key_v(s)};
  for (int k = 0; k < d; ++k) keys.push_back(key_d(axis_power(d, k, s + 1)));
  if (d == 2) {
    keys.push_back(key_d(mixed(2, {{0, 1}, {1, s}})));
    keys.push_back(key_d(mixed(2, {{0, s}, {1, 1}})));
    if (kind == BoundKind::H1S_L2 || kind == BoundKind::H1S_H1) keys.push_back(key_v12(s - 1));
  } else {
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        if (a != b) keys.push_back(key_d(mixed(3, {{a, 1}, {b, s}})));
    keys.push_back(key_d(mixed(3, {{0, 1}, {1, 1}, {2, s - 1}})));
    keys.push_back(key_d(mixed(3, {{0, 1}, {1, s - 1}, {2, 1}})));
    keys.push_back(key_d(mixed(3, {{0, s - 1}, {1, 1}, {2, 1}})));
    if (kind == BoundKind::H1S_L2 || kind == BoundKind::H1S_H1) {
      keys.push_back(key_v123(s - 2));
      keys.push_back(key_h(s + 1));
    }
  }
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  return keys;
}

/// Evaluate a seminorm key on a Legendre expansion.
inline double seminorm_value(const CoeffTensor& u, const std::string& key) {
  const auto parse_int = [&](std::size_t pos) { return std::stoi(key.substr(pos)); };
  if (key.rfind("H^", 0) == 0) return expansion::sobolev_seminorm(u, parse_int(2));
  if (key.rfind("V^", 0) == 0) return expansion::weighted_seminorm(u, parse_int(2));
  if (key.rfind("V12^", 0) == 0)
    return expansion::weighted_seminorm(expansion::differentiate(expansion::differentiate(u, 0), 1), parse_int(4));
  if (key.rfind("V123^", 0) == 0) {
    auto w = expansion::differentiate(expansion::differentiate(expansion::differentiate(u, 0), 1), 2);
    return expansion::weighted_seminorm(w, parse_int(5));
  }
  if (key.rfind("D(", 0) == 0) {
    MultiIndex a(u.dim());
    std::size_t pos = 2;
    for (int k = 0; k < u.dim(); ++k) {
      std::size_t used = 0;
      a[k] = std::stoi(key.substr(pos), &used);
      pos += used + 1;
    }
    return expansion::l2_norm(expansion::differentiate(u, a));
  }
  throw std::invalid_argument("seminorm_value: unknown key '" + key + "'");
}

inline SeminormTable compute_seminorms(const CoeffTensor& u, BoundKind kind, int p, int s) {
  SeminormTable t;
  for (const auto& k : required_seminorms(kind, u.dim(), p, s)) t[k] = seminorm_value(u, k);
  return t;
}

/// Right-hand side (squared-norm scale) of the selected estimate.
inline double bound_rhs(BoundKind kind, int p, int s, const SeminormTable& seminorms, int d) {
  if (d != 2 && d != 3) throw std::invalid_argument("bound_rhs: d must be 2 or 3");
  const auto [smin, smax] = admissible_s(kind, d, p);
  if (s < smin || s > smax)
    throw std::invalid_argument("bound_rhs: s=" + std::to_string(s) + " outside [" + std::to_string(smin) + "," +
                                std::to_string(smax) + "] for " + to_string(kind));
  const detail::Lookup L(seminorms);
  switch (kind) {
    case BoundKind::L2Q: return phi(1, p + 1, s) * L.sq(key_h(s));
    case BoundKind::L2P: return phi(d, p + 1, s) * L.sq(key_v(s));
    case BoundKind::H1Q_L2: return d == 2 ? detail::q2d_l2(L, p, s) : detail::q3d_l2(L, p, s);
    case BoundKind::H1Q_H1: return d == 2 ? detail::q2d_h1(L, p, s) : detail::q3d_h1(L, p, s);
    case BoundKind::H1S_L2: return d == 2 ? detail::s2d_l2(L, p, s) : detail::s3d_l2(L, p, s);
    case BoundKind::H1S_H1: return d == 2 ? detail::s2d_h1(L, p, s) : detail::s3d_h1(L, p, s);
    case BoundKind::H1P_L2: return bound_rhs(BoundKind::H1S_L2, p + 1 - d, s, seminorms, d);
    case BoundKind::H1P_H1: return bound_rhs(BoundKind::H1S_H1, p + 1 - d, s, seminorms, d);
  }
  return std::numeric_limits<double>::quiet_NaN();
}

// ---------------------------------------------------------------------------

struct AnalyticEnvelope {
  double C = 0.0;
  double R = 0.0;
};

/// Least-squares fit of log|u|_{H^s} - log Gamma(s+1) - log|kappa|/2 = log C + s log R.
inline AnalyticEnvelope estimate_envelope(const std::vector<std::pair<int, double>>& seminorms, double area) {
  if (seminorms.size() < 3) throw std::invalid_argument("estimate_envelope: need at least 3 samples");
  if (!(area > 0.0)) throw std::invalid_argument("estimate_envelope: area must be positive");
  for (std::size_t n = 1; n < seminorms.size(); ++n)
    if (seminorms[n].first <= seminorms[n - 1].first)
      throw std::invalid_argument("estimate_envelope: s must be strictly increasing");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(seminorms.size());
  for (auto [s, v] : seminorms) {
    if (!(v > 0.0) || !std::isfinite(v))
      throw std::domain_error("estimate_envelope: non-positive seminorm; input is not fittable");
    const double y = std::log(v) - std::lgamma(s + 1.0) - 0.5 * std::log(area);
    sx += s;
    sy += y;
    sxx += static_cast<double>(s) * s;
    sxy += s * y;
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double intercept = (sy - slope * sx) / n;
  return {std::exp(intercept), std::exp(slope)};
}

}  // namespace hpexp::bounds
