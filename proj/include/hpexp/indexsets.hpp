// Multi-indices and the Q_p / P_p / S_p index families in two and three
// dimensions, with degree-of-freedom counts and the serendipity entity layout.
#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <compare>
#include <numeric>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hpexp {

/// d-tuple of non-negative degrees, d <= 3.
class MultiIndex {
 public:
  MultiIndex() = default;
  MultiIndex(std::initializer_list<int> entries) : dim_(static_cast<int>(entries.size())) {
    if (dim_ > 3) throw std::invalid_argument("MultiIndex: at most three entries");
    std::copy(entries.begin(), entries.end(), e_.begin());
  }
  explicit MultiIndex(int dim) : dim_(dim) {}

  [[nodiscard]] int dim() const { return dim_; }
  int& operator[](int k) { return e_[k]; }
  int operator[](int k) const { return e_[k]; }

  [[nodiscard]] int total() const { return std::accumulate(e_.begin(), e_.begin() + dim_, 0); }
  [[nodiscard]] int max() const { return dim_ == 0 ? 0 : *std::max_element(e_.begin(), e_.begin() + dim_); }

  /// Entrywise i >= a.
  [[nodiscard]] bool geq(const MultiIndex& a) const {
    for (int k = 0; k < dim_; ++k)
      if (e_[k] < a.e_[k]) return false;
    return true;
  }

  /// Sum of the entries that exceed one (the "superlinear" degree).
  [[nodiscard]] int superlinear_degree() const {
    int s = 0;
    for (int k = 0; k < dim_; ++k)
      if (e_[k] >= 2) s += e_[k];
    return s;
  }

  friend bool operator==(const MultiIndex&, const MultiIndex&) = default;

  [[nodiscard]] std::string str() const {
    std::string s = "(";
    for (int k = 0; k < dim_; ++k) s += (k ? "," : "") + std::to_string(e_[k]);
    return s + ")";
  }

 private:
  int dim_ = 0;
  std::array<int, 3> e_{0, 0, 0};
};

enum class Family { Q, P, S };

inline std::string_view to_string(Family f) {
  switch (f) {
    case Family::Q: return "Q";
    case Family::P: return "P";
    case Family::S: return "S";
  }
  return "?";
}

inline Family family_from_string(std::string_view s) {
  if (s == "Q" || s == "q") return Family::Q;
  if (s == "P" || s == "p") return Family::P;
  if (s == "S" || s == "s") return Family::S;
  throw std::invalid_argument("unknown basis family '" + std::string(s) + "'");
}

struct BasisSpec {
  int dim = 2;
  int degree = 1;
  Family family = Family::Q;

  void validate() const {
    if (dim != 2 && dim != 3) throw std::invalid_argument("BasisSpec: dim must be 2 or 3");
    if (degree < 0) throw std::invalid_argument("BasisSpec: degree must be >= 0");
    if (family == Family::S && degree < 1) throw std::invalid_argument("BasisSpec: family S requires p >= 1");
  }
};

/// Entity decomposition of the hierarchical serendipity element. The 1D index
/// j >= 1 stands for psi_j; interior/face sets list psi-index tuples.
struct SerendipityLayout {
  int dim = 2;
  int degree = 1;
  int vertex_count = 0;
  int edge_count = 0;
  int edge_mode_count = 0;  // per edge
  int face_count = 0;
  std::vector<MultiIndex> face_modes;  // per face, psi-index pairs (3D only)
  std::vector<MultiIndex> interior_modes;

  [[nodiscard]] long long total() const {
    return vertex_count + static_cast<long long>(edge_count) * edge_mode_count +
           static_cast<long long>(face_count) * static_cast<long long>(face_modes.size()) +
           static_cast<long long>(interior_modes.size());
  }
};

namespace indexsets {

inline long long binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  long long r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

/// Membership of a Legendre mode in the family's span. For S the test is the
/// superlinear degree, which reduces to |i| <= p or i in {(p,1),(1,p)} in 2D.
inline bool contains(const BasisSpec& spec, const MultiIndex& i) {
  if (i.dim() != spec.dim) throw std::invalid_argument("contains: dimension mismatch");
  switch (spec.family) {
    case Family::Q: return i.max() <= spec.degree;
    case Family::P: return i.total() <= spec.degree;
    case Family::S: return i.superlinear_degree() <= spec.degree;
  }
  return false;
}

inline long long dof_count(const BasisSpec& spec) {
  spec.validate();
  const int p = spec.degree, d = spec.dim;
  switch (spec.family) {
    case Family::Q: {
      long long r = 1;
      for (int k = 0; k < d; ++k) r *= (p + 1);
      return r;
    }
    case Family::P: return binomial(p + d, d);
    case Family::S: {
      if (d == 2) {
        const long long interior = p >= 4 ? static_cast<long long>(p - 2) * (p - 3) / 2 : 0;
        return 4 + 4LL * (p - 1) + interior;
      }
      const long long edges = p >= 2 ? 12LL * (p - 1) : 0;
      const long long faces = p >= 4 ? 6LL * (p - 2) * (p - 3) / 2 : 0;
      const long long interior = p >= 6 ? static_cast<long long>(p - 3) * (p - 4) * (p - 5) / 6 : 0;
      return 8 + edges + faces + interior;
    }
  }
  return 0;
}

/// psi-index tuples with every entry >= 1 and total <= max_total.
inline std::vector<MultiIndex> bubble_indices(int dim, int max_total) {
  std::vector<MultiIndex> out;
  if (dim == 2) {
    for (int t = 2; t <= max_total; ++t)
      for (int a = t - 1; a >= 1; --a) out.push_back(MultiIndex{a, t - a});
  } else {
    for (int t = 3; t <= max_total; ++t)
      for (int a = t - 2; a >= 1; --a)
        for (int b = t - a - 1; b >= 1; --b) out.push_back(MultiIndex{a, b, t - a - b});
  }
  return out;
}

inline SerendipityLayout serendipity_layout(int dim, int p) {
  if (dim != 2 && dim != 3) throw std::invalid_argument("serendipity_layout: dim must be 2 or 3");
  if (p < 1) throw std::invalid_argument("serendipity_layout: p must be >= 1");
  SerendipityLayout l;
  l.dim = dim;
  l.degree = p;
  l.vertex_count = dim == 2 ? 4 : 8;
  l.edge_count = dim == 2 ? 4 : 12;
  l.edge_mode_count = p - 1;
  if (dim == 2) {
    l.interior_modes = bubble_indices(2, p - 2);
  } else {
    l.face_count = 6;
    l.face_modes = bubble_indices(2, p - 2);
    l.interior_modes = bubble_indices(3, p - 3);
  }
  return l;
}

/// Graded-lexicographic enumeration: by total degree, then first entry descending.
inline std::vector<MultiIndex> enumerate_modes(const BasisSpec& spec) {
  spec.validate();
  if (spec.family == Family::S && spec.dim == 3)
    throw std::invalid_argument("enumerate_modes: 3D serendipity has no monomial enumeration; use serendipity_layout");
  const int p = spec.degree;
  const int max_total = spec.family == Family::P ? p : (spec.family == Family::Q ? spec.dim * p : p + 1);
  std::vector<MultiIndex> out;
  for (int t = 0; t <= max_total; ++t) {
    if (spec.dim == 2) {
      for (int a = t; a >= 0; --a) {
        MultiIndex i{a, t - a};
        if (contains(spec, i)) out.push_back(i);
      }
    } else {
      for (int a = t; a >= 0; --a)
        for (int b = t - a; b >= 0; --b) {
          MultiIndex i{a, b, t - a - b};
          if (contains(spec, i)) out.push_back(i);
        }
    }
  }
  return out;
}

}  // namespace indexsets
}  // namespace hpexp
