// Conforming meshes of axis-aligned boxes: uniform grids and the 12-element L-shape.
#pragma once

#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include "hpexp/expansion.hpp"

namespace hpexp {

enum class FacetKind { interior, boundary };

/// Box element. Local vertex v has bits (v & 1, v >> 1 & 1, v >> 2 & 1) per axis;
/// local facet f = 2 * axis + side.
struct MeshElement {
  Point lower{0.0, 0.0, 0.0};
  Point extent{1.0, 1.0, 1.0};
  std::array<int, 8> vertices{-1, -1, -1, -1, -1, -1, -1, -1};
  std::array<FacetKind, 6> facets{};
  std::array<int, 6> neighbors{-1, -1, -1, -1, -1, -1};
  bool singular = false;  // touches the mesh's singular point

  [[nodiscard]] Point vertex_position(int v) const {
    Point x = lower;
    for (int k = 0; k < 3; ++k)
      if ((v >> k) & 1) x[k] += extent[k];
    return x;
  }
  [[nodiscard]] double measure(int dim) const {
    double m = 1.0;
    for (int k = 0; k < dim; ++k) m *= extent[k];
    return m;
  }
};

struct Mesh {
  int dim = 2;
  std::vector<Point> vertices;
  std::vector<MeshElement> elements;
  std::optional<Point> singular_point;

  [[nodiscard]] int vertex_count() const { return static_cast<int>(vertices.size()); }
  [[nodiscard]] int element_count() const { return static_cast<int>(elements.size()); }
  [[nodiscard]] int local_vertex_count() const { return 1 << dim; }
  [[nodiscard]] double measure() const {
    double m = 0.0;
    for (const auto& e : elements) m += e.measure(dim);
    return m;
  }
};

namespace mesh {

using Cell = std::array<int, 3>;

/// Mesh from integer lattice cells of size `spacing`, anchored at `origin`.
/// Vertex ids increase along x, then y, then z.
inline Mesh from_cells(int dim, const std::vector<Cell>& cells, Point origin, Point spacing) {
  if (dim != 2 && dim != 3) throw std::invalid_argument("mesh: dim must be 2 or 3");
  if (cells.empty()) throw std::invalid_argument("mesh: no cells");
  const auto zyx = [](const Cell& c) { return Cell{c[2], c[1], c[0]}; };
  std::map<Cell, int> cell_index;
  std::map<Cell, int> vertex_index;  // keyed (z, y, x)
  for (std::size_t e = 0; e < cells.size(); ++e) {
    Cell c = cells[e];
    if (dim == 2) c[2] = 0;
    if (!cell_index.emplace(c, static_cast<int>(e)).second) throw std::invalid_argument("mesh: duplicate cell");
    for (int v = 0; v < (1 << dim); ++v) {
      Cell corner{c[0] + (v & 1), c[1] + ((v >> 1) & 1), c[2] + ((v >> 2) & 1)};
      vertex_index.emplace(zyx(corner), 0);
    }
  }
  Mesh m;
  m.dim = dim;
  int next = 0;
  for (auto& [key, id] : vertex_index) {
    id = next++;
    m.vertices.push_back({origin[0] + key[2] * spacing[0], origin[1] + key[1] * spacing[1],
                          dim == 3 ? origin[2] + key[0] * spacing[2] : 0.0});
  }
  m.elements.resize(cells.size());
  for (std::size_t e = 0; e < cells.size(); ++e) {
    Cell c = cells[e];
    if (dim == 2) c[2] = 0;
    MeshElement& el = m.elements[e];
    for (int k = 0; k < 3; ++k) {
      el.lower[k] = k < dim ? origin[k] + c[k] * spacing[k] : 0.0;
      el.extent[k] = k < dim ? spacing[k] : 1.0;
    }
    for (int v = 0; v < (1 << dim); ++v) {
      Cell corner{c[0] + (v & 1), c[1] + ((v >> 1) & 1), c[2] + ((v >> 2) & 1)};
      el.vertices[v] = vertex_index.at(zyx(corner));
    }
    for (int axis = 0; axis < dim; ++axis)
      for (int side = 0; side < 2; ++side) {
        Cell nb = c;
        nb[axis] += side ? 1 : -1;
        const auto it = cell_index.find(nb);
        const int f = 2 * axis + side;
        el.neighbors[f] = it == cell_index.end() ? -1 : it->second;
        el.facets[f] = it == cell_index.end() ? FacetKind::boundary : FacetKind::interior;
      }
  }
  return m;
}

/// n^d congruent boxes filling [lower, upper].
inline Mesh uniform(int dim, int n, Point lower, Point upper) {
  if (n < 1) throw std::invalid_argument("mesh_uniform: n must be >= 1");
  if (dim != 2 && dim != 3) throw std::invalid_argument("mesh_uniform: dim must be 2 or 3");
  Point spacing{};
  for (int k = 0; k < 3; ++k) {
    if (k < dim && !(upper[k] > lower[k])) throw std::invalid_argument("mesh_uniform: empty box");
    spacing[k] = k < dim ? (upper[k] - lower[k]) / n : 1.0;
  }
  std::vector<Cell> cells;
  for (int z = 0; z < (dim == 3 ? n : 1); ++z)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) cells.push_back({x, y, z});
  return from_cells(dim, cells, lower, spacing);
}

inline Mesh unit_uniform(int dim, int n) { return uniform(dim, n, {0.0, 0.0, 0.0}, {1.0, 1.0, 1.0}); }

/// (-1,1)^2 without [0,1) x (-1,0]: 12 squares of side 1/2, singular point at the origin.
inline Mesh lshape() {
  std::vector<Cell> cells;
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x)
      if (!(x >= 2 && y < 2)) cells.push_back({x, y, 0});
  Mesh m = from_cells(2, cells, {-1.0, -1.0, 0.0}, {0.5, 0.5, 1.0});
  m.singular_point = Point{0.0, 0.0, 0.0};
  for (auto& el : m.elements)
    for (int v = 0; v < 4; ++v) {
      const Point x = el.vertex_position(v);
      if (std::abs(x[0]) < 1e-14 && std::abs(x[1]) < 1e-14) el.singular = true;
    }
  return m;
}

}  // namespace mesh
}  // namespace hpexp
