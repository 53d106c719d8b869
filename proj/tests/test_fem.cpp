#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "hpexp/fem.hpp"

using namespace hpexp;
using namespace hpexp::fem;

namespace {

struct Census {
  int vertices = 0, edges = 0, faces = 0, elements = 0;
};

// Entity census from vertex ids alone: edges join vertices differing in one
// local bit, faces are the quadruples with one bit fixed.
Census census(const Mesh& m) {
  std::set<std::array<int, 2>> edges;
  std::set<std::array<int, 4>> faces;
  std::set<int> verts;
  const int nv = m.local_vertex_count();
  for (const auto& el : m.elements) {
    for (int v = 0; v < nv; ++v) {
      verts.insert(el.vertices[v]);
      for (int k = 0; k < m.dim; ++k)
        if (!((v >> k) & 1)) {
          int a = el.vertices[v], b = el.vertices[v | (1 << k)];
          edges.insert({std::min(a, b), std::max(a, b)});
        }
    }
    if (m.dim == 3)
      for (int k = 0; k < 3; ++k)
        for (int side = 0; side < 2; ++side) {
          std::array<int, 4> f{};
          int n = 0;
          for (int v = 0; v < 8; ++v)
            if (((v >> k) & 1) == side) f[n++] = el.vertices[v];
          std::sort(f.begin(), f.end());
          faces.insert(f);
        }
  }
  return {static_cast<int>(verts.size()), static_cast<int>(edges.size()), static_cast<int>(faces.size()),
          m.element_count()};
}

long long expected_dofs(const Mesh& m, int p, Family f) {
  const Census c = census(m);
  if (f == Family::Q) {
    const long long b = p - 1;
    return c.vertices + c.edges * b + c.faces * b * b + static_cast<long long>(c.elements) * (m.dim == 2 ? b * b : b * b * b);
  }
  const auto l = indexsets::serendipity_layout(m.dim, p);
  long long n = c.vertices + static_cast<long long>(c.edges) * (p - 1);
  if (m.dim == 3) n += static_cast<long long>(c.faces) * l.face_modes.size();
  return n + static_cast<long long>(c.elements) * l.interior_modes.size();
}

AssembledSystem assemble(const Mesh& m, const DofMap& dm, const PointFunction& f, const PointFunction& g) {
  return assemble_poisson(m, dm, f, g);
}

}  // namespace

TEST(Mesh, UniformCounts) {
  EXPECT_EQ(mesh::unit_uniform(2, 8).element_count(), 64);
  EXPECT_EQ(mesh::unit_uniform(3, 4).element_count(), 64);
  const auto one = mesh::uniform(2, 1, {-1, -1, 0}, {1, 1, 0});
  ASSERT_EQ(one.element_count(), 1);
  EXPECT_DOUBLE_EQ(one.elements[0].extent[0], 2.0);
  EXPECT_DOUBLE_EQ(one.measure(), 4.0);
  EXPECT_THROW(mesh::unit_uniform(2, 0), std::invalid_argument);
}

TEST(Mesh, LShape) {
  const auto m = mesh::lshape();
  EXPECT_EQ(m.element_count(), 12);
  EXPECT_NEAR(m.measure(), 3.0, 1e-14);
  int at_origin = 0;
  for (const auto& el : m.elements) at_origin += el.singular;
  EXPECT_EQ(at_origin, 3);
  const Census c = census(m);
  EXPECT_EQ(c.vertices, 21);
  EXPECT_EQ(c.edges, 32);
}

TEST(DofMap, CountsMatchCensus) {
  const auto l = mesh::lshape();
  const auto u3 = mesh::unit_uniform(3, 2);
  for (int p = 1; p <= 9; ++p) {
    EXPECT_EQ(build_dofmap(l, p, Family::Q).total(), expected_dofs(l, p, Family::Q)) << p;
    EXPECT_EQ(build_dofmap(l, p, Family::S).total(), expected_dofs(l, p, Family::S)) << p;
    EXPECT_EQ(build_dofmap(u3, p, Family::Q).total(), expected_dofs(u3, p, Family::Q)) << p;
    EXPECT_EQ(build_dofmap(u3, p, Family::S).total(), expected_dofs(u3, p, Family::S)) << p;
  }
}

TEST(DofMap, Examples) {
  const auto l = mesh::lshape();
  EXPECT_EQ(build_dofmap(l, 1, Family::Q).total(), census(l).vertices);
  const auto one = mesh::uniform(2, 1, {-1, -1, 0}, {1, 1, 0});
  EXPECT_EQ(build_dofmap(one, 3, Family::S).total(), 12);
  for (int p = 2; p <= 6; ++p) EXPECT_LT(build_dofmap(l, p, Family::S).total(), build_dofmap(l, p, Family::Q).total());
}

TEST(DofMap, SharedEntitiesGetSameGlobalIds) {
  const auto m = mesh::unit_uniform(3, 2);
  const auto dm = build_dofmap(m, 4, Family::Q);
  std::set<int> used;
  for (const auto& ed : dm.elements) used.insert(ed.global.begin(), ed.global.end());
  EXPECT_EQ(static_cast<int>(used.size()), dm.total());
}

TEST(Assembly, PatchTestReproducesMultilinearData) {
  const PointFunction g2 = [](const Point& x) { return 1.0 + 2.0 * x[0] - 3.0 * x[1] + 0.5 * x[0] * x[1]; };
  const PointFunction g3 = [](const Point& x) {
    return 0.3 - x[0] + 2.0 * x[1] * x[2] + x[0] * x[1] * x[2] + 0.25 * x[2];
  };
  const PointFunction zero = [](const Point&) { return 0.0; };
  for (const Mesh& m : {mesh::lshape(), mesh::unit_uniform(2, 3), mesh::unit_uniform(3, 2)}) {
    const auto& g = m.dim == 2 ? g2 : g3;
    for (int p : {1, 2}) {
      const auto dm = build_dofmap(m, p, Family::Q);
      auto sys = assemble(m, dm, zero, g);
      const auto sol = condense_solve(sys);
      for (const auto& el : m.elements) {
        Point x = el.lower;
        for (int k = 0; k < m.dim; ++k) x[k] += 0.37 * el.extent[k];
        EXPECT_NEAR(evaluate(sol, x).value, g(x), 1e-11);
      }
    }
  }
}

TEST(Assembly, PolynomialDirichletDataIsReproduced) {
  const auto one = mesh::uniform(2, 1, {-1, -1, 0}, {1, 1, 0});
  const PointFunction g = [](const Point& x) { return x[0] * x[0] * x[1] - 2.0 * x[1] * x[1] * x[1] + x[0]; };
  const PointFunction f = [](const Point& x) { return -(2.0 * x[1] - 12.0 * x[1]); };
  const auto dm = build_dofmap(one, 3, Family::Q);
  auto sys = assemble(one, dm, f, g);
  const auto sol = condense_solve(sys);
  for (const Point x : {Point{0.2, -0.6, 0}, Point{-0.9, 0.1, 0}, Point{0.5, 0.5, 0}})
    EXPECT_NEAR(evaluate(sol, x).value, g(x), 1e-11);
}

TEST(Assembly, FreeSystemIsSymmetric) {
  const auto pr = sine_problem(2, 3);
  for (Family f : {Family::Q, Family::S}) {
    const auto dm = build_dofmap(pr.mesh, 5, f);
    auto sys = assemble(pr.mesh, dm, pr.source, pr.exact.value);
    std::vector<int> idx;
    const auto [A, b] = free_system(sys, idx);
    const Eigen::MatrixXd L(A);
    EXPECT_EQ(L.triangularView<Eigen::StrictlyUpper>().toDenseMatrix().cwiseAbs().maxCoeff(), 0.0);
    for (const auto& op : sys.operators) EXPECT_LT((op.K - op.K.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    const Eigen::MatrixXd D = L.selfadjointView<Eigen::Lower>();
    EXPECT_EQ(Eigen::LLT<Eigen::MatrixXd>(D).info(), Eigen::Success);
  }
}

TEST(Solve, CondensedMatchesDirect) {
  const auto pr = sine_problem(2, 2);
  for (Family f : {Family::Q, Family::S}) {
    const auto dm = build_dofmap(pr.mesh, 4, f);
    auto sys = assemble(pr.mesh, dm, pr.source, pr.exact.value);
    const auto a = condense_solve(sys);
    const auto b = direct_solve(sys);
    EXPECT_LT((a.u - b.u).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT(galerkin_residual(sys, a), 1e-9);
  }
}

TEST(Solve, GalerkinOrthogonality3D) {
  const auto pr = sine_problem(3, 2);
  const auto dm = build_dofmap(pr.mesh, 6, Family::S);
  auto sys = assemble(pr.mesh, dm, pr.source, pr.exact.value);
  EXPECT_LT(galerkin_residual(sys, condense_solve(sys)), 1e-9);
}

TEST(Solve, EnergyMonotoneForNestedSpaces) {
  const auto pr = sine_problem(2, 2);
  double prev = -INFINITY;
  for (int p = 1; p <= 7; ++p) {
    const auto dm = build_dofmap(pr.mesh, p, Family::Q);
    auto sys = assemble(pr.mesh, dm, pr.source, pr.exact.value);
    const auto sol = condense_solve(sys);
    // u_h minimises 1/2 a(v,v) - (f,v); with zero boundary data the minimum value is -energy
    const double en = energy(sys, sol);
    EXPECT_GE(en, prev - 1e-12);
    prev = en;
  }
}

TEST(Errors, SelfConvergenceOnSine) {
  const auto pr = sine_problem(2, 8);
  const auto r = run_p_sweep(pr, Family::Q, {2, 3});
  ASSERT_TRUE(r[0].ok() && r[1].ok());
  EXPECT_GT(r[0].error("h1_semi") / r[1].error("h1_semi"), 5.0);
}

TEST(Errors, OwnInterpolantHasZeroError) {
  const auto pr = sine_problem(2, 2);
  const auto dm = build_dofmap(pr.mesh, 3, Family::Q);
  const PointFunction g = [](const Point& x) { return x[0] * x[0] * x[1] + x[1]; };
  auto sys = assemble(pr.mesh, dm, [](const Point& x) { return -2.0 * x[1]; }, g);
  const auto sol = condense_solve(sys);
  FunctionOracle o;
  o.value = g;
  o.gradient = [](const Point& x) { return std::array<double, 3>{2 * x[0] * x[1], x[0] * x[0] + 1.0, 0.0}; };
  const auto e = fem_errors(sol, o);
  EXPECT_LT(e.h1_semi, 1e-10);
  EXPECT_LT(e.l2, 1e-10);
}

TEST(Errors, OverkillQuadratureAgrees) {
  const auto pr = sine_problem(2, 2);
  for (int p : {2, 5, 8}) {
    const auto dm = build_dofmap(pr.mesh, p, Family::S);
    auto sys = assemble(pr.mesh, dm, pr.source, pr.exact.value);
    const auto sol = condense_solve(sys);
    ErrorQuadrature over;
    over.plain_points = 3 * p + 12;
    const auto a = fem_errors(sol, pr.exact), b = fem_errors(sol, pr.exact, over);
    EXPECT_NEAR(a.h1_semi, b.h1_semi, 1e-8);
    EXPECT_NEAR(a.l2, b.l2, 1e-8);
  }
}

TEST(Errors, GradedLayersDoublingIsStable) {
  const auto pr = lshape_problem();
  const int p = 10;
  const auto dm = build_dofmap(pr.mesh, p, Family::Q);
  auto sys = assemble(pr.mesh, dm, pr.source, pr.exact.value);
  const auto sol = condense_solve(sys);
  ErrorQuadrature q;
  q.graded_at = Point{0, 0, 0};
  q.graded_layers = 20;
  const double a = fem_errors(sol, pr.exact, q).h1_semi;
  q.graded_layers = 40;
  const double b = fem_errors(sol, pr.exact, q).h1_semi;
  EXPECT_LT(std::abs(a - b) / b, 1e-3);
}

TEST(Sweep, LShapeLowestDegreeMatchesReference) {
  const auto pr = lshape_problem();
  const auto s = run_p_sweep(pr, Family::S, {1, 2});
  const auto q = run_p_sweep(pr, Family::Q, {1, 2});
  ASSERT_TRUE(s[0].ok() && q[0].ok());
  EXPECT_NEAR(s[0].error("h1_semi"), q[0].error("h1_semi"), 1e-12);
  EXPECT_NEAR(s[0].error("h1_semi"), 2.09e-1, 0.02 * 2.09e-1);
  EXPECT_GE(s[1].error("h1_semi"), q[1].error("h1_semi"));
  EXPECT_LT(s[1].dof, q[1].dof);
}

TEST(Sweep, RecordsFailureInsteadOfThrowing) {
  const auto pr = sine_problem(2, 2);
  const auto r = run_p_sweep(pr, Family::S, {0});
  ASSERT_EQ(r.size(), 1u);
  EXPECT_FALSE(r[0].ok());
}

TEST(Problems, ByName) {
  EXPECT_EQ(problem_by_name("lshape", 0).mesh.element_count(), 12);
  EXPECT_EQ(problem_by_name("sine3d", 2).mesh.element_count(), 8);
  EXPECT_THROW(problem_by_name("nope", 2), std::invalid_argument);
}
