#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "hpexp/bounds.hpp"

using namespace hpexp;
using namespace hpexp::bounds;

TEST(Phi, Examples) {
  for (int d : {1, 2, 3})
    for (int m : {0, 4, 17}) EXPECT_DOUBLE_EQ(phi(d, m, 0), 1.0);
  EXPECT_NEAR(phi(1, 3, 2), 1.0 / 120.0, 1e-15);
  EXPECT_NEAR(phi(2, 4, 2), 1.0 / 36.0, 1e-15);
  EXPECT_THROW(phi(2, 3, 4), std::invalid_argument);
}

TEST(Phi, StrictlyDecreasingInN) {
  for (int d : {1, 2, 3})
    for (int m = 1; m <= 30; ++m)
      for (int n = 0; n < m; ++n) {
        // m = 1 with d > 1 is covered by SmallOrderExceptions
        if (m == 1 && d > 1) continue;
        EXPECT_LT(phi(d, m, n + 1), phi(d, m, n)) << d << " " << m << " " << n;
      }
}

TEST(Phi, SmallOrderExceptions) {
  EXPECT_DOUBLE_EQ(phi(2, 1, 1), phi(2, 1, 0));
  EXPECT_NEAR(phi(3, 1, 1), std::pow(1.0 / std::tgamma(5.0 / 3.0), 3), 1e-13);
  EXPECT_GT(phi(3, 1, 1), phi(3, 1, 0));
}

TEST(Stirling, Examples) {
  EXPECT_TRUE(stirling_envelope_check(1, 10, 3));
  EXPECT_TRUE(stirling_envelope_check(3, 12, 4));
  EXPECT_TRUE(stirling_envelope_check(2, 7, 0));
}

TEST(Stirling, FullGrid) {
  for (int d = 1; d <= 3; ++d)
    for (int m = 1; m <= 30; ++m)
      for (int n = 1; n <= m; ++n) EXPECT_TRUE(stirling_envelope_check(d, m, n)) << d << " " << m << " " << n;
}

TEST(LemmaAudit, OneDimensionalEquality) {
  for (int M = 0; M <= 20; ++M)
    for (int m = 0; m <= M; ++m) {
      const auto r = lemma_audit(1, M, m);
      EXPECT_NEAR(r.lattice_max, std::tgamma(M - m + 1.0) / std::tgamma(M + m + 1.0), 1e-12 * r.lattice_max);
      EXPECT_TRUE(r.holds);
    }
}

TEST(LemmaAudit, TwoTwoTwo) {
  const auto r = lemma_audit(2, 2, 2);
  EXPECT_NEAR(r.lattice_max, 0.25, 1e-15);
  EXPECT_NEAR(r.phi, 0.25, 1e-15);
  EXPECT_EQ(r.argmax_xi, (std::vector<int>{1, 1}));
  EXPECT_EQ(r.argmax_rho, (std::vector<int>{1, 1}));
  EXPECT_TRUE(r.holds);
}

TEST(LemmaAudit, CounterexampleTwoFourTwo) {
  const auto r = lemma_audit(2, 4, 2);
  EXPECT_NEAR(r.lattice_max, 1.0 / 24.0, 1e-15);
  EXPECT_NEAR(r.phi, 1.0 / 36.0, 1e-15);
  EXPECT_FALSE(r.holds);
  // several lattice points attain the maximum, e.g. xi = (1,1), rho = (3,1)
  EXPECT_NEAR(lattice_objective(r.argmax_xi, r.argmax_rho), r.lattice_max, 1e-15);
  EXPECT_NEAR(lattice_objective({1, 1}, {3, 1}), 1.0 / 24.0, 1e-15);
  EXPECT_NEAR(lattice_objective({2, 0}, {2, 2}), 1.0 / 24.0, 1e-15);
}

TEST(LemmaAudit, MatchesBruteForceIn3D) {
  for (int M = 1; M <= 8; ++M)
    for (int m = 0; m <= M; ++m) {
      double best = 0.0;
      for (int r0 = 0; r0 <= M; ++r0)
        for (int r1 = 0; r0 + r1 <= M; ++r1)
          for (int x0 = 0; x0 <= std::min(r0, m); ++x0)
            for (int x1 = 0; x1 <= std::min(r1, m - x0); ++x1) {
              const int r2 = M - r0 - r1, x2 = m - x0 - x1;
              if (x2 > r2) continue;
              best = std::max(best, lattice_objective({x0, x1, x2}, {r0, r1, r2}));
            }
      EXPECT_NEAR(lemma_audit(3, M, m).lattice_max, best, 1e-14 * best);
    }
}

TEST(LemmaAudit, RejectsBadArguments) {
  EXPECT_THROW(lemma_audit(4, 2, 1), std::invalid_argument);
  EXPECT_THROW(lemma_audit(2, 2, 3), std::invalid_argument);
  EXPECT_THROW(lemma_audit(2, kLemmaAuditCap + 1, 1), std::invalid_argument);
}

TEST(AsymptoticOrdering, ThresholdsExist) {
  for (int d = 2; d <= 3; ++d)
    for (int n = 1; n < d; ++n)
      for (double delta : {0.25, 0.5, 0.75}) {
        const auto t = asymptotic_ordering_threshold(d, n, delta);
        ASSERT_TRUE(t.has_value()) << d << " " << n << " " << delta;
        for (int M = *t; M <= 400; M += 37) EXPECT_LE(log_phi(n, M, delta * M), log_phi(d, M, delta * M) + 1e-13);
      }
}

TEST(SharpRatio, Examples) {
  const auto a = sharp_l2_ratio(2, 1, 1, 4);
  EXPECT_NEAR(a.max_ratio, 0.25, 1e-15);
  EXPECT_EQ(a.argmax, (MultiIndex{1, 1}));
  const auto b = sharp_l2_ratio(2, 9, 1, 6);
  EXPECT_NEAR(b.max_ratio, 1.0 / 60.0, 1e-15);
  EXPECT_EQ(b.argmax, (MultiIndex{5, 5}));
  for (int d : {2, 3}) EXPECT_DOUBLE_EQ(sharp_l2_ratio(d, 5, 0).max_ratio, 1.0);
}

TEST(SharpRatio, BoundedByPhiOnGrid) {
  for (int d : {2, 3})
    for (int p = 0; p <= 12; ++p)
      for (int s = 0; s <= std::min(p + 1, 4); ++s)
        EXPECT_LE(sharp_l2_ratio(d, p, s).max_ratio, phi(d, p + 1, s) * (1 + 1e-12)) << d << " " << p << " " << s;
}

TEST(SharpRatio, InnermostShellDominates) {
  for (int d : {2, 3})
    for (int p = 0; p <= 12; ++p)
      for (int s = 0; s <= std::min(p + 1, 4); ++s) {
        const auto inner = sharp_l2_ratio(d, p, s, 0);
        const auto wide = sharp_l2_ratio(d, p, s, 6);
        EXPECT_DOUBLE_EQ(inner.max_ratio, wide.max_ratio);
        EXPECT_EQ(wide.argmax.total(), p + 1);
      }
}

TEST(EpsilonMin, ClosedFormAndGridSearch) {
  EXPECT_NEAR(epsilon_min(1.0), 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(epsilon_min(1e-8), 1.0, 1e-12);
  EXPECT_THROW(epsilon_min(0.0), std::invalid_argument);
  for (double R : {0.3, 1.0, 2.5, 7.0}) {
    double best = INFINITY;
    for (double e = 1e-4; e < 1.0; e += 1e-4) best = std::min(best, f1(R, e));
    const double closed = std::pow(R / (std::sqrt(1 + R * R) + 1), 2);
    EXPECT_NEAR(f1(R, epsilon_min(R)), closed, 1e-12);
    EXPECT_NEAR(best, closed, 1e-6);
  }
}

TEST(SlopePredict, Examples) {
  const auto s = slope_predict(1.0, 1.0, 2);
  EXPECT_NEAR(s.b1, std::log(std::sqrt(2.0) + 1.0), 1e-14);
  EXPECT_NEAR(s.b2, s.b1 - std::log(2.0) / std::sqrt(2.0), 1e-14);
  const auto one = slope_predict(2.0, 0.5, 1);
  EXPECT_DOUBLE_EQ(one.b1, one.b2);
  for (int d : {2, 3}) EXPECT_LT(slope_predict(1.7, 0.25, d).b2, slope_predict(1.7, 0.25, d).b1);
  EXPECT_THROW(slope_predict(1.0, 3.0, 2), std::invalid_argument);
}

TEST(BoundRhs, Examples) {
  EXPECT_NEAR(bound_rhs(BoundKind::L2Q, 5, 0, {{key_h(0), 3.0}}, 2), 9.0, 1e-14);
  const double g = std::tgamma(2.5) / std::tgamma(4.5);
  EXPECT_NEAR(bound_rhs(BoundKind::L2P, 4, 2, {{key_v(2), 1.0}}, 2), g * g, 1e-15);
  EXPECT_NEAR(g * g, 0.01306, 1e-5);
  for (int d : {2, 3}) {
    SeminormTable zero;
    for (const auto& k : required_seminorms(BoundKind::H1S_L2, d, 7, d)) zero[k] = 0.0;
    EXPECT_EQ(bound_rhs(BoundKind::H1S_L2, 7, d, zero, d), 0.0);
  }
}

TEST(BoundRhs, Errors) {
  EXPECT_THROW(bound_rhs(BoundKind::L2P, 4, 2, {}, 2), std::invalid_argument);
  EXPECT_THROW(bound_rhs(BoundKind::L2P, 4, 6, {{key_v(6), 1.0}}, 2), std::invalid_argument);
  EXPECT_THROW(bound_rhs(BoundKind::H1Q_L2, 4, 0, {}, 2), std::invalid_argument);
}

TEST(BoundRhs, TwoDimensionalH1QByHand) {
  const int p = 3, s = 2;
  SeminormTable t{{"D(3,0)", 1.0}, {"D(0,3)", 2.0}, {"D(1,2)", 0.5}, {"D(2,1)", 0.25}};
  const double pp = 12.0;
  const double want = 2.0 / pp * phi(1, 3, 2) * (1.0 + 2.0 * 4.0) + 4.0 / (pp * pp) * phi(1, 3, 1) * 0.25;
  EXPECT_NEAR(bound_rhs(BoundKind::H1Q_L2, p, s, t, 2), want, 1e-15);
}

TEST(EstimateEnvelope, SyntheticRecovery) {
  const double C = 0.7, R = 1.9, area = 4.0;
  std::vector<std::pair<int, double>> data;
  for (int s = 1; s <= 8; ++s) data.emplace_back(s, C * std::pow(R, s) * std::tgamma(s + 1.0) * std::sqrt(area));
  const auto e = estimate_envelope(data, area);
  EXPECT_NEAR(e.C, C, 1e-8);
  EXPECT_NEAR(e.R, R, 1e-8);
}

TEST(EstimateEnvelope, RecoversExactEnvelope) {
  std::vector<std::pair<int, double>> data;
  for (int s = 1; s <= 8; ++s) data.emplace_back(s, 2.0 * 0.7 * std::pow(1.9, s) * std::tgamma(s + 1.0));
  const auto e = estimate_envelope(data, 4.0);
  EXPECT_NEAR(e.C, 0.7, 1e-12);
  EXPECT_NEAR(e.R, 1.9, 1e-12);
}

TEST(EstimateEnvelope, SineSeminorms) {
  // each of the s+1 derivative patterns of sin(pi x) sin(pi y) has L2 norm pi^s
  std::vector<std::pair<int, double>> data;
  for (int s = 1; s <= 8; ++s) data.emplace_back(s, std::pow(std::numbers::pi, s) * std::sqrt(s + 1.0));
  const auto e = estimate_envelope(data, 4.0);
  // fitted radius of this entire function lies in (0, 1)
  EXPECT_GT(e.R, 0.0);
  EXPECT_LT(e.R, 1.0);
}

TEST(EstimateEnvelope, RejectsDegenerateInput) {
  EXPECT_THROW(estimate_envelope({{1, 0.0}, {2, 0.0}, {3, 0.0}}, 4.0), std::domain_error);
  EXPECT_THROW(estimate_envelope({{2, 1.0}, {1, 1.0}, {3, 1.0}}, 4.0), std::invalid_argument);
  EXPECT_THROW(estimate_envelope({{1, 1.0}, {2, 1.0}}, 4.0), std::invalid_argument);
}
