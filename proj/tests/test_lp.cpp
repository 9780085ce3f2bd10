#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "doctest.h"
#include "isagrasp/lp.hpp"

using namespace isagrasp;

namespace {

/// Best objective over all basic feasible solutions, by enumerating every
/// column subset of size m. Returns -inf when none is feasible.
double brute_force_lp(const MatX& a, const VecX& b, const VecX& c) {
  const int m = static_cast<int>(a.rows());
  const int n = static_cast<int>(a.cols());
  double best = -std::numeric_limits<double>::infinity();
  std::vector<int> idx(m);
  for (int i = 0; i < m; ++i) idx[i] = i;
  while (true) {
    MatX bm(m, m);
    for (int k = 0; k < m; ++k) bm.col(k) = a.col(idx[k]);
    Eigen::FullPivLU<MatX> lu(bm);
    if (lu.isInvertible()) {
      const VecX xb = lu.solve(b);
      if (xb.minCoeff() >= -1e-9) {
        double v = 0.0;
        for (int k = 0; k < m; ++k) v += c(idx[k]) * xb(k);
        best = std::max(best, v);
      }
    }
    int k = m - 1;
    while (k >= 0 && idx[k] == n - m + k) --k;
    if (k < 0) break;
    ++idx[k];
    for (int j = k + 1; j < m; ++j) idx[j] = idx[j - 1] + 1;
  }
  return best;
}

}  // namespace

TEST_CASE("textbook LP with slack columns") {
  // max 3x + 5y  s.t. x <= 4, 2y <= 12, 3x + 2y <= 18  ->  36 at (2, 6).
  MatX a(3, 5);
  a << 1, 0, 1, 0, 0,
       0, 2, 0, 1, 0,
       3, 2, 0, 0, 1;
  VecX b(3);
  b << 4, 12, 18;
  VecX c = VecX::Zero(5);
  c << 3, 5, 0, 0, 0;
  const LpResult r = solve_lp(a, b, c);
  REQUIRE(r.status == LpStatus::optimal);
  CHECK(r.value == doctest::Approx(36.0));
  CHECK(r.x(0) == doctest::Approx(2.0));
  CHECK(r.x(1) == doctest::Approx(6.0));
  CHECK(b.dot(r.dual) == doctest::Approx(36.0));
}

TEST_CASE("infeasible and unbounded programs are reported") {
  MatX a(1, 2);
  a << 1, 1;
  VecX b(1);
  b << -1;
  CHECK(solve_lp(a, b, VecX::Ones(2)).status == LpStatus::infeasible);

  MatX u(1, 2);
  u << 1, -1;
  VecX ub(1);
  ub << 1;
  CHECK(solve_lp(u, ub, VecX::Ones(2)).status == LpStatus::unbounded);
}

TEST_CASE("redundant rows are tolerated") {
  MatX a(3, 3);
  a << 1, 1, 1,
       2, 2, 2,
       1, 0, 0;
  VecX b(3);
  b << 1, 2, 0.25;
  VecX c(3);
  c << 0, 1, 2;
  const LpResult r = solve_lp(a, b, c);
  REQUIRE(r.status == LpStatus::optimal);
  CHECK(r.value == doctest::Approx(1.5));
  CHECK((a * r.x - b).norm() < 1e-9);
}

TEST_CASE("random programs match basis enumeration and satisfy duality") {
  std::mt19937_64 rng(41);
  std::normal_distribution<double> g(0.0, 1.0);
  int feasible = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const int m = 1 + static_cast<int>(rng() % 4);
    const int n = m + 1 + static_cast<int>(rng() % 5);
    MatX a(m, n);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) a(i, j) = g(rng);
    // A bounded feasible region: add a row sum(x) = 1.
    a.row(0).setOnes();
    VecX b(m);
    for (int i = 0; i < m; ++i) b(i) = g(rng);
    b(0) = 1.0;
    VecX c(n);
    for (int j = 0; j < n; ++j) c(j) = g(rng);

    const double oracle = brute_force_lp(a, b, c);
    const LpResult r = solve_lp(a, b, c);
    if (!std::isfinite(oracle)) {
      CHECK(r.status == LpStatus::infeasible);
      continue;
    }
    ++feasible;
    REQUIRE(r.status == LpStatus::optimal);
    CHECK(r.value == doctest::Approx(oracle).epsilon(1e-7));
    CHECK((a * r.x - b).norm() < 1e-8);
    CHECK(r.x.minCoeff() >= 0.0);
    // Dual feasibility and zero gap.
    CHECK((a.transpose() * r.dual - c).minCoeff() > -1e-8);
    CHECK(b.dot(r.dual) == doctest::Approx(r.value).epsilon(1e-7));
  }
  CHECK(feasible > 50);
}
