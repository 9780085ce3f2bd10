#include "isagrasp/lp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace isagrasp {

namespace {

/// Tableau rows 0..m-1 hold constraints, row m the reduced costs
/// d_j = c_B B^-1 A_j - c_j; the last column holds the right-hand side (and
/// the objective value in row m).
struct Tableau {
  MatX t;
  std::vector<int> basis;
  int rows() const { return static_cast<int>(basis.size()); }
  int rhs() const { return static_cast<int>(t.cols()) - 1; }

  void pivot(int r, int col) {
    t.row(r) /= t(r, col);
    for (int i = 0; i < t.rows(); ++i) {
      if (i != r && t(i, col) != 0.0) t.row(i) -= t(i, col) * t.row(r);
    }
    basis[r] = col;
  }
};

enum class Outcome { optimal, unbounded, limit };

/// Bland's rule over columns [0, ncols).
Outcome run(Tableau& tab, int ncols, double tol, int& pivots_left) {
  const int m = tab.rows();
  while (true) {
    int enter = -1;
    for (int j = 0; j < ncols; ++j) {
      if (tab.t(m, j) < -tol) {
        enter = j;
        break;
      }
    }
    if (enter < 0) return Outcome::optimal;
    if (pivots_left-- <= 0) return Outcome::limit;
    int leave = -1;
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < m; ++i) {
      const double a = tab.t(i, enter);
      if (a <= tol) continue;
      const double ratio = tab.t(i, tab.rhs()) / a;
      const bool tie = leave >= 0 && std::abs(ratio - best) <= tol;
      if (leave < 0 || ratio < best - tol || (tie && tab.basis[i] < tab.basis[leave])) {
        best = std::min(best, ratio);
        leave = i;
      }
    }
    if (leave < 0) return Outcome::unbounded;
    tab.pivot(leave, enter);
  }
}

}  // namespace

LpResult solve_lp(const MatX& a, const VecX& b, const VecX& c, const LpOptions& opts) {
  const int m = static_cast<int>(a.rows());
  const int n = static_cast<int>(a.cols());
  if (b.size() != m || c.size() != n) throw std::invalid_argument("solve_lp: dimension mismatch");
  if (!a.allFinite() || !b.allFinite() || !c.allFinite()) throw std::invalid_argument("solve_lp: non-finite input");
  const double tol = opts.tol;
  int pivots_left = opts.max_pivots;
  LpResult res;
  res.x = VecX::Zero(n);
  res.dual = VecX::Zero(m);

  // Phase 1: artificials n..n+m-1, rows flipped so that b >= 0.
  Tableau tab;
  tab.t = MatX::Zero(m + 1, n + m + 1);
  tab.basis.resize(m);
  std::vector<int> row_of(m);
  for (int i = 0; i < m; ++i) {
    const double sign = b(i) < 0.0 ? -1.0 : 1.0;
    tab.t.row(i).head(n) = sign * a.row(i);
    tab.t(i, n + i) = 1.0;
    tab.t(i, n + m) = sign * b(i);
    tab.basis[i] = n + i;
    row_of[i] = i;
  }
  // Reduced costs for maximizing -sum(artificials).
  for (int i = 0; i < m; ++i) tab.t.row(m) -= tab.t.row(i);
  for (int i = 0; i < m; ++i) tab.t(m, n + i) = 0.0;

  Outcome o = run(tab, n + m, tol, pivots_left);
  if (o == Outcome::limit) {
    res.status = LpStatus::iteration_limit;
    return res;
  }
  const double scale = 1.0 + b.cwiseAbs().maxCoeff();
  if (-tab.t(m, n + m) > 1e3 * tol * scale) {
    res.status = LpStatus::infeasible;
    return res;
  }

  // Drive remaining artificials out of the basis; rows where that is
  // impossible are redundant and dropped.
  for (int i = tab.rows() - 1; i >= 0; --i) {
    if (tab.basis[i] < n) continue;
    int col = -1;
    for (int j = 0; j < n; ++j) {
      if (std::abs(tab.t(i, j)) > 1e3 * tol) {
        col = j;
        break;
      }
    }
    if (col >= 0) {
      tab.pivot(i, col);
      continue;
    }
    MatX reduced(tab.t.rows() - 1, tab.t.cols());
    reduced << tab.t.topRows(i), tab.t.middleRows(i + 1, tab.t.rows() - i - 1);
    tab.t = std::move(reduced);
    tab.basis.erase(tab.basis.begin() + i);
    row_of.erase(row_of.begin() + i);
  }

  // Phase 2 on the original columns only; artificial columns are dropped.
  const int mr = tab.rows();
  MatX t2(mr + 1, n + 1);
  t2.topLeftCorner(mr, n) = tab.t.topLeftCorner(mr, n);
  t2.topRightCorner(mr, 1) = tab.t.topRightCorner(mr, 1);
  t2.row(mr).setZero();
  t2.row(mr).head(n) = -c.transpose();
  for (int i = 0; i < mr; ++i) t2.row(mr) += c(tab.basis[i]) * t2.row(i);
  tab.t = std::move(t2);

  o = run(tab, n, tol, pivots_left);
  if (o == Outcome::limit) {
    res.status = LpStatus::iteration_limit;
    return res;
  }
  if (o == Outcome::unbounded) {
    res.status = LpStatus::unbounded;
    return res;
  }
  for (int i = 0; i < mr; ++i) res.x(tab.basis[i]) = std::max(0.0, tab.t(i, tab.rhs()));
  res.value = c.dot(res.x);

  // Duals from B^T y = c_B on the kept rows (original signs).
  MatX bmat(mr, mr);
  VecX cb(mr);
  for (int k = 0; k < mr; ++k) {
    cb(k) = c(tab.basis[k]);
    for (int i = 0; i < mr; ++i) bmat(i, k) = a(row_of[i], tab.basis[k]);
  }
  const VecX y = bmat.transpose().fullPivLu().solve(cb);
  for (int i = 0; i < mr; ++i) res.dual(row_of[i]) = y(i);
  res.status = LpStatus::optimal;
  return res;
}

}  // namespace isagrasp
