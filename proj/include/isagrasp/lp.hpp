#pragma once

#include <Eigen/Dense>

namespace isagrasp {

using MatX = Eigen::MatrixXd;
using VecX = Eigen::VectorXd;

enum class LpStatus { optimal, infeasible, unbounded, iteration_limit };

struct LpResult {
  LpStatus status = LpStatus::infeasible;
  double value = 0.0;
  VecX x;
  /// Equality-constraint multipliers y with A^T y >= c at the optimum.
  /// Rows found redundant during phase 1 get y = 0.
  VecX dual;
};

struct LpOptions {
  double tol = 1e-10;
  int max_pivots = 5000;
};

/// maximize c^T x  subject to  A x = b,  x >= 0.
///
/// Dense two-phase tableau simplex with Bland's rule, meant for the small
/// wrench-space programs of the stability oracle (tens of rows, a few hundred
/// columns at most).
LpResult solve_lp(const MatX& a, const VecX& b, const VecX& c, const LpOptions& opts = {});

}  // namespace isagrasp
