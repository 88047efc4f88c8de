#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace bcr {

/// Dense two-phase primal simplex for small LPs in standard form:
///
///   minimize c.x  subject to  A x = b,  x >= 0.
///
/// Pivot selection follows Bland's rule throughout (lowest eligible index,
/// lowest basic variable on ratio ties), so degenerate problems terminate.
/// Sized for the occupancy-measure LPs this library solves (tens of rows);
/// everything is kept as an explicit tableau.
class SimplexSolver {
 public:
  enum class Status { optimal, infeasible };

  struct Result {
    Status status = Status::infeasible;
    double objective = 0.0;
    std::vector<double> x;
  };

  /// a is row-major m x n, b has length m (flipped to be nonnegative
  /// internally), c has length n.
  static Result solve(std::vector<double> a, std::vector<double> b, std::vector<double> c,
                      int m, int n) {
    constexpr double kTol = 1e-9;
    for (int i = 0; i < m; ++i) {
      if (b[i] < 0.0) {
        b[i] = -b[i];
        for (int j = 0; j < n; ++j) a[static_cast<std::size_t>(i) * n + j] *= -1.0;
      }
    }

    // Tableau over n original + m artificial columns plus the rhs.
    const int cols = n + m;
    std::vector<double> t(static_cast<std::size_t>(m) * (cols + 1), 0.0);
    auto at = [&t, cols](int i, int j) -> double& {
      return t[static_cast<std::size_t>(i) * (cols + 1) + j];
    };
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) at(i, j) = a[static_cast<std::size_t>(i) * n + j];
      at(i, n + i) = 1.0;
      at(i, cols) = b[i];
    }
    std::vector<int> basis(m);
    for (int i = 0; i < m; ++i) basis[i] = n + i;

    std::vector<double> phase1_cost(cols, 0.0);
    for (int j = n; j < cols; ++j) phase1_cost[j] = 1.0;
    int active_rows = m;
    run_phase(t, basis, phase1_cost, active_rows, cols, cols, kTol);

    double phase1_obj = 0.0;
    for (int i = 0; i < active_rows; ++i)
      if (basis[i] >= n) phase1_obj += at(i, cols);
    if (phase1_obj > 1e-7) return {Status::infeasible, 0.0, {}};

    // Pivot zero-level artificials out of the basis; rows where no original
    // column can enter are redundant and get dropped.
    for (int i = 0; i < active_rows;) {
      if (basis[i] < n) {
        ++i;
        continue;
      }
      int enter = -1;
      for (int j = 0; j < n; ++j) {
        if (std::abs(at(i, j)) > kTol) {
          enter = j;
          break;
        }
      }
      if (enter >= 0) {
        pivot(t, basis, i, enter, active_rows, cols);
        ++i;
      } else {
        --active_rows;
        for (int j = 0; j <= cols; ++j) at(i, j) = at(active_rows, j);
        basis[i] = basis[active_rows];
      }
    }

    std::vector<double> phase2_cost(cols, 0.0);
    for (int j = 0; j < n; ++j) phase2_cost[j] = c[j];
    run_phase(t, basis, phase2_cost, active_rows, n, cols, kTol);

    Result res;
    res.status = Status::optimal;
    res.x.assign(n, 0.0);
    for (int i = 0; i < active_rows; ++i)
      if (basis[i] < n) res.x[basis[i]] = at(i, cols);
    res.objective = 0.0;
    for (int j = 0; j < n; ++j) res.objective += c[j] * res.x[j];
    return res;
  }

 private:
  static void pivot(std::vector<double>& t, std::vector<int>& basis, int row, int col,
                    int m, int cols) {
    auto at = [&t, cols](int i, int j) -> double& {
      return t[static_cast<std::size_t>(i) * (cols + 1) + j];
    };
    const double piv = at(row, col);
    for (int j = 0; j <= cols; ++j) at(row, j) /= piv;
    for (int i = 0; i < m; ++i) {
      if (i == row) continue;
      const double f = at(i, col);
      if (f == 0.0) continue;
      for (int j = 0; j <= cols; ++j) at(i, j) -= f * at(row, j);
    }
    basis[row] = col;
  }

  /// Runs simplex iterations over columns [0, usable_cols) with the given
  /// objective until no reduced cost is negative.
  static void run_phase(std::vector<double>& t, std::vector<int>& basis,
                        const std::vector<double>& cost, int m, int usable_cols,
                        int cols, double tol) {
    auto at = [&t, cols](int i, int j) -> double& {
      return t[static_cast<std::size_t>(i) * (cols + 1) + j];
    };
    while (true) {
      // reduced cost r_j = c_j - c_B . column_j, entering by Bland's rule
      int enter = -1;
      for (int j = 0; j < usable_cols && enter < 0; ++j) {
        double r = cost[j];
        for (int i = 0; i < m; ++i) r -= cost[basis[i]] * at(i, j);
        if (r < -tol) enter = j;
      }
      if (enter < 0) return;

      int leave = -1;
      double best_ratio = std::numeric_limits<double>::infinity();
      for (int i = 0; i < m; ++i) {
        if (at(i, enter) > tol) {
          const double ratio = at(i, cols) / at(i, enter);
          if (ratio < best_ratio - tol ||
              (ratio < best_ratio + tol && (leave < 0 || basis[i] < basis[leave]))) {
            best_ratio = ratio;
            leave = i;
          }
        }
      }
      if (leave < 0)
        throw std::runtime_error("SimplexSolver: objective unbounded below");
      pivot(t, basis, leave, enter, m, cols);
    }
  }
};

}  // namespace bcr
