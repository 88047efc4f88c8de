#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "bcr/budget.hpp"
#include "bcr/cmdp.hpp"
#include "bcr/cost_critic.hpp"
#include "bcr/simplex.hpp"

namespace bcr {

enum class Objective { reward, cost };

namespace detail {

/// Sparse view of the base transition rows; the dense tables stay the source
/// of truth, this is just what the sweeping solvers iterate over.
struct SparseRows {
  std::vector<int> offsets;  // (s*A + a) -> start index, plus sentinel
  std::vector<int> succ;
  std::vector<double> prob;

  static SparseRows from(const TabularCmdp& m) {
    SparseRows rows;
    rows.offsets.reserve(static_cast<std::size_t>(m.n_states) * m.n_actions + 1);
    rows.offsets.push_back(0);
    for (int s = 0; s < m.n_states; ++s) {
      for (int a = 0; a < m.n_actions; ++a) {
        for (int s2 = 0; s2 < m.n_states; ++s2) {
          const double p = m.t(s, a, s2);
          if (p != 0.0) {
            rows.succ.push_back(s2);
            rows.prob.push_back(p);
          }
        }
        rows.offsets.push_back(static_cast<int>(rows.succ.size()));
      }
    }
    return rows;
  }
};

/// Solves (I - gamma P) v = u by Gaussian elimination with partial pivoting.
/// Nonsingular for gamma < 1 (rows are substochastic), asserted via the pivot.
inline std::vector<double> solve_linear_system(std::vector<double> mat,
                                               std::vector<double> rhs, int n) {
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int i = col + 1; i < n; ++i)
      if (std::abs(mat[static_cast<std::size_t>(i) * n + col]) >
          std::abs(mat[static_cast<std::size_t>(piv) * n + col]))
        piv = i;
    if (std::abs(mat[static_cast<std::size_t>(piv) * n + col]) < 1e-14)
      throw std::runtime_error("solve_linear_system: singular matrix (gamma >= 1?)");
    if (piv != col) {
      for (int j = 0; j < n; ++j)
        std::swap(mat[static_cast<std::size_t>(piv) * n + j],
                  mat[static_cast<std::size_t>(col) * n + j]);
      std::swap(rhs[piv], rhs[col]);
    }
    const double d = mat[static_cast<std::size_t>(col) * n + col];
    for (int i = col + 1; i < n; ++i) {
      const double f = mat[static_cast<std::size_t>(i) * n + col] / d;
      if (f == 0.0) continue;
      for (int j = col; j < n; ++j)
        mat[static_cast<std::size_t>(i) * n + j] -= f * mat[static_cast<std::size_t>(col) * n + j];
      rhs[i] -= f * rhs[col];
    }
  }
  std::vector<double> v(n);
  for (int i = n - 1; i >= 0; --i) {
    double acc = rhs[i];
    for (int j = i + 1; j < n; ++j) acc -= mat[static_cast<std::size_t>(i) * n + j] * v[j];
    v[i] = acc / mat[static_cast<std::size_t>(i) * n + i];
  }
  return v;
}

}  // namespace detail

/// Reward-maximizing value iteration, the unconstrained baseline.
struct ValueIterationResult {
  std::vector<double> v;  // s
  std::vector<double> q;  // s*A + a
  double residual = 0.0;
  int iterations = 0;
};

inline ValueIterationResult reward_value_iteration(const TabularCmdp& m, double tol = 1e-10,
                                                   int max_iters = 1000000) {
  ValueIterationResult res;
  res.v.assign(m.n_states, 0.0);
  res.q.assign(static_cast<std::size_t>(m.n_states) * m.n_actions, 0.0);
  const auto rows = detail::SparseRows::from(m);
  std::vector<double> next(m.n_states, 0.0);
  double residual = std::numeric_limits<double>::infinity();
  for (res.iterations = 0; res.iterations < max_iters; ++res.iterations) {
    residual = 0.0;
    for (int s = 0; s < m.n_states; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < m.n_actions; ++a) {
        const int row = s * m.n_actions + a;
        double exp_v = 0.0;
        for (int k = rows.offsets[row]; k < rows.offsets[row + 1]; ++k)
          exp_v += rows.prob[k] * res.v[rows.succ[k]];
        best = std::max(best, m.r(s, a) + m.gamma * exp_v);
      }
      next[s] = best;
      residual = std::max(residual, std::abs(next[s] - res.v[s]));
    }
    res.v.swap(next);
    if (residual <= tol) break;
  }
  if (residual > tol)
    throw std::runtime_error("reward_value_iteration: no convergence, residual=" +
                             std::to_string(residual));
  res.residual = residual;
  for (int s = 0; s < m.n_states; ++s) {
    for (int a = 0; a < m.n_actions; ++a) {
      const int row = s * m.n_actions + a;
      double exp_v = 0.0;
      for (int k = rows.offsets[row]; k < rows.offsets[row + 1]; ++k)
        exp_v += rows.prob[k] * res.v[rows.succ[k]];
      res.q[row] = m.r(s, a) + m.gamma * exp_v;
    }
  }
  return res;
}

/// Deterministic policy table (point-mass rows) from a Q table, lowest action
/// index on ties.
inline std::vector<double> greedy_policy_from_q(int n_states, int n_actions,
                                                const std::vector<double>& q) {
  std::vector<double> pol(static_cast<std::size_t>(n_states) * n_actions, 0.0);
  for (int s = 0; s < n_states; ++s) {
    int best = 0;
    for (int a = 1; a < n_actions; ++a)
      if (q[static_cast<std::size_t>(s) * n_actions + a] >
          q[static_cast<std::size_t>(s) * n_actions + best])
        best = a;
    pol[static_cast<std::size_t>(s) * n_actions + best] = 1.0;
  }
  return pol;
}

/// Point-mass policy on the min-cost action of each state.
inline std::vector<double> min_cost_policy(const CostCritic& cc) {
  std::vector<double> pol(static_cast<std::size_t>(cc.n_states) * cc.n_actions, 0.0);
  for (int s = 0; s < cc.n_states; ++s)
    pol[static_cast<std::size_t>(s) * cc.n_actions + cc.min_cost_action(s)] = 1.0;
  return pol;
}

/// Exact J_R or J_C of a stationary policy on the base chain:
/// solves (I - gamma P_pi) v = u_pi, returns mu0 . v.
inline double evaluate_policy_exact(const TabularCmdp& m, const std::vector<double>& policy,
                                    Objective which) {
  const int n = m.n_states;
  std::vector<double> mat(static_cast<std::size_t>(n) * n, 0.0);
  std::vector<double> u(n, 0.0);
  for (int s = 0; s < n; ++s) {
    mat[static_cast<std::size_t>(s) * n + s] = 1.0;
    for (int a = 0; a < m.n_actions; ++a) {
      const double pa = policy[static_cast<std::size_t>(s) * m.n_actions + a];
      if (pa == 0.0) continue;
      u[s] += pa * (which == Objective::reward ? m.r(s, a) : m.c(s, a));
      for (int s2 = 0; s2 < n; ++s2)
        mat[static_cast<std::size_t>(s) * n + s2] -= m.gamma * pa * m.t(s, a, s2);
    }
  }
  const std::vector<double> v = detail::solve_linear_system(std::move(mat), std::move(u), n);
  double j = 0.0;
  for (int s = 0; s < n; ++s) j += m.initial_dist[s] * v[s];
  return j;
}

/// Occupancy-measure LP solution for the CMDP.
struct CmdpSolution {
  SimplexSolver::Status status = SimplexSolver::Status::infeasible;
  double j_reward = 0.0;
  double j_cost = 0.0;
  std::vector<double> occupancy;  // s*A + a
  std::vector<double> policy;     // s*A + a, rows are distributions
};

/// Exact CMDP oracle: maximize sum occ*r subject to the occupancy flow
/// constraints, sum occ*c <= kappa, occ >= 0. The optimal stationary policy is
/// occ(s,.) normalized; states with zero occupancy are unreachable under it
/// and get uniform rows.
inline CmdpSolution solve_cmdp_lp(const TabularCmdp& m) {
  const int S = m.n_states, A = m.n_actions;
  const int n = S * A + 1;  // occupancy variables plus one cost slack
  const int rows = S + 1;

  std::vector<double> a_mat(static_cast<std::size_t>(rows) * n, 0.0);
  std::vector<double> b(rows, 0.0);
  std::vector<double> c_obj(n, 0.0);

  // flow conservation: sum_a occ(s,a) - gamma sum_{s',a'} T(s|s',a') occ(s',a') = mu0(s)
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a)
      a_mat[static_cast<std::size_t>(s) * n + (s * A + a)] += 1.0;
    for (int sp = 0; sp < S; ++sp)
      for (int ap = 0; ap < A; ++ap)
        a_mat[static_cast<std::size_t>(s) * n + (sp * A + ap)] -= m.gamma * m.t(sp, ap, s);
    b[s] = m.initial_dist[s];
  }
  // cost budget with slack
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a)
      a_mat[static_cast<std::size_t>(S) * n + (s * A + a)] = m.c(s, a);
  a_mat[static_cast<std::size_t>(S) * n + (n - 1)] = 1.0;
  b[S] = m.cost_threshold;

  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) c_obj[s * A + a] = -m.r(s, a);  // minimize -reward

  const auto lp = SimplexSolver::solve(std::move(a_mat), std::move(b), std::move(c_obj),
                                       rows, n);
  CmdpSolution sol;
  sol.status = lp.status;
  if (lp.status == SimplexSolver::Status::infeasible) {
    sol.j_reward = std::numeric_limits<double>::quiet_NaN();
    sol.j_cost = std::numeric_limits<double>::quiet_NaN();
    return sol;
  }
  sol.occupancy.assign(lp.x.begin(), lp.x.begin() + static_cast<std::size_t>(S) * A);
  sol.j_reward = 0.0;
  sol.j_cost = 0.0;
  for (int i = 0; i < S * A; ++i) {
    sol.j_reward += sol.occupancy[i] * m.reward[i];
    sol.j_cost += sol.occupancy[i] * m.cost[i];
  }
  sol.policy.assign(static_cast<std::size_t>(S) * A, 0.0);
  for (int s = 0; s < S; ++s) {
    double mass = 0.0;
    for (int a = 0; a < A; ++a) mass += sol.occupancy[static_cast<std::size_t>(s) * A + a];
    for (int a = 0; a < A; ++a)
      sol.policy[static_cast<std::size_t>(s) * A + a] =
          mass > 1e-12 ? sol.occupancy[static_cast<std::size_t>(s) * A + a] / mass
                       : 1.0 / A;
  }
  return sol;
}

/// Mapping from (state, budget-bin) to an action distribution, with a
/// min-cost fallback action per state for representative-infeasible cells.
/// Wherever the feasible mask held at extraction time, the distribution places
/// mass only on unmasked actions.
struct BudgetPolicy {
  int n_states = 0;
  int n_actions = 0;
  BudgetGrid grid;
  std::vector<double> action_dist;  // (s*B + b)*A + a
  std::vector<int> fallback;        // s
  // cells where the learned safe set was empty and extraction widened the
  // support to the dataset's (offline path only; 0 for exact extraction)
  long relaxed_support_cells = 0;

  double prob(int s, int b, int a) const {
    return action_dist[(static_cast<std::size_t>(s) * grid.n_bins + b) * n_actions + a];
  }
  std::span<const double> dist(int s, int b) const {
    return {action_dist.data() +
                (static_cast<std::size_t>(s) * grid.n_bins + b) * n_actions,
            static_cast<std::size_t>(n_actions)};
  }
};

/// Reward value iteration on the augmented MDP. The max ranges only over
/// unmasked actions at feasible (s,bin) states; infeasible states carry the
/// value of the min-cost fallback action, so their rows are still defined and
/// exact policy evaluation accounts for excursions outside the feasible set.
/// Returns the Q table over (s, bin, a).
inline std::vector<double> solve_augmented(const AugmentedMdp& am, double tol = 1e-9,
                                           int max_iters = 1000000) {
  const TabularCmdp& m = am.base;
  const int S = m.n_states, A = m.n_actions, B = am.grid.n_bins;
  const auto rows = detail::SparseRows::from(m);

  const std::vector<int>& fallback = am.fallback_action;
  std::vector<double> value(static_cast<std::size_t>(S) * B, 0.0);
  std::vector<double> next(value.size(), 0.0);
  double residual = std::numeric_limits<double>::infinity();
  int iter = 0;
  auto backup = [&](int s, int b, int a) {
    const int row = s * A + a;
    const std::size_t nb_off =
        (static_cast<std::size_t>(s) * B + b) * A + a;
    double exp_v = 0.0;
    for (int k = rows.offsets[row]; k < rows.offsets[row + 1]; ++k) {
      const int s2 = rows.succ[k];
      const int b2 = am.next_bin[nb_off * S + s2];
      exp_v += rows.prob[k] * value[static_cast<std::size_t>(s2) * B + b2];
    }
    return m.r(s, a) + m.gamma * exp_v;
  };
  for (; iter < max_iters; ++iter) {
    residual = 0.0;
    for (int s = 0; s < S; ++s) {
      for (int b = 0; b < B; ++b) {
        const std::size_t sb = static_cast<std::size_t>(s) * B + b;
        double v;
        if (am.feasible(s, b)) {
          v = -std::numeric_limits<double>::infinity();
          for (int a = 0; a < A; ++a)
            if (am.action_allowed(s, b, a)) v = std::max(v, backup(s, b, a));
        } else {
          v = backup(s, b, fallback[s]);
        }
        next[sb] = v;
        residual = std::max(residual, std::abs(v - value[sb]));
      }
    }
    value.swap(next);
    if (residual <= tol) break;
  }
  if (residual > tol)
    throw std::runtime_error("solve_augmented: no convergence, residual=" +
                             std::to_string(residual));

  std::vector<double> q(static_cast<std::size_t>(S) * B * A, 0.0);
  for (int s = 0; s < S; ++s)
    for (int b = 0; b < B; ++b)
      for (int a = 0; a < A; ++a)
        q[(static_cast<std::size_t>(s) * B + b) * A + a] = backup(s, b, a);
  return q;
}

/// Deterministic policy from the solved augmented Q table: argmax over the
/// unmasked actions at feasible cells (lowest index on ties), argmin_a Q_C*
/// everywhere else.
inline BudgetPolicy extract_policy(const AugmentedMdp& am, const std::vector<double>& q_r,
                                   const CostCritic& cc) {
  const int S = am.base.n_states, A = am.base.n_actions, B = am.grid.n_bins;
  BudgetPolicy pol;
  pol.n_states = S;
  pol.n_actions = A;
  pol.grid = am.grid;
  pol.action_dist.assign(static_cast<std::size_t>(S) * B * A, 0.0);
  pol.fallback.resize(S);
  for (int s = 0; s < S; ++s) {
    pol.fallback[s] = cc.min_cost_action(s);
    if (pol.fallback[s] != am.fallback_action[s])
      throw std::invalid_argument("extract_policy: critic does not match the augmented MDP");
  }

  for (int s = 0; s < S; ++s) {
    for (int b = 0; b < B; ++b) {
      const std::size_t sb = static_cast<std::size_t>(s) * B + b;
      int chosen = -1;
      if (am.feasible(s, b)) {
        for (int a = 0; a < A; ++a) {
          if (!am.action_allowed(s, b, a)) continue;
          if (chosen < 0 || q_r[sb * A + a] > q_r[sb * A + chosen]) chosen = a;
        }
      }
      if (chosen < 0) chosen = pol.fallback[s];
      pol.action_dist[sb * A + chosen] = 1.0;
    }
  }
  return pol;
}

/// Exact per-augmented-state values of a budget policy on the augmented chain,
/// solved iteratively to sup-norm error below ~1e-10 (the chain can be large,
/// but its rows are as sparse as the base rows). Returns v_reward, v_cost.
struct AugmentedPolicyValues {
  std::vector<double> v_reward;
  std::vector<double> v_cost;
};

inline AugmentedPolicyValues evaluate_policy_values(const AugmentedMdp& am,
                                                    const BudgetPolicy& pol) {
  const TabularCmdp& m = am.base;
  const int S = m.n_states, A = m.n_actions, B = am.grid.n_bins;
  const auto rows = detail::SparseRows::from(m);
  const double gamma = m.gamma;

  // u(s,b) and the policy-chain rows are fixed; iterate both objectives in one sweep
  AugmentedPolicyValues out;
  out.v_reward.assign(static_cast<std::size_t>(S) * B, 0.0);
  out.v_cost.assign(static_cast<std::size_t>(S) * B, 0.0);
  std::vector<double> nr(out.v_reward.size()), nc(out.v_cost.size());

  const double stop = 1e-12;
  const int max_iters = 5000000;
  double residual = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < max_iters && residual > stop; ++iter) {
    residual = 0.0;
    for (int s = 0; s < S; ++s) {
      for (int b = 0; b < B; ++b) {
        const std::size_t sb = static_cast<std::size_t>(s) * B + b;
        double vr = 0.0, vc = 0.0;
        for (int a = 0; a < A; ++a) {
          const double pa = pol.action_dist[sb * A + a];
          if (pa == 0.0) continue;
          const int row = s * A + a;
          double er = 0.0, ec = 0.0;
          const std::size_t nb_off = sb * A + a;
          for (int k = rows.offsets[row]; k < rows.offsets[row + 1]; ++k) {
            const int s2 = rows.succ[k];
            const int b2 = am.next_bin[nb_off * S + s2];
            const std::size_t sb2 = static_cast<std::size_t>(s2) * B + b2;
            er += rows.prob[k] * out.v_reward[sb2];
            ec += rows.prob[k] * out.v_cost[sb2];
          }
          vr += pa * (m.r(s, a) + gamma * er);
          vc += pa * (m.c(s, a) + gamma * ec);
        }
        residual = std::max(residual, std::abs(vr - out.v_reward[sb]));
        residual = std::max(residual, std::abs(vc - out.v_cost[sb]));
        nr[sb] = vr;
        nc[sb] = vc;
      }
    }
    out.v_reward.swap(nr);
    out.v_cost.swap(nc);
  }
  return out;
}

/// Exact J under the augmented chain's own initial distribution.
inline double evaluate_policy_exact(const AugmentedMdp& am, const BudgetPolicy& pol,
                                    Objective which) {
  const auto vals = evaluate_policy_values(am, pol);
  const auto& v = which == Objective::reward ? vals.v_reward : vals.v_cost;
  double j = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) j += am.initial_dist[i] * v[i];
  return j;
}

}  // namespace bcr
