#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "bcr/cmdp.hpp"

namespace bcr {

/// Optimal cost critic: V_C*(s) is the least expected discounted future cost
/// achievable from s over all policies, Q_C*(s,a) the analogue after
/// committing to a first action. Gateway for every feasibility query.
struct CostCritic {
  int n_states = 0;
  int n_actions = 0;
  std::vector<double> v;  // s
  std::vector<double> q;  // s*A + a
  double delta_max = 0.0;
  double gamma = 0.0;
  double residual = 0.0;  // final sup-norm Bellman residual

  double value(int s) const { return v[static_cast<std::size_t>(s)]; }
  double action_value(int s, int a) const {
    return q[static_cast<std::size_t>(s) * n_actions + a];
  }
  /// Min-cost action with lowest-index tie-break; the fallback action used by
  /// augmented policies outside the feasible set.
  int min_cost_action(int s) const {
    int best = 0;
    for (int a = 1; a < n_actions; ++a)
      if (action_value(s, a) < action_value(s, best)) best = a;
    return best;
  }
};

/// Min-cost value iteration from v = 0 (a lower bound, so iterates increase
/// monotonically). On return v(s) == min_a q(s,a) holds exactly: the final q
/// is computed from the converged v and v is then reset to its row minima.
inline CostCritic min_cost_value_iteration(const TabularCmdp& m, double tol = 1e-10,
                                           int max_iters = 1000000) {
  if (tol <= 0.0) throw std::invalid_argument("min_cost_value_iteration: tol must be positive");
  CostCritic cc;
  cc.n_states = m.n_states;
  cc.n_actions = m.n_actions;
  cc.gamma = m.gamma;
  cc.delta_max = m.delta_max();
  cc.v.assign(m.n_states, 0.0);
  cc.q.assign(static_cast<std::size_t>(m.n_states) * m.n_actions, 0.0);

  std::vector<double> next(m.n_states, 0.0);
  double residual = std::numeric_limits<double>::infinity();
  int iter = 0;
  for (; iter < max_iters; ++iter) {
    residual = 0.0;
    for (int s = 0; s < m.n_states; ++s) {
      double best = std::numeric_limits<double>::infinity();
      for (int a = 0; a < m.n_actions; ++a) {
        double exp_v = 0.0;
        const std::size_t off = (static_cast<std::size_t>(s) * m.n_actions + a) * m.n_states;
        for (int s2 = 0; s2 < m.n_states; ++s2)
          exp_v += m.transition[off + s2] * cc.v[s2];
        best = std::min(best, m.c(s, a) + m.gamma * exp_v);
      }
      next[s] = best;
      residual = std::max(residual, std::abs(next[s] - cc.v[s]));
    }
    cc.v.swap(next);
    if (residual <= tol) break;
  }
  if (residual > tol)
    throw std::runtime_error("min_cost_value_iteration: no convergence after " +
                             std::to_string(max_iters) +
                             " iterations, residual=" + std::to_string(residual));
  cc.residual = residual;

  for (int s = 0; s < m.n_states; ++s) {
    for (int a = 0; a < m.n_actions; ++a) {
      double exp_v = 0.0;
      const std::size_t off = (static_cast<std::size_t>(s) * m.n_actions + a) * m.n_states;
      for (int s2 = 0; s2 < m.n_states; ++s2)
        exp_v += m.transition[off + s2] * cc.v[s2];
      cc.q[static_cast<std::size_t>(s) * m.n_actions + a] = m.c(s, a) + m.gamma * exp_v;
    }
    // keep v == min_a q bitwise so feasibility of a state and non-emptiness of
    // its safe action set can never disagree
    cc.v[s] = cc.action_value(s, cc.min_cost_action(s));
  }
  return cc;
}

/// Membership in the budget-conditioned persistent safety set S_P(delta):
/// some policy keeps expected discounted future cost within delta.
inline bool is_state_feasible(const CostCritic& cc, int s, double delta) {
  if (delta < 0.0) throw std::invalid_argument("is_state_feasible: delta must be >= 0");
  return cc.value(s) <= delta;
}

/// Persistent safe action set A_P(s, delta) = {a : Q_C*(s,a) <= delta}.
/// Non-empty whenever is_state_feasible(cc, s, delta) holds.
inline std::vector<int> safe_action_set(const CostCritic& cc, int s, double delta) {
  std::vector<int> out;
  for (int a = 0; a < cc.n_actions; ++a)
    if (cc.action_value(s, a) <= delta) out.push_back(a);
  return out;
}

}  // namespace bcr
