#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "bcr/cmdp.hpp"
#include "bcr/cost_critic.hpp"

namespace bcr {

enum class BudgetMode { direct, soft };

inline std::string to_string(BudgetMode mode) {
  return mode == BudgetMode::direct ? "direct" : "soft";
}
inline BudgetMode budget_mode_from_string(const std::string& s) {
  if (s == "direct") return BudgetMode::direct;
  if (s == "soft") return BudgetMode::soft;
  throw std::invalid_argument("unknown budget mode: " + s);
}

inline double clamp_budget(double delta, double delta_max) {
  return std::clamp(delta, 0.0, delta_max);
}

/// Direct tracking: the exact remaining discounted budget, g = (delta - c)/gamma.
inline double direct_budget_update(double delta, double cost, double gamma) {
  return (delta - cost) / gamma;
}

/// Soft tracking: g = V_C(s') + (delta - Q_C(s,a))/gamma. Keeps the next
/// augmented state feasible whenever Q_C(s,a) <= delta.
inline double soft_budget_update(double delta, double q_sa, double v_next, double gamma) {
  return v_next + (delta - q_sa) / gamma;
}

/// Budget initialization/update pair (f, g). Holds copies of the tables the
/// chosen mode needs, so the same rule object serves exact critics, learned
/// critics, and dataset-derived costs.
struct BudgetRule {
  BudgetMode mode = BudgetMode::direct;
  int n_states = 0;
  int n_actions = 0;
  double gamma = 0.0;
  double delta_max = 0.0;
  std::vector<double> cost;            // s*A + a; used by the direct update
  std::vector<double> v;               // s; used by the soft update
  std::vector<double> q;               // s*A + a; used by the soft update
  double expected_initial_cost = 0.0;  // E_{s~mu0}[V_C(s)]; used by the soft f

  double c_at(int s, int a) const { return cost[static_cast<std::size_t>(s) * n_actions + a]; }
  double v_at(int s) const { return v[static_cast<std::size_t>(s)]; }
  double q_at(int s, int a) const { return q[static_cast<std::size_t>(s) * n_actions + a]; }
};

inline BudgetRule make_direct_rule(const TabularCmdp& m) {
  BudgetRule rule;
  rule.mode = BudgetMode::direct;
  rule.n_states = m.n_states;
  rule.n_actions = m.n_actions;
  rule.gamma = m.gamma;
  rule.delta_max = m.delta_max();
  rule.cost = m.cost;
  return rule;
}

inline BudgetRule make_soft_rule(const TabularCmdp& m, const CostCritic& cc) {
  BudgetRule rule;
  rule.mode = BudgetMode::soft;
  rule.n_states = m.n_states;
  rule.n_actions = m.n_actions;
  rule.gamma = m.gamma;
  rule.delta_max = cc.delta_max;
  rule.cost = m.cost;
  rule.v = cc.v;
  rule.q = cc.q;
  double e = 0.0;
  for (int s = 0; s < m.n_states; ++s) e += m.initial_dist[s] * cc.v[s];
  rule.expected_initial_cost = e;
  return rule;
}

/// Initial budget f(s0, kappa). Direct: kappa. Soft: V_C(s0) + kappa - E[V_C],
/// which requires the CMDP to be feasible (kappa >= E[V_C]).
inline double init_budget(const BudgetRule& rule, int s0, double kappa) {
  if (kappa < 0.0 || kappa > rule.delta_max + 1e-12)
    throw std::invalid_argument("init_budget: kappa outside [0, delta_max]");
  if (rule.mode == BudgetMode::direct) return kappa;
  if (kappa < rule.expected_initial_cost)
    throw infeasible_error("init_budget: kappa " + std::to_string(kappa) +
                           " below expected initial cost " +
                           std::to_string(rule.expected_initial_cost));
  return rule.v_at(s0) + kappa - rule.expected_initial_cost;
}

/// Budget update g(s, a, s', delta) before clamping; exposed separately
/// because the telescoping and reduction properties are stated pre-clamp.
inline double update_budget_unclamped(const BudgetRule& rule, int s, int a, int s_next,
                                      double delta) {
  if (rule.mode == BudgetMode::direct)
    return direct_budget_update(delta, rule.c_at(s, a), rule.gamma);
  return soft_budget_update(delta, rule.q_at(s, a), rule.v_at(s_next), rule.gamma);
}

inline double update_budget(const BudgetRule& rule, int s, int a, int s_next, double delta) {
  return clamp_budget(update_budget_unclamped(rule, s, a, s_next, delta), rule.delta_max);
}

/// Uniform discretization of [0, delta_max] into n_bins closed intervals.
/// A bin's representative is its lower edge: the representative understates
/// the true budget, so discretization never overstates feasibility.
struct BudgetGrid {
  int n_bins = 0;
  double delta_max = 0.0;
  std::vector<double> edges;  // n_bins + 1, edges[0] = 0, edges[n_bins] = delta_max

  double representative(int bin) const { return edges[static_cast<std::size_t>(bin)]; }
};

inline BudgetGrid make_budget_grid(double delta_max, int n_bins) {
  if (n_bins < 2) throw std::invalid_argument("make_budget_grid: n_bins must be >= 2");
  if (!(delta_max > 0.0))
    throw std::invalid_argument("make_budget_grid: delta_max must be positive");
  BudgetGrid grid;
  grid.n_bins = n_bins;
  grid.delta_max = delta_max;
  grid.edges.resize(n_bins + 1);
  for (int i = 0; i <= n_bins; ++i)
    grid.edges[i] = delta_max * static_cast<double>(i) / n_bins;
  grid.edges.front() = 0.0;
  grid.edges.back() = delta_max;
  return grid;
}

/// Floor snap: clamp delta to [0, delta_max], then take the bin whose
/// representative (lower edge) is the largest one not exceeding delta. A value
/// exactly on an inner edge gets that edge's bin; delta_max, which is only the
/// upper edge of the last bin, resolves down to the last bin.
inline int snap_budget(const BudgetGrid& grid, double delta) {
  const double d = clamp_budget(delta, grid.delta_max);
  auto it = std::upper_bound(grid.edges.begin(), grid.edges.begin() + grid.n_bins, d);
  return static_cast<int>(it - grid.edges.begin()) - 1;
}

/// Budget-augmented MDP over (state, budget-bin) pairs.
///
/// The augmented transition T((s',b') | (s,b), a) = T(s'|s,a) * 1{b' = g-bin}
/// is stored factored: the base probabilities stay in `base` and the indicator
/// is realized by `next_bin`, which maps (s,b,a,s') to the snapped updated
/// budget bin. transition_prob() exposes the product form.
struct AugmentedMdp {
  TabularCmdp base;
  BudgetGrid grid;
  BudgetRule rule;
  std::vector<std::uint8_t> feasible_mask;  // s*B + b         (membership in S_P)
  std::vector<std::uint8_t> action_mask;    // (s*B + b)*A + a (membership in A_P)
  std::vector<std::int32_t> next_bin;       // ((s*B + b)*A + a)*S + s2
  std::vector<double> initial_dist;         // s*B + b         (mu0-bar)
  std::vector<int> fallback_action;         // s, argmin_a Q_C*(s,a)

  int n_aug() const { return base.n_states * grid.n_bins; }
  int aug_index(int s, int b) const { return s * grid.n_bins + b; }

  bool feasible(int s, int b) const {
    return feasible_mask[static_cast<std::size_t>(aug_index(s, b))] != 0;
  }
  bool action_allowed(int s, int b, int a) const {
    return action_mask[static_cast<std::size_t>(aug_index(s, b)) * base.n_actions + a] != 0;
  }
  int bin_after(int s, int b, int a, int s2) const {
    return next_bin[(static_cast<std::size_t>(aug_index(s, b)) * base.n_actions + a) *
                        base.n_states +
                    s2];
  }
  double transition_prob(int s, int b, int a, int s2, int b2) const {
    return bin_after(s, b, a, s2) == b2 ? base.t(s, a, s2) : 0.0;
  }
};

/// Recomputes the augmented initial distribution for a given kappa:
/// mu0bar(s, b) = mu0(s) * 1{b = snap(f(s, kappa))}. Throws infeasible_error
/// when every mu0-support state has a pre-snap initial budget below V_C*(s),
/// i.e. when the underlying CMDP itself is infeasible — discretization alone
/// never triggers the error (representative-infeasible starts fall back to the
/// min-cost policy downstream).
inline std::vector<double> augmented_initial_dist(const TabularCmdp& m,
                                                  const CostCritic& cc,
                                                  const BudgetGrid& grid,
                                                  const BudgetRule& rule, double kappa) {
  std::vector<double> mu(static_cast<std::size_t>(m.n_states) * grid.n_bins, 0.0);
  bool any_feasible_start = false;
  for (int s = 0; s < m.n_states; ++s) {
    if (m.initial_dist[s] <= 0.0) continue;
    const double d0 = init_budget(rule, s, kappa);  // throws for soft infeasibility
    if (d0 >= cc.value(s)) any_feasible_start = true;
    mu[static_cast<std::size_t>(s) * grid.n_bins + snap_budget(grid, d0)] +=
        m.initial_dist[s];
  }
  if (!any_feasible_start)
    throw infeasible_error(
        "augmented_initial_dist: no initial state is feasible at its initial budget "
        "(kappa below the minimum achievable cost from every start)");
  return mu;
}

/// Builds the budget-augmented MDP: masks from the persistent safety sets
/// evaluated at bin representatives, transitions from the budget update rule
/// snapped onto the grid, and the initial distribution from f at kappa =
/// m.cost_threshold.
inline AugmentedMdp build_augmented_mdp(const TabularCmdp& m, const CostCritic& cc,
                                        const BudgetGrid& grid, const BudgetRule& rule) {
  AugmentedMdp am;
  am.base = m;
  am.grid = grid;
  am.rule = rule;

  const int S = m.n_states, A = m.n_actions, B = grid.n_bins;
  am.feasible_mask.assign(static_cast<std::size_t>(S) * B, 0);
  am.action_mask.assign(static_cast<std::size_t>(S) * B * A, 0);
  am.next_bin.assign(static_cast<std::size_t>(S) * B * A * S, 0);
  am.fallback_action.resize(S);
  for (int s = 0; s < S; ++s) am.fallback_action[s] = cc.min_cost_action(s);

  for (int s = 0; s < S; ++s) {
    for (int b = 0; b < B; ++b) {
      const double rep = grid.representative(b);
      const std::size_t sb = static_cast<std::size_t>(s) * B + b;
      am.feasible_mask[sb] = cc.value(s) <= rep ? 1 : 0;
      for (int a = 0; a < A; ++a) {
        am.action_mask[sb * A + a] = cc.action_value(s, a) <= rep ? 1 : 0;
        const std::size_t off = (sb * A + a) * S;
        for (int s2 = 0; s2 < S; ++s2)
          am.next_bin[off + s2] = snap_budget(grid, update_budget(rule, s, a, s2, rep));
      }
      // Lemma 1 pushed through discretization: a state feasible at its
      // representative always keeps its min-cost action unmasked.
      if (am.feasible_mask[sb] && !am.action_mask[sb * A + cc.min_cost_action(s)])
        throw std::logic_error("build_augmented_mdp: feasible augmented state with empty action set");
    }
  }
  am.initial_dist = augmented_initial_dist(m, cc, grid, rule, m.cost_threshold);
  return am;
}

}  // namespace bcr
