#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bcr/rng.hpp"

namespace bcr {

/// Thrown when a problem has no constraint-satisfying solution (LP infeasible,
/// initial budget below the minimum achievable cost, ...). Callers that sweep
/// many instances catch this and record the cell as infeasible.
struct infeasible_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Finite constrained MDP <S, A, T, r, c, gamma, mu0, kappa> as dense tables.
/// Immutable after construction by convention; all operations on it are pure.
struct TabularCmdp {
  int n_states = 0;
  int n_actions = 0;
  std::vector<double> transition;    // (s*A + a)*S + s2
  std::vector<double> reward;        // s*A + a
  std::vector<double> cost;          // s*A + a, nonnegative
  double gamma = 0.0;                // in [0, 1)
  std::vector<double> initial_dist;  // s
  double cost_threshold = 0.0;       // kappa, in [0, delta_max]
  // Explicit self-loop terminal states with zero reward and cost; empty means
  // none are flagged. Rollouts stop early only at flagged states.
  std::vector<std::uint8_t> absorbing;

  double t(int s, int a, int s2) const {
    return transition[(static_cast<std::size_t>(s) * n_actions + a) * n_states + s2];
  }
  double r(int s, int a) const { return reward[static_cast<std::size_t>(s) * n_actions + a]; }
  double c(int s, int a) const { return cost[static_cast<std::size_t>(s) * n_actions + a]; }
  bool is_absorbing(int s) const {
    return !absorbing.empty() && absorbing[static_cast<std::size_t>(s)] != 0;
  }

  double max_cost() const {
    double m = 0.0;
    for (double x : cost) m = std::max(m, x);
    return m;
  }
  /// Largest meaningful budget c_max / (1 - gamma); any budget at or above it
  /// makes every state and action feasible.
  double delta_max() const { return max_cost() / (1.0 - gamma); }

  /// Copy with a different cost threshold; dynamics and signals are shared
  /// structure, so this is how a sweep varies kappa over one environment.
  TabularCmdp with_cost_threshold(double kappa) const {
    TabularCmdp m = *this;
    m.cost_threshold = kappa;
    return m;
  }
};

struct ValidationReport {
  std::vector<std::string> issues;
  bool ok() const { return issues.empty(); }
  std::string to_string() const {
    if (ok()) return "pass";
    std::ostringstream os;
    for (const auto& line : issues) os << line << '\n';
    return os.str();
  }
};

/// Checks every structural invariant of the CMDP and reports all violations
/// with indices instead of stopping at the first.
inline ValidationReport validate_cmdp(const TabularCmdp& m) {
  ValidationReport rep;
  auto fail = [&rep](const std::string& s) { rep.issues.push_back(s); };

  if (m.n_states <= 0) fail("n_states must be positive");
  if (m.n_actions <= 0) fail("n_actions must be positive");
  if (!rep.ok()) return rep;

  const std::size_t sa = static_cast<std::size_t>(m.n_states) * m.n_actions;
  if (m.transition.size() != sa * m.n_states)
    fail("transition table has wrong size");
  if (m.reward.size() != sa) fail("reward table has wrong size");
  if (m.cost.size() != sa) fail("cost table has wrong size");
  if (m.initial_dist.size() != static_cast<std::size_t>(m.n_states))
    fail("initial_dist has wrong size");
  if (!m.absorbing.empty() &&
      m.absorbing.size() != static_cast<std::size_t>(m.n_states))
    fail("absorbing flags have wrong size");
  if (!rep.ok()) return rep;

  constexpr double kTol = 1e-9;
  for (int s = 0; s < m.n_states; ++s) {
    for (int a = 0; a < m.n_actions; ++a) {
      double sum = 0.0;
      for (int s2 = 0; s2 < m.n_states; ++s2) {
        const double p = m.t(s, a, s2);
        if (p < -kTol)
          fail("negative transition probability at (s=" + std::to_string(s) +
               ",a=" + std::to_string(a) + ",s'=" + std::to_string(s2) + ")");
        sum += p;
      }
      if (std::abs(sum - 1.0) > kTol)
        fail("row T(s=" + std::to_string(s) + ",a=" + std::to_string(a) +
             ",.) sums to " + std::to_string(sum));
      if (m.c(s, a) < 0.0)
        fail("negative cost at (s=" + std::to_string(s) +
             ",a=" + std::to_string(a) + ")");
    }
  }

  if (!(m.gamma >= 0.0 && m.gamma < 1.0))
    fail("gamma must lie in [0, 1), got " + std::to_string(m.gamma));

  double mu_sum = 0.0;
  for (int s = 0; s < m.n_states; ++s) {
    if (m.initial_dist[s] < -kTol)
      fail("negative initial probability at s=" + std::to_string(s));
    mu_sum += m.initial_dist[s];
  }
  if (std::abs(mu_sum - 1.0) > kTol)
    fail("initial_dist sums to " + std::to_string(mu_sum));

  if (m.gamma >= 0.0 && m.gamma < 1.0) {
    const double dmax = m.delta_max();
    if (m.cost_threshold < 0.0 || m.cost_threshold > dmax + kTol)
      fail("cost_threshold " + std::to_string(m.cost_threshold) +
           " outside [0, delta_max=" + std::to_string(dmax) + "]");
  }

  for (int s = 0; s < m.n_states && !m.absorbing.empty(); ++s) {
    if (!m.is_absorbing(s)) continue;
    for (int a = 0; a < m.n_actions; ++a) {
      if (std::abs(m.t(s, a, s) - 1.0) > kTol || m.r(s, a) != 0.0 || m.c(s, a) != 0.0)
        fail("absorbing state s=" + std::to_string(s) +
             " is not a zero-reward zero-cost self-loop under a=" + std::to_string(a));
    }
  }
  return rep;
}

/// Samples s' ~ T(.|s,a). Deterministic given the generator state.
inline int sample_next(const TabularCmdp& m, int s, int a, Rng& rng) {
  if (s < 0 || s >= m.n_states) throw std::out_of_range("sample_next: state out of range");
  if (a < 0 || a >= m.n_actions) throw std::out_of_range("sample_next: action out of range");
  const std::size_t off = (static_cast<std::size_t>(s) * m.n_actions + a) * m.n_states;
  return rng.sample({m.transition.data() + off, static_cast<std::size_t>(m.n_states)});
}

struct TrajectoryStep {
  int state = 0;
  int action = 0;
  double reward = 0.0;
  double cost = 0.0;
  int next_state = 0;
};

/// One episode: the visited steps plus running discounted sums. The sums are
/// recomputable from the steps within 1e-9.
struct Trajectory {
  std::vector<TrajectoryStep> steps;
  double discounted_reward = 0.0;
  double discounted_cost = 0.0;
};

/// Policy queried during rollouts: (state, step index) -> action distribution.
using PolicyFn = std::function<std::vector<double>(int state, int step)>;

/// Simulates up to `horizon` steps, stopping early only at flagged absorbing
/// states. Throws if the policy returns an invalid distribution.
inline Trajectory rollout(const TabularCmdp& m, const PolicyFn& policy, int horizon,
                          Rng& rng) {
  if (horizon < 1) throw std::invalid_argument("rollout: horizon must be >= 1");
  Trajectory traj;
  int s = rng.sample(m.initial_dist);
  double disc = 1.0;
  for (int t = 0; t < horizon; ++t) {
    if (m.is_absorbing(s)) break;
    std::vector<double> dist = policy(s, t);
    if (static_cast<int>(dist.size()) != m.n_actions)
      throw std::invalid_argument("rollout: policy distribution has wrong arity");
    double mass = 0.0;
    for (double p : dist) {
      if (p < 0.0) throw std::invalid_argument("rollout: negative action probability");
      mass += p;
    }
    if (std::abs(mass - 1.0) > 1e-6)
      throw std::invalid_argument("rollout: action distribution sums to " + std::to_string(mass));
    const int a = rng.sample(dist);
    const int s2 = sample_next(m, s, a, rng);
    traj.steps.push_back({s, a, m.r(s, a), m.c(s, a), s2});
    traj.discounted_reward += disc * m.r(s, a);
    traj.discounted_cost += disc * m.c(s, a);
    disc *= m.gamma;
    s = s2;
  }
  return traj;
}

}  // namespace bcr
