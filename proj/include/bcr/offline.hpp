#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "bcr/budget.hpp"
#include "bcr/cmdp.hpp"
#include "bcr/cost_critic.hpp"
#include "bcr/dataset.hpp"
#include "bcr/rng.hpp"
#include "bcr/solver.hpp"

namespace bcr {

/// Asymmetric squared loss |tau - 1{u<0}| u^2 and its derivative in u.
/// tau < 0.5 biases a regression toward minima, tau > 0.5 toward maxima.
struct ExpectileLoss {
  double loss = 0.0;
  double grad = 0.0;
};

inline ExpectileLoss expectile_loss_grad(double u, double tau) {
  if (!(tau > 0.0 && tau < 1.0))
    throw std::invalid_argument("expectile_loss_grad: tau must lie in (0, 1)");
  const double w = u < 0.0 ? 1.0 - tau : tau;
  return {w * u * u, 2.0 * w * u};
}

/// Hyperparameters of the offline trainer (Algorithm-1 loop in tabular form).
struct TrainConfig {
  double tau_cost = 0.2;    // (0, 0.5]; cost critic regresses toward minima
  double tau_reward = 0.7;  // [0.5, 1); reward critic regresses toward maxima
  double beta = 0.1;        // AWR temperature
  double alpha = 0.05;      // target-table soft-update rate, (0, 1]
  double lr = 0.25;
  long steps = 30000;
  int batch = 256;
  std::uint64_t seed = 0;
  int n_bins = 64;
  BudgetMode budget_mode = BudgetMode::soft;
  // stop cost-critic updates after this many steps (< 0: never), to study a
  // frozen, partially trained safety set
  long freeze_cost_after = -1;
  // optional per-loss learning rates; negative means "use lr"
  double lr_q_cost = -1.0;
  double lr_v_cost = -1.0;
  double lr_q_reward = -1.0;
  double lr_v_reward = -1.0;

  double eff_lr_q_cost() const { return lr_q_cost >= 0 ? lr_q_cost : lr; }
  double eff_lr_v_cost() const { return lr_v_cost >= 0 ? lr_v_cost : lr; }
  double eff_lr_q_reward() const { return lr_q_reward >= 0 ? lr_q_reward : lr; }
  double eff_lr_v_reward() const { return lr_v_reward >= 0 ? lr_v_reward : lr; }
};

inline void validate(const TrainConfig& cfg) {
  if (!(cfg.tau_cost > 0.0 && cfg.tau_cost <= 0.5))
    throw std::invalid_argument("TrainConfig: tau_cost must lie in (0, 0.5]");
  if (!(cfg.tau_reward >= 0.5 && cfg.tau_reward < 1.0))
    throw std::invalid_argument("TrainConfig: tau_reward must lie in [0.5, 1)");
  if (!(cfg.beta > 0.0)) throw std::invalid_argument("TrainConfig: beta must be positive");
  if (!(cfg.alpha > 0.0 && cfg.alpha <= 1.0))
    throw std::invalid_argument("TrainConfig: alpha must lie in (0, 1]");
  if (!(cfg.lr > 0.0)) throw std::invalid_argument("TrainConfig: lr must be positive");
  if (cfg.steps < 0) throw std::invalid_argument("TrainConfig: steps must be >= 0");
  if (cfg.batch < 1) throw std::invalid_argument("TrainConfig: batch must be >= 1");
  if (cfg.n_bins < 2) throw std::invalid_argument("TrainConfig: n_bins must be >= 2");
}

/// Environment facts the offline path is allowed to know.
struct MdpMeta {
  int n_states = 0;
  int n_actions = 0;
  double gamma = 0.0;
  double delta_max = 0.0;
};

inline MdpMeta meta_of(const TabularCmdp& m) {
  return {m.n_states, m.n_actions, m.gamma, m.delta_max()};
}

enum class CriticKind { cost, reward_augmented };

/// Tabular critic trained by per-entry SGD. Cost critics are indexed (s[,a]);
/// reward critics live on the augmented space and are indexed (s, bin[, a]).
/// Unseen cost entries keep their pessimistic delta_max initialization,
/// unseen reward entries stay 0.
struct LearnedCritic {
  CriticKind kind = CriticKind::cost;
  int n_states = 0;
  int n_actions = 0;
  int n_bins = 1;
  double gamma = 0.0;
  double delta_max = 0.0;
  std::vector<double> q;         // (s*n_bins + b)*A + a
  std::vector<double> v;         // s*n_bins + b
  std::vector<double> q_target;  // like q
  std::vector<std::uint8_t> seen_q;
  std::vector<std::uint8_t> seen_v;

  std::size_t vi(int s, int b = 0) const { return static_cast<std::size_t>(s) * n_bins + b; }
  std::size_t qi(int s, int a, int b = 0) const { return vi(s, b) * n_actions + a; }
  double q_at(int s, int a, int b = 0) const { return q[qi(s, a, b)]; }
  double v_at(int s, int b = 0) const { return v[vi(s, b)]; }

  long unseen_q_count() const {
    long n = 0;
    for (auto f : seen_q) n += f == 0;
    return n;
  }
};

inline LearnedCritic make_cost_critic_table(const MdpMeta& meta) {
  LearnedCritic lc;
  lc.kind = CriticKind::cost;
  lc.n_states = meta.n_states;
  lc.n_actions = meta.n_actions;
  lc.n_bins = 1;
  lc.gamma = meta.gamma;
  lc.delta_max = meta.delta_max;
  lc.q.assign(static_cast<std::size_t>(meta.n_states) * meta.n_actions, meta.delta_max);
  lc.v.assign(meta.n_states, meta.delta_max);
  lc.q_target = lc.q;
  lc.seen_q.assign(lc.q.size(), 0);
  lc.seen_v.assign(lc.v.size(), 0);
  return lc;
}

inline LearnedCritic make_reward_critic_table(const MdpMeta& meta, int n_bins) {
  LearnedCritic lc;
  lc.kind = CriticKind::reward_augmented;
  lc.n_states = meta.n_states;
  lc.n_actions = meta.n_actions;
  lc.n_bins = n_bins;
  lc.gamma = meta.gamma;
  lc.delta_max = meta.delta_max;
  lc.q.assign(static_cast<std::size_t>(meta.n_states) * n_bins * meta.n_actions, 0.0);
  lc.v.assign(static_cast<std::size_t>(meta.n_states) * n_bins, 0.0);
  lc.q_target = lc.q;
  lc.seen_q.assign(lc.q.size(), 0);
  lc.seen_v.assign(lc.v.size(), 0);
  return lc;
}

namespace detail {

/// One SGD step of the coupled cost losses on a single record:
/// q regresses to c + gamma v(s'), v to the tau-expectile of q_target(s,.).
inline void cost_critic_step(LearnedCritic& lc, const TransitionRecord& rec,
                             const TrainConfig& cfg) {
  const double target = rec.c + (rec.done ? 0.0 : lc.gamma * lc.v[rec.s_next]);
  const std::size_t qi = lc.qi(rec.s, rec.a);
  lc.q[qi] -= cfg.eff_lr_q_cost() * 2.0 * (lc.q[qi] - target);
  lc.q[qi] = std::clamp(lc.q[qi], 0.0, lc.delta_max);
  lc.seen_q[qi] = 1;

  const double u = lc.q_target[qi] - lc.v[rec.s];
  lc.v[rec.s] += cfg.eff_lr_v_cost() * expectile_loss_grad(u, cfg.tau_cost).grad;
  lc.v[rec.s] = std::clamp(lc.v[rec.s], 0.0, lc.delta_max);
  lc.seen_v[rec.s] = 1;
}

inline void soft_update(std::vector<double>& target, const std::vector<double>& online,
                        double alpha) {
  for (std::size_t i = 0; i < target.size(); ++i)
    target[i] += alpha * (online[i] - target[i]);
}

}  // namespace detail

/// Fits the cost critic alone (step 1 of the offline pipeline). The full
/// trainer interleaves the same updates with the reward stage.
inline LearnedCritic fit_cost_critic(const TransitionDataset& d, const MdpMeta& meta,
                                     const TrainConfig& cfg, Rng& rng) {
  validate(cfg);
  if (d.records.empty()) throw std::invalid_argument("fit_cost_critic: empty dataset");
  d.check();
  LearnedCritic lc = make_cost_critic_table(meta);
  const int n = static_cast<int>(d.records.size());
  for (long step = 0; step < cfg.steps; ++step) {
    for (int k = 0; k < cfg.batch; ++k)
      detail::cost_critic_step(lc, d.records[rng.uniform_int(n)], cfg);
    detail::soft_update(lc.q_target, lc.q, cfg.alpha);
  }
  return lc;
}

/// delta = Q_C(s,a) + u * (delta_max - Q_C(s,a)) for a uniform draw u: the
/// affine map realizing delta ~ U[Q_C(s,a), delta_max].
inline double budget_from_uniform_draw(double q_sa, double delta_max, double u) {
  const double lo = clamp_budget(q_sa, delta_max);
  return lo + u * (delta_max - lo);
}

struct AugmentedSample {
  int s = 0, bin = 0, a = 0;
  double r = 0.0, c = 0.0;
  double delta = 0.0, delta_next = 0.0;  // pre-snap budgets (delta_next clamped)
  int s_next = 0, bin_next = 0;
  bool done = false;
};

/// Draws `batch` augmented transitions from the dataset: every record is
/// eligible (augmentation, not filtering), the budget is uniform on
/// [Q_C(s,a), delta_max], and the next budget follows the chosen update rule
/// evaluated with the supplied critic tables (learned or exact).
inline std::vector<AugmentedSample> augment_batch(
    const TransitionDataset& d, const std::vector<double>& v_cost,
    const std::vector<double>& q_cost, int n_actions, BudgetMode mode, double gamma,
    double delta_max, const BudgetGrid& grid, int batch, Rng& rng) {
  if (d.records.empty()) throw std::invalid_argument("augment_batch: empty dataset");
  std::vector<AugmentedSample> out;
  out.reserve(batch);
  const int n = static_cast<int>(d.records.size());
  for (int k = 0; k < batch; ++k) {
    const TransitionRecord& rec = d.records[rng.uniform_int(n)];
    const double q_sa =
        clamp_budget(q_cost[static_cast<std::size_t>(rec.s) * n_actions + rec.a], delta_max);
    const double delta = budget_from_uniform_draw(q_sa, delta_max, rng.uniform01());
    const double raw = mode == BudgetMode::direct
                           ? direct_budget_update(delta, rec.c, gamma)
                           : soft_budget_update(delta, q_sa, v_cost[rec.s_next], gamma);
    AugmentedSample smp;
    smp.s = rec.s;
    smp.a = rec.a;
    smp.r = rec.r;
    smp.c = rec.c;
    smp.s_next = rec.s_next;
    smp.done = rec.done;
    smp.delta = delta;
    smp.delta_next = clamp_budget(raw, delta_max);
    smp.bin = snap_budget(grid, delta);
    smp.bin_next = snap_budget(grid, smp.delta_next);
    out.push_back(smp);
  }
  return out;
}

inline std::vector<AugmentedSample> augment_batch(const TransitionDataset& d,
                                                  const LearnedCritic& cost_critic,
                                                  BudgetMode mode, const BudgetGrid& grid,
                                                  int batch, Rng& rng) {
  return augment_batch(d, cost_critic.v, cost_critic.q, cost_critic.n_actions, mode,
                       cost_critic.gamma, cost_critic.delta_max, grid, batch, rng);
}

inline std::vector<AugmentedSample> augment_batch(const TransitionDataset& d,
                                                  const CostCritic& cost_critic,
                                                  BudgetMode mode, const BudgetGrid& grid,
                                                  int batch, Rng& rng) {
  return augment_batch(d, cost_critic.v, cost_critic.q, cost_critic.n_actions, mode,
                       cost_critic.gamma, cost_critic.delta_max, grid, batch, rng);
}

namespace detail {

inline void reward_critic_step(LearnedCritic& lc, const AugmentedSample& smp,
                               const TrainConfig& cfg) {
  const double target =
      smp.r + (smp.done ? 0.0 : lc.gamma * lc.v[lc.vi(smp.s_next, smp.bin_next)]);
  const std::size_t qi = lc.qi(smp.s, smp.a, smp.bin);
  lc.q[qi] -= cfg.eff_lr_q_reward() * 2.0 * (lc.q[qi] - target);
  lc.seen_q[qi] = 1;

  const std::size_t vi = lc.vi(smp.s, smp.bin);
  const double u = lc.q_target[qi] - lc.v[vi];
  lc.v[vi] += cfg.eff_lr_v_reward() * expectile_loss_grad(u, cfg.tau_reward).grad;
  lc.seen_v[vi] = 1;
}

}  // namespace detail

/// Fits the augmented reward critic against a fixed cost critic.
inline LearnedCritic fit_reward_critic(const TransitionDataset& d,
                                       const LearnedCritic& cost_critic,
                                       const BudgetGrid& grid, const TrainConfig& cfg,
                                       Rng& rng) {
  validate(cfg);
  if (d.records.empty()) throw std::invalid_argument("fit_reward_critic: empty dataset");
  MdpMeta meta{cost_critic.n_states, cost_critic.n_actions, cost_critic.gamma,
               cost_critic.delta_max};
  LearnedCritic lc = make_reward_critic_table(meta, grid.n_bins);
  for (long step = 0; step < cfg.steps; ++step) {
    const auto batch = augment_batch(d, cost_critic, cfg.budget_mode, grid, cfg.batch, rng);
    for (const auto& smp : batch) detail::reward_critic_step(lc, smp, cfg);
    detail::soft_update(lc.q_target, lc.q, cfg.alpha);
  }
  return lc;
}

/// Closed-form tabular optimum of the AWR objective under a softmax policy
/// class: pi(a | s,bin) proportional to n(s,a) * exp(A(s,bin,a)/beta) over the
/// dataset support, additionally restricted to the learned safe action set
/// {a : Q_C(s,a) <= representative(bin)} whenever that set is non-empty.
/// States never visited fall back to the learned min-cost action.
inline BudgetPolicy extract_awr_policy(const LearnedCritic& reward_critic,
                                       const LearnedCritic& cost_critic,
                                       const std::vector<long>& counts,
                                       const BudgetGrid& grid, const TrainConfig& cfg) {
  const int S = reward_critic.n_states, A = reward_critic.n_actions, B = grid.n_bins;
  BudgetPolicy pol;
  pol.n_states = S;
  pol.n_actions = A;
  pol.grid = grid;
  pol.action_dist.assign(static_cast<std::size_t>(S) * B * A, 0.0);
  pol.fallback.resize(S);

  for (int s = 0; s < S; ++s) {
    int fb = 0;
    for (int a = 1; a < A; ++a)
      if (cost_critic.q_at(s, a) < cost_critic.q_at(s, fb)) fb = a;
    pol.fallback[s] = fb;

    bool visited = false;
    for (int a = 0; a < A; ++a)
      visited = visited || counts[static_cast<std::size_t>(s) * A + a] > 0;

    for (int b = 0; b < B; ++b) {
      const std::size_t row = (static_cast<std::size_t>(s) * B + b) * A;
      if (!visited) {
        pol.action_dist[row + fb] = 1.0;
        continue;
      }
      const double rep = grid.representative(b);
      std::vector<std::uint8_t> support(A, 0);
      bool any_safe = false;
      for (int a = 0; a < A; ++a) {
        if (counts[static_cast<std::size_t>(s) * A + a] == 0) continue;
        if (cost_critic.q_at(s, a) <= rep) {
          support[a] = 1;
          any_safe = true;
        }
      }
      if (!any_safe) {
        // approximation artifact: widen back to the dataset support
        ++pol.relaxed_support_cells;
        for (int a = 0; a < A; ++a)
          support[a] = counts[static_cast<std::size_t>(s) * A + a] > 0 ? 1 : 0;
      }
      double max_adv = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < A; ++a)
        if (support[a])
          max_adv = std::max(max_adv, reward_critic.q_at(s, a, b) -
                                          reward_critic.v_at(s, b));
      double mass = 0.0;
      for (int a = 0; a < A; ++a) {
        if (!support[a]) continue;
        const double adv = reward_critic.q_at(s, a, b) - reward_critic.v_at(s, b);
        const double w = static_cast<double>(counts[static_cast<std::size_t>(s) * A + a]) *
                         std::exp((adv - max_adv) / cfg.beta);
        pol.action_dist[row + a] = w;
        mass += w;
      }
      for (int a = 0; a < A; ++a) pol.action_dist[row + a] /= mass;
    }
  }
  return pol;
}

/// Full offline trainer: cfg.steps interleaved updates in the order of the
/// training loop (cost critic, cost target, budget sampling, reward critic,
/// reward target), then AWR extraction. A pure function of (dataset, config).
inline BudgetPolicy bcrl_train(const TransitionDataset& d, const MdpMeta& meta,
                               const TrainConfig& cfg) {
  validate(cfg);
  d.check();
  if (d.records.empty()) throw std::invalid_argument("bcrl_train: empty dataset");
  Rng rng(cfg.seed);
  const BudgetGrid grid = make_budget_grid(meta.delta_max, cfg.n_bins);
  LearnedCritic cost = make_cost_critic_table(meta);
  LearnedCritic rew = make_reward_critic_table(meta, cfg.n_bins);
  const int n = static_cast<int>(d.records.size());
  std::vector<int> batch_idx(cfg.batch);

  for (long step = 0; step < cfg.steps; ++step) {
    for (int k = 0; k < cfg.batch; ++k) batch_idx[k] = rng.uniform_int(n);

    const bool cost_frozen = cfg.freeze_cost_after >= 0 && step >= cfg.freeze_cost_after;
    if (!cost_frozen) {
      for (int k = 0; k < cfg.batch; ++k)
        detail::cost_critic_step(cost, d.records[batch_idx[k]], cfg);
      detail::soft_update(cost.q_target, cost.q, cfg.alpha);
    }

    for (int k = 0; k < cfg.batch; ++k) {
      const TransitionRecord& rec = d.records[batch_idx[k]];
      const double q_sa = clamp_budget(cost.q_at(rec.s, rec.a), meta.delta_max);
      const double delta = budget_from_uniform_draw(q_sa, meta.delta_max, rng.uniform01());
      const double raw = cfg.budget_mode == BudgetMode::direct
                             ? direct_budget_update(delta, rec.c, meta.gamma)
                             : soft_budget_update(delta, q_sa, cost.v_at(rec.s_next),
                                                  meta.gamma);
      AugmentedSample smp;
      smp.s = rec.s;
      smp.a = rec.a;
      smp.r = rec.r;
      smp.c = rec.c;
      smp.s_next = rec.s_next;
      smp.done = rec.done;
      smp.delta = delta;
      smp.delta_next = clamp_budget(raw, meta.delta_max);
      smp.bin = snap_budget(grid, delta);
      smp.bin_next = snap_budget(grid, smp.delta_next);
      detail::reward_critic_step(rew, smp, cfg);
    }
    detail::soft_update(rew.q_target, rew.q, cfg.alpha);
  }
  return extract_awr_policy(rew, cost, visit_counts(d, meta.n_states, meta.n_actions),
                            grid, cfg);
}

/// Dynamic budget for finite-horizon execution at step t of H:
/// (kappa - cost_so_far)/(1 - gamma) * (1 - gamma^(H-t))/(H-t), clamped to
/// [0, delta_max]. Collapses to kappa - cost_so_far at t = H-1.
inline double eval_budget_schedule(double kappa, double cost_so_far, double gamma, int H,
                                   int t, double delta_max) {
  if (t < 0 || t >= H) throw std::invalid_argument("eval_budget_schedule: need 0 <= t < H");
  const double remaining = std::max(0.0, kappa - cost_so_far);
  const int steps_left = H - t;
  const double value =
      remaining / (1.0 - gamma) * (1.0 - std::pow(gamma, steps_left)) / steps_left;
  return clamp_budget(value, delta_max);
}

/// Runs one episode with the budget-conditioned policy: at every step the
/// dynamic budget is recomputed from the raw cost accumulated so far, snapped
/// to its bin, and the policy queried at (state, bin).
inline Trajectory run_episode_with_budget(const TabularCmdp& m, const BudgetPolicy& pol,
                                          double kappa, int H, Rng& rng) {
  if (H < 1) throw std::invalid_argument("run_episode_with_budget: H must be >= 1");
  const double dmax = pol.grid.delta_max;
  Trajectory traj;
  int s = rng.sample(m.initial_dist);
  double raw_cost = 0.0;
  double disc = 1.0;
  for (int t = 0; t < H; ++t) {
    if (m.is_absorbing(s)) break;
    const double delta = eval_budget_schedule(kappa, raw_cost, m.gamma, H, t, dmax);
    const int b = snap_budget(pol.grid, delta);
    const int a = rng.sample(pol.dist(s, b));
    const int s2 = sample_next(m, s, a, rng);
    traj.steps.push_back({s, a, m.r(s, a), m.c(s, a), s2});
    traj.discounted_reward += disc * m.r(s, a);
    traj.discounted_cost += disc * m.c(s, a);
    raw_cost += m.c(s, a);
    disc *= m.gamma;
    s = s2;
  }
  return traj;
}

}  // namespace bcr
