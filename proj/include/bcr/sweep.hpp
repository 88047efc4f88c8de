#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bcr/budget.hpp"
#include "bcr/cmdp.hpp"
#include "bcr/cost_critic.hpp"
#include "bcr/gridworld.hpp"
#include "bcr/io.hpp"
#include "bcr/offline.hpp"
#include "bcr/solver.hpp"

namespace bcr {

/// Full experiment description: the (method, p, kappa, seed) product evaluated
/// on one layout.
struct RunConfig {
  std::string layout_path;
  std::string layout_text;  // used when layout_path is empty
  double gamma = 0.99;
  std::vector<double> kappas = {2.0, 5.0, 10.0};
  std::vector<double> ps = {0.7, 0.8, 0.9, 1.0};
  std::vector<std::string> methods = {"lp", "bamdp-soft", "unconstrained"};
  std::vector<std::uint64_t> seeds = {0};
  int bins = 64;
  int horizon = 100;        // evaluation horizon H for the offline method
  long eval_episodes = 10000;
  // reward normalization; auto derives bounds from the sweep itself
  bool auto_normalization = true;
  double r_min = 0.0;
  double r_max = 1.0;
  // offline dataset generation
  double dataset_mix = 0.5;
  long dataset_episodes = 2000;
  int dataset_horizon = 60;
  TrainConfig train;
};

struct SweepRow {
  std::string method;
  double p = 0.0;
  double kappa = 0.0;
  std::uint64_t seed = 0;
  double j_reward = 0.0;
  double j_cost = 0.0;
  double normalized_reward = 0.0;
  double normalized_cost = 0.0;
  std::string status;       // ok | infeasible | error: ...
  std::string provenance;   // exact | monte-carlo
  double j_reward_se = 0.0;
  double j_cost_se = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  bool has_errors() const {
    for (const auto& row : rows)
      if (row.status.rfind("error", 0) == 0) return true;
    return false;
  }
};

/// (value - lo) / (hi - lo), deliberately unclamped: normalized cost above 1
/// is the unsafe-policy indicator.
inline double normalize(double value, double lo, double hi) {
  if (!(hi > lo)) throw std::invalid_argument("normalize: need hi > lo");
  return (value - lo) / (hi - lo);
}

namespace sweep_detail {

struct ExactCell {
  bool ok = false;
  std::string error;
  double j_reward = 0.0;
  double j_cost = 0.0;
};

/// Everything about one (p) that is shared across kappa and methods.
struct EnvAtP {
  TabularCmdp m;  // kappa left at delta_max; cells override
  CostCritic critic;
  double r_max = 0.0;  // unconstrained optimum
  double r_min = 0.0;  // min-cost policy reward
  double j_cost_unconstrained = 0.0;
  double j_reward_unconstrained = 0.0;
};

/// Cached budget-augmented solution; kappa enters only through mu0-bar.
struct BamdpAtP {
  AugmentedMdp am;
  BudgetPolicy policy;
  AugmentedPolicyValues values;
};

inline std::string sanitize_status(std::string s) {
  for (char& ch : s)
    if (ch == ',' || ch == '\n' || ch == '\r' || ch == '"' || ch == '\\') ch = ' ';
  return s;
}

}  // namespace sweep_detail

/// Runs the (method x p x kappa x seed) sweep. Model-based methods are
/// evaluated exactly (linear-system values); the offline method trains per
/// (p, seed) and reports Monte-Carlo means with standard errors. Per-cell
/// failures are recorded in the row status and the sweep continues.
inline SweepResult run_sweep(const RunConfig& cfg) {
  GridLayout layout = parse_layout(
      cfg.layout_path.empty() ? cfg.layout_text : read_file(cfg.layout_path));

  SweepResult result;
  for (std::size_t pi = 0; pi < cfg.ps.size(); ++pi) {
    const double p = cfg.ps[pi];
    layout.p_intended = p;
    sweep_detail::EnvAtP env;
    env.m = build_gridworld(layout, cfg.gamma);
    env.m.cost_threshold = env.m.delta_max();
    env.critic = min_cost_value_iteration(env.m);
    {
      const auto vi = reward_value_iteration(env.m);
      const auto greedy = greedy_policy_from_q(env.m.n_states, env.m.n_actions, vi.q);
      env.j_reward_unconstrained = evaluate_policy_exact(env.m, greedy, Objective::reward);
      env.j_cost_unconstrained = evaluate_policy_exact(env.m, greedy, Objective::cost);
      env.r_max = cfg.auto_normalization ? env.j_reward_unconstrained : cfg.r_max;
      env.r_min = cfg.auto_normalization
                      ? evaluate_policy_exact(env.m, min_cost_policy(env.critic),
                                              Objective::reward)
                      : cfg.r_min;
    }

    std::map<std::string, sweep_detail::BamdpAtP> bamdp_cache;
    std::map<std::uint64_t, BudgetPolicy> offline_cache;

    for (const std::string& method : cfg.methods) {
      for (const double kappa : cfg.kappas) {
        for (const std::uint64_t seed : cfg.seeds) {
          SweepRow row;
          row.method = method;
          row.p = p;
          row.kappa = kappa;
          row.seed = seed;
          row.provenance = method == "offline-bcrl" ? "monte-carlo" : "exact";
          row.j_reward = std::numeric_limits<double>::quiet_NaN();
          row.j_cost = std::numeric_limits<double>::quiet_NaN();
          try {
            const TabularCmdp m_k = env.m.with_cost_threshold(kappa);
            if (method == "unconstrained") {
              row.j_reward = env.j_reward_unconstrained;
              row.j_cost = env.j_cost_unconstrained;
              row.status = "ok";
            } else if (method == "lp") {
              const CmdpSolution sol = solve_cmdp_lp(m_k);
              if (sol.status == SimplexSolver::Status::infeasible) {
                row.status = "infeasible";
              } else {
                row.j_reward = sol.j_reward;
                row.j_cost = sol.j_cost;
                row.status = "ok";
              }
            } else if (method == "bamdp-direct" || method == "bamdp-soft") {
              const BudgetMode mode = method == "bamdp-direct" ? BudgetMode::direct
                                                               : BudgetMode::soft;
              auto it = bamdp_cache.find(method);
              if (it == bamdp_cache.end()) {
                const BudgetRule rule = mode == BudgetMode::direct
                                            ? make_direct_rule(env.m)
                                            : make_soft_rule(env.m, env.critic);
                const BudgetGrid grid = make_budget_grid(env.m.delta_max(), cfg.bins);
                sweep_detail::BamdpAtP entry;
                entry.am = build_augmented_mdp(env.m, env.critic, grid, rule);
                const auto q_r = solve_augmented(entry.am);
                entry.policy = extract_policy(entry.am, q_r, env.critic);
                entry.values = evaluate_policy_values(entry.am, entry.policy);
                it = bamdp_cache.emplace(method, std::move(entry)).first;
              }
              const auto& cell = it->second;
              // throws infeasible_error when kappa is below the achievable cost
              const auto mu = augmented_initial_dist(env.m, env.critic, cell.am.grid,
                                                     cell.am.rule, kappa);
              row.j_reward = row.j_cost = 0.0;
              for (std::size_t i = 0; i < mu.size(); ++i) {
                row.j_reward += mu[i] * cell.values.v_reward[i];
                row.j_cost += mu[i] * cell.values.v_cost[i];
              }
              row.status = "ok";
            } else if (method == "offline-bcrl") {
              auto it = offline_cache.find(seed);
              if (it == offline_cache.end()) {
                Rng data_rng(split_seed(seed, 0x9e00 + pi));
                const TransitionDataset d = generate_dataset(
                    env.m, cfg.dataset_mix, cfg.dataset_episodes, cfg.dataset_horizon,
                    data_rng);
                TrainConfig tc = cfg.train;
                tc.seed = split_seed(seed, 0xbc00 + pi);
                it = offline_cache.emplace(seed, bcrl_train(d, meta_of(env.m), tc)).first;
              }
              const BudgetPolicy& pol = it->second;
              const std::uint64_t eval_base = split_seed(seed, 0xe600 + pi);
              double sum_r = 0.0, sum_r2 = 0.0, sum_c = 0.0, sum_c2 = 0.0;
              for (long ep = 0; ep < cfg.eval_episodes; ++ep) {
                Rng ep_rng(split_seed(eval_base, static_cast<std::uint64_t>(ep) * 1000 +
                                                     static_cast<std::uint64_t>(kappa)));
                const Trajectory traj =
                    run_episode_with_budget(env.m, pol, kappa, cfg.horizon, ep_rng);
                sum_r += traj.discounted_reward;
                sum_r2 += traj.discounted_reward * traj.discounted_reward;
                sum_c += traj.discounted_cost;
                sum_c2 += traj.discounted_cost * traj.discounted_cost;
              }
              const double n = static_cast<double>(cfg.eval_episodes);
              row.j_reward = sum_r / n;
              row.j_cost = sum_c / n;
              row.j_reward_se =
                  std::sqrt(std::max(0.0, sum_r2 / n - row.j_reward * row.j_reward) / n);
              row.j_cost_se =
                  std::sqrt(std::max(0.0, sum_c2 / n - row.j_cost * row.j_cost) / n);
              row.status = "ok";
            } else {
              row.status = "error: unknown method " + method;
            }
          } catch (const infeasible_error&) {
            row.status = "infeasible";
            row.j_reward = std::numeric_limits<double>::quiet_NaN();
            row.j_cost = std::numeric_limits<double>::quiet_NaN();
          } catch (const std::exception& e) {
            row.status = sweep_detail::sanitize_status(std::string("error: ") + e.what());
          }

          if (row.status == "ok") {
            row.normalized_cost =
                kappa > 0.0 ? normalize(row.j_cost, 0.0, kappa)
                            : std::numeric_limits<double>::quiet_NaN();
            row.normalized_reward =
                env.r_max > env.r_min
                    ? normalize(row.j_reward, env.r_min, env.r_max)
                    : std::numeric_limits<double>::quiet_NaN();
          } else {
            row.normalized_reward = std::numeric_limits<double>::quiet_NaN();
            row.normalized_cost = std::numeric_limits<double>::quiet_NaN();
          }
          result.rows.push_back(std::move(row));
        }
      }
    }
  }

  std::sort(result.rows.begin(), result.rows.end(), [](const SweepRow& x, const SweepRow& y) {
    return std::tie(x.method, x.p, x.kappa, x.seed) <
           std::tie(y.method, y.p, y.kappa, y.seed);
  });
  return result;
}

enum class OutputFormat { csv, json };

namespace sweep_detail {

inline std::string csv_number(double x) {
  if (std::isnan(x)) return "";
  return format_double(x);
}

}  // namespace sweep_detail

/// Writes the sweep rows with a fixed column order; CSV uses `.` decimals, a
/// header row and LF endings. NaN metrics (infeasible/error cells) emit empty
/// CSV fields and JSON nulls.
inline void emit_results(const SweepResult& res, std::ostream& os, OutputFormat fmt) {
  if (fmt == OutputFormat::csv) {
    os << "method,p,kappa,seed,j_reward,j_cost,normalized_reward,normalized_cost,status,"
          "provenance,j_reward_se,j_cost_se\n";
    for (const auto& row : res.rows) {
      os << row.method << ',' << format_double(row.p) << ',' << format_double(row.kappa)
         << ',' << row.seed << ',' << sweep_detail::csv_number(row.j_reward) << ','
         << sweep_detail::csv_number(row.j_cost) << ','
         << sweep_detail::csv_number(row.normalized_reward) << ','
         << sweep_detail::csv_number(row.normalized_cost) << ',' << row.status << ','
         << row.provenance << ',' << sweep_detail::csv_number(row.j_reward_se) << ','
         << sweep_detail::csv_number(row.j_cost_se) << '\n';
    }
    return;
  }
  // json: array of objects with identical field names
  os << "[";
  for (std::size_t i = 0; i < res.rows.size(); ++i) {
    const auto& row = res.rows[i];
    auto num = [](double x) {
      return std::isnan(x) ? std::string("null") : format_double(x);
    };
    os << (i == 0 ? "\n" : ",\n");
    os << "  {\"method\": \"" << row.method << "\", \"p\": " << format_double(row.p)
       << ", \"kappa\": " << format_double(row.kappa) << ", \"seed\": " << row.seed
       << ", \"j_reward\": " << num(row.j_reward) << ", \"j_cost\": " << num(row.j_cost)
       << ", \"normalized_reward\": " << num(row.normalized_reward)
       << ", \"normalized_cost\": " << num(row.normalized_cost) << ", \"status\": \""
       << row.status << "\", \"provenance\": \"" << row.provenance
       << "\", \"j_reward_se\": " << num(row.j_reward_se)
       << ", \"j_cost_se\": " << num(row.j_cost_se) << "}";
  }
  os << "\n]\n";
}

inline void emit_results(const SweepResult& res, const std::string& path, OutputFormat fmt) {
  std::ostringstream ss;
  emit_results(res, ss, fmt);
  write_file(path, ss.str());
}

}  // namespace bcr
