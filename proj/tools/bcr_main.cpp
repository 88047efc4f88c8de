// bcr: command-line front end for the budget-conditioned reachability toolkit.
//
// Subcommands: solve-lp, solve-bamdp, gen-dataset, train-offline, sweep.
// Exit codes: 0 success, 1 fatal error, 2 completed with per-cell failures.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bcr/budget.hpp"
#include "bcr/cmdp.hpp"
#include "bcr/cost_critic.hpp"
#include "bcr/gridworld.hpp"
#include "bcr/io.hpp"
#include "bcr/offline.hpp"
#include "bcr/solver.hpp"
#include "bcr/sweep.hpp"

namespace {

struct EnvArgs {
  std::string layout_path;
  double p = 1.0;
  double gamma = 0.99;
  double kappa = 0.0;
};

void add_env_options(CLI::App* cmd, EnvArgs& env, bool with_kappa = true) {
  cmd->add_option("--layout", env.layout_path, "grid layout file (.grid)")->required();
  cmd->add_option("--p", env.p, "intended-movement probability")->check(CLI::Range(1e-9, 1.0));
  cmd->add_option("--gamma", env.gamma, "discount factor")->check(CLI::Range(0.0, 0.999999));
  if (with_kappa) cmd->add_option("--kappa", env.kappa, "cost threshold");
}

bcr::TabularCmdp build_env(const EnvArgs& env) {
  bcr::GridLayout layout = bcr::parse_layout(bcr::read_file(env.layout_path));
  layout.p_intended = env.p;
  bcr::TabularCmdp m = bcr::build_gridworld(layout, env.gamma, env.kappa);
  const auto report = bcr::validate_cmdp(m);
  if (!report.ok()) throw std::runtime_error("invalid CMDP:\n" + report.to_string());
  return m;
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::string tok;
  std::istringstream ss(text);
  while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
  return out;
}

std::vector<std::string> parse_string_list(const std::string& text) {
  std::vector<std::string> out;
  std::string tok;
  std::istringstream ss(text);
  while (std::getline(ss, tok, ',')) out.push_back(tok);
  return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::string tok;
  std::istringstream ss(text);
  while (std::getline(ss, tok, ',')) out.push_back(std::stoull(tok));
  return out;
}

void apply_train_section(const std::map<std::string, std::string>& kv, bcr::TrainConfig& tc) {
  for (const auto& [key, value] : kv) {
    if (key == "tau_cost") tc.tau_cost = std::stod(value);
    else if (key == "tau_reward") tc.tau_reward = std::stod(value);
    else if (key == "beta") tc.beta = std::stod(value);
    else if (key == "alpha") tc.alpha = std::stod(value);
    else if (key == "lr") tc.lr = std::stod(value);
    else if (key == "steps") tc.steps = std::stol(value);
    else if (key == "batch") tc.batch = std::stoi(value);
    else if (key == "seed") tc.seed = std::stoull(value);
    else if (key == "freeze_cost_after") tc.freeze_cost_after = std::stol(value);
    else if (key == "lr_q_cost") tc.lr_q_cost = std::stod(value);
    else if (key == "lr_v_cost") tc.lr_v_cost = std::stod(value);
    else if (key == "lr_q_reward") tc.lr_q_reward = std::stod(value);
    else if (key == "lr_v_reward") tc.lr_v_reward = std::stod(value);
    else throw std::runtime_error("unknown [train] key: " + key);
  }
}

void apply_config_file(const std::string& path, bcr::RunConfig& rc) {
  std::istringstream ss(bcr::read_file(path));
  const auto ini = bcr::parse_ini(ss);
  for (const auto& [section, kv] : ini) {
    if (section == "train") {
      apply_train_section(kv, rc.train);
    } else if (section == "budget") {
      for (const auto& [key, value] : kv) {
        if (key == "mode") rc.train.budget_mode = bcr::budget_mode_from_string(value);
        else if (key == "bins") { rc.bins = std::stoi(value); rc.train.n_bins = rc.bins; }
        else throw std::runtime_error("unknown [budget] key: " + key);
      }
    } else if (section == "sweep" || section.empty()) {
      for (const auto& [key, value] : kv) {
        if (key == "layout") rc.layout_path = value;
        else if (key == "gamma") rc.gamma = std::stod(value);
        else if (key == "kappas") rc.kappas = parse_double_list(value);
        else if (key == "ps") rc.ps = parse_double_list(value);
        else if (key == "methods") rc.methods = parse_string_list(value);
        else if (key == "seeds") rc.seeds = parse_seed_list(value);
        else if (key == "horizon") rc.horizon = std::stoi(value);
        else if (key == "episodes") rc.eval_episodes = std::stol(value);
        else if (key == "dataset_mix") rc.dataset_mix = std::stod(value);
        else if (key == "dataset_episodes") rc.dataset_episodes = std::stol(value);
        else if (key == "dataset_horizon") rc.dataset_horizon = std::stoi(value);
        else throw std::runtime_error("unknown [sweep] key: " + key);
      }
    } else {
      throw std::runtime_error("unknown config section: [" + section + "]");
    }
  }
}

int run(int argc, char** argv) {
  CLI::App app{"budget-conditioned reachability toolkit"};
  app.require_subcommand(1);

  // solve-lp
  EnvArgs lp_env;
  std::string lp_out;
  auto* lp_cmd = app.add_subcommand("solve-lp", "exact CMDP solution via the occupancy LP");
  add_env_options(lp_cmd, lp_env);
  lp_cmd->add_option("--out", lp_out, "write the solution tables to this file");

  // solve-bamdp
  EnvArgs ba_env;
  std::string ba_mode = "soft", ba_out;
  int ba_bins = 64;
  auto* ba_cmd = app.add_subcommand("solve-bamdp", "solve the budget-augmented MDP exactly");
  add_env_options(ba_cmd, ba_env);
  ba_cmd->add_option("--mode", ba_mode, "budget rule: direct|soft");
  ba_cmd->add_option("--bins", ba_bins, "budget bins")->check(CLI::Range(2, 1 << 20));
  ba_cmd->add_option("--out", ba_out, "write the extracted policy to this file");

  // gen-dataset
  EnvArgs gd_env;
  double gd_mix = 0.5;
  long gd_episodes = 2000;
  int gd_horizon = 60;
  std::uint64_t gd_seed = 0;
  std::string gd_out;
  auto* gd_cmd = app.add_subcommand("gen-dataset", "generate an offline dataset");
  add_env_options(gd_cmd, gd_env, /*with_kappa=*/false);
  gd_cmd->add_option("--mix", gd_mix, "probability of a uniform-random action")
      ->check(CLI::Range(0.0, 1.0));
  gd_cmd->add_option("--episodes", gd_episodes, "behavior episodes");
  gd_cmd->add_option("--horizon", gd_horizon, "behavior episode horizon");
  gd_cmd->add_option("--seed", gd_seed, "rng seed");
  gd_cmd->add_option("--out", gd_out, "dataset file")->required();

  // train-offline
  EnvArgs tr_env;
  std::string tr_dataset, tr_config, tr_policy_out, tr_mode = "soft";
  bcr::TrainConfig tr_cfg;
  double tr_eval_kappa = -1.0;
  long tr_eval_episodes = 10000;
  int tr_eval_horizon = 100;
  auto* tr_cmd = app.add_subcommand("train-offline", "train the offline agent on a dataset");
  add_env_options(tr_cmd, tr_env, /*with_kappa=*/false);
  tr_cmd->add_option("--dataset", tr_dataset, "dataset file")->required();
  tr_cmd->add_option("--config", tr_config, "config file with a [train] section");
  tr_cmd->add_option("--mode", tr_mode, "budget rule: direct|soft");
  tr_cmd->add_option("--bins", tr_cfg.n_bins, "budget bins");
  tr_cmd->add_option("--steps", tr_cfg.steps, "gradient steps");
  tr_cmd->add_option("--batch", tr_cfg.batch, "batch size");
  tr_cmd->add_option("--lr", tr_cfg.lr, "learning rate");
  tr_cmd->add_option("--tau-cost", tr_cfg.tau_cost, "cost expectile");
  tr_cmd->add_option("--tau-reward", tr_cfg.tau_reward, "reward expectile");
  tr_cmd->add_option("--beta", tr_cfg.beta, "AWR temperature");
  tr_cmd->add_option("--alpha", tr_cfg.alpha, "target soft-update rate");
  tr_cmd->add_option("--seed", tr_cfg.seed, "training seed");
  tr_cmd->add_option("--freeze-cost-after", tr_cfg.freeze_cost_after,
                     "freeze the cost critic after this many steps (<0: never)");
  tr_cmd->add_option("--policy-out", tr_policy_out, "write the policy table here");
  tr_cmd->add_option("--eval-kappa", tr_eval_kappa,
                     "if >= 0, Monte-Carlo evaluate at this cost threshold");
  tr_cmd->add_option("--eval-episodes", tr_eval_episodes, "evaluation episodes");
  tr_cmd->add_option("--eval-horizon", tr_eval_horizon, "evaluation horizon H");

  // sweep
  bcr::RunConfig sw_cfg;
  std::string sw_config, sw_out = "results.csv", sw_format = "csv";
  std::string sw_kappas, sw_ps, sw_methods, sw_seeds;
  auto* sw_cmd = app.add_subcommand("sweep", "run the (method x p x kappa x seed) sweep");
  sw_cmd->add_option("--config", sw_config, "config file ([sweep]/[budget]/[train])");
  sw_cmd->add_option("--layout", sw_cfg.layout_path, "grid layout file");
  sw_cmd->add_option("--gamma", sw_cfg.gamma, "discount factor");
  sw_cmd->add_option("--kappas", sw_kappas, "comma-separated cost thresholds");
  sw_cmd->add_option("--ps", sw_ps, "comma-separated intended-move probabilities");
  sw_cmd->add_option("--methods", sw_methods,
                     "subset of lp,bamdp-direct,bamdp-soft,offline-bcrl,unconstrained");
  sw_cmd->add_option("--seeds", sw_seeds, "comma-separated seeds");
  sw_cmd->add_option("--bins", sw_cfg.bins, "budget bins");
  sw_cmd->add_option("--horizon", sw_cfg.horizon, "evaluation horizon H");
  sw_cmd->add_option("--episodes", sw_cfg.eval_episodes, "Monte-Carlo evaluation episodes");
  sw_cmd->add_option("--out", sw_out, "output file");
  sw_cmd->add_option("--format", sw_format, "csv|json");

  CLI11_PARSE(app, argc, argv);

  if (lp_cmd->parsed()) {
    const bcr::TabularCmdp m = build_env(lp_env);
    const bcr::CmdpSolution sol = bcr::solve_cmdp_lp(m);
    if (sol.status == bcr::SimplexSolver::Status::infeasible) {
      std::cout << "status infeasible\n";
    } else {
      std::cout << "status optimal\n";
      std::cout << "j_reward " << bcr::format_double(sol.j_reward) << "\n";
      std::cout << "j_cost " << bcr::format_double(sol.j_cost) << "\n";
    }
    if (!lp_out.empty()) {
      std::ostringstream ss;
      bcr::store_solution(sol, ss);
      bcr::write_file(lp_out, ss.str());
    }
    return 0;
  }

  if (ba_cmd->parsed()) {
    const bcr::TabularCmdp m = build_env(ba_env);
    const bcr::CostCritic cc = bcr::min_cost_value_iteration(m);
    const bcr::BudgetMode mode = bcr::budget_mode_from_string(ba_mode);
    const bcr::BudgetRule rule = mode == bcr::BudgetMode::direct
                                     ? bcr::make_direct_rule(m)
                                     : bcr::make_soft_rule(m, cc);
    const bcr::BudgetGrid grid = bcr::make_budget_grid(m.delta_max(), ba_bins);
    try {
      const bcr::AugmentedMdp am = bcr::build_augmented_mdp(m, cc, grid, rule);
      const auto q_r = bcr::solve_augmented(am);
      const bcr::BudgetPolicy pol = bcr::extract_policy(am, q_r, cc);
      std::cout << "status ok\n";
      std::cout << "j_reward "
                << bcr::format_double(
                       bcr::evaluate_policy_exact(am, pol, bcr::Objective::reward))
                << "\n";
      std::cout << "j_cost "
                << bcr::format_double(
                       bcr::evaluate_policy_exact(am, pol, bcr::Objective::cost))
                << "\n";
      if (!ba_out.empty()) {
        std::ostringstream ss;
        bcr::store_budget_policy(pol, ss);
        bcr::write_file(ba_out, ss.str());
      }
    } catch (const bcr::infeasible_error& e) {
      std::cout << "status infeasible\n";
      std::cerr << e.what() << "\n";
    }
    return 0;
  }

  if (gd_cmd->parsed()) {
    const bcr::TabularCmdp m = build_env(gd_env);
    bcr::Rng rng(gd_seed);
    const bcr::TransitionDataset d =
        bcr::generate_dataset(m, gd_mix, gd_episodes, gd_horizon, rng);
    std::ostringstream ss;
    bcr::store_dataset(d, ss);
    bcr::write_file(gd_out, ss.str());
    std::cout << "records " << d.records.size() << "\n";
    std::cout << "coverage " << bcr::format_double(bcr::state_action_coverage(d, m)) << "\n";
    return 0;
  }

  if (tr_cmd->parsed()) {
    const bcr::TabularCmdp m = build_env(tr_env);
    std::istringstream ds(bcr::read_file(tr_dataset));
    bcr::TransitionDataset d = bcr::load_dataset(ds);
    d.n_states = m.n_states;
    d.n_actions = m.n_actions;
    bcr::RunConfig holder;  // reuse the [train]/[budget] parsing
    holder.train = tr_cfg;
    if (!tr_config.empty()) apply_config_file(tr_config, holder);
    bcr::TrainConfig cfg = holder.train;
    if (tr_cmd->count("--mode")) cfg.budget_mode = bcr::budget_mode_from_string(tr_mode);
    const bcr::BudgetPolicy pol = bcr::bcrl_train(d, bcr::meta_of(m), cfg);
    if (pol.relaxed_support_cells > 0)
      std::cerr << "warning: " << pol.relaxed_support_cells
                << " (state,bin) cells had an empty learned safe action set; "
                   "their support was widened to the dataset's\n";
    if (!tr_policy_out.empty()) {
      std::ostringstream ss;
      bcr::store_budget_policy(pol, ss);
      bcr::write_file(tr_policy_out, ss.str());
    }
    if (tr_eval_kappa >= 0.0) {
      double sum_r = 0.0, sum_c = 0.0;
      for (long ep = 0; ep < tr_eval_episodes; ++ep) {
        bcr::Rng ep_rng(bcr::split_seed(cfg.seed ^ 0xeva1, static_cast<std::uint64_t>(ep)));
        const auto traj =
            bcr::run_episode_with_budget(m, pol, tr_eval_kappa, tr_eval_horizon, ep_rng);
        sum_r += traj.discounted_reward;
        sum_c += traj.discounted_cost;
      }
      std::cout << "mc_j_reward " << bcr::format_double(sum_r / tr_eval_episodes) << "\n";
      std::cout << "mc_j_cost " << bcr::format_double(sum_c / tr_eval_episodes) << "\n";
    }
    std::cout << "status ok\n";
    return 0;
  }

  if (sw_cmd->parsed()) {
    if (!sw_config.empty()) apply_config_file(sw_config, sw_cfg);
    if (!sw_kappas.empty()) sw_cfg.kappas = parse_double_list(sw_kappas);
    if (!sw_ps.empty()) sw_cfg.ps = parse_double_list(sw_ps);
    if (!sw_methods.empty()) sw_cfg.methods = parse_string_list(sw_methods);
    if (!sw_seeds.empty()) sw_cfg.seeds = parse_seed_list(sw_seeds);
    sw_cfg.train.n_bins = sw_cfg.bins;
    if (sw_cfg.layout_path.empty())
      throw std::runtime_error("sweep: --layout or a config file with layout is required");
    const bcr::SweepResult res = bcr::run_sweep(sw_cfg);
    const bcr::OutputFormat fmt =
        sw_format == "json" ? bcr::OutputFormat::json : bcr::OutputFormat::csv;
    bcr::emit_results(res, sw_out, fmt);
    std::cout << "rows " << res.rows.size() << "\n";
    std::cout << "out " << sw_out << "\n";
    return res.has_errors() ? 2 : 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
