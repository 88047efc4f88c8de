#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "bcr/cmdp.hpp"
#include "bcr/dataset.hpp"
#include "bcr/rng.hpp"
#include "bcr/solver.hpp"

namespace bcr {

enum class CellType : std::uint8_t { start, goal, cost, empty, wall };

/// Text grid world: `S` start (exactly one), `G` goal (at least one, absorbing),
/// `C` cost cell (cost 1 charged on entry), `.` empty, `#` wall.
struct GridLayout {
  int rows = 0;
  int cols = 0;
  std::vector<CellType> cells;
  double p_intended = 1.0;  // probability of executing the intended move

  CellType at(int r, int c) const {
    return cells[static_cast<std::size_t>(r) * cols + c];
  }
};

inline GridLayout parse_layout(const std::string& text) {
  std::vector<std::string> lines;
  std::string cur;
  for (char ch : text) {
    if (ch == '\n') {
      lines.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) lines.push_back(cur);
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw std::invalid_argument("parse_layout: empty layout");

  std::vector<std::string> errors;
  const std::size_t width = lines.front().size();
  GridLayout layout;
  layout.rows = static_cast<int>(lines.size());
  layout.cols = static_cast<int>(width);
  int starts = 0, goals = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].size() != width) {
      errors.push_back("line " + std::to_string(i + 1) + ": expected width " +
                       std::to_string(width) + ", got " + std::to_string(lines[i].size()));
      continue;
    }
    for (char ch : lines[i]) {
      switch (ch) {
        case 'S': layout.cells.push_back(CellType::start); ++starts; break;
        case 'G': layout.cells.push_back(CellType::goal); ++goals; break;
        case 'C': layout.cells.push_back(CellType::cost); break;
        case '.': layout.cells.push_back(CellType::empty); break;
        case '#': layout.cells.push_back(CellType::wall); break;
        default:
          errors.push_back("line " + std::to_string(i + 1) + ": unknown character '" +
                           std::string(1, ch) + "'");
      }
    }
  }
  if (starts != 1)
    errors.push_back("layout must contain exactly one start, found " + std::to_string(starts));
  if (goals < 1) errors.push_back("layout must contain at least one goal");
  if (!errors.empty()) {
    std::string msg = "parse_layout:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw std::invalid_argument(msg);
  }
  return layout;
}

enum class WallRule {
  fold_to_self,  // blocked mass stays on the current cell
  renormalize    // blocked directions dropped, legal ones renormalized
};

namespace gridworld_detail {
// action order: 0 up, 1 down, 2 left, 3 right
constexpr int kDr[4] = {-1, 1, 0, 0};
constexpr int kDc[4] = {0, 0, -1, 1};
}  // namespace gridworld_detail

/// Builds the CMDP for a layout: the intended direction succeeds with
/// probability p, each other direction gets (1-p)/3; blocked moves are handled
/// per the wall rule. Reward is -1 per step outside goals (which are absorbing
/// zero-reward zero-cost self-loops); cost is the probability of entering a
/// cost cell, so c stays a function of (s,a).
inline TabularCmdp build_gridworld(const GridLayout& layout, double gamma,
                                   double kappa = 0.0,
                                   WallRule wall_rule = WallRule::fold_to_self) {
  if (!(layout.p_intended > 0.0 && layout.p_intended <= 1.0))
    throw std::invalid_argument("build_gridworld: p_intended must lie in (0, 1]");
  using namespace gridworld_detail;

  // non-wall cells become states, row-major
  std::vector<int> state_of(static_cast<std::size_t>(layout.rows) * layout.cols, -1);
  std::vector<int> cell_of;
  for (int r = 0; r < layout.rows; ++r)
    for (int c = 0; c < layout.cols; ++c)
      if (layout.at(r, c) != CellType::wall) {
        state_of[static_cast<std::size_t>(r) * layout.cols + c] =
            static_cast<int>(cell_of.size());
        cell_of.push_back(r * layout.cols + c);
      }

  TabularCmdp m;
  m.n_states = static_cast<int>(cell_of.size());
  m.n_actions = 4;
  m.gamma = gamma;
  m.cost_threshold = kappa;
  m.transition.assign(static_cast<std::size_t>(m.n_states) * 4 * m.n_states, 0.0);
  m.reward.assign(static_cast<std::size_t>(m.n_states) * 4, 0.0);
  m.cost.assign(static_cast<std::size_t>(m.n_states) * 4, 0.0);
  m.initial_dist.assign(m.n_states, 0.0);
  m.absorbing.assign(m.n_states, 0);

  auto target_state = [&](int r, int c, int dir) -> int {
    const int nr = r + kDr[dir], nc = c + kDc[dir];
    if (nr < 0 || nr >= layout.rows || nc < 0 || nc >= layout.cols) return -1;
    return state_of[static_cast<std::size_t>(nr) * layout.cols + nc];
  };

  const double p = layout.p_intended;
  for (int s = 0; s < m.n_states; ++s) {
    const int r = cell_of[s] / layout.cols, c = cell_of[s] % layout.cols;
    const CellType type = layout.at(r, c);
    if (type == CellType::start) m.initial_dist[s] = 1.0;
    if (type == CellType::goal) {
      m.absorbing[s] = 1;
      for (int a = 0; a < 4; ++a)
        m.transition[(static_cast<std::size_t>(s) * 4 + a) * m.n_states + s] = 1.0;
      continue;  // zero reward and cost
    }
    for (int a = 0; a < 4; ++a) {
      const std::size_t row = (static_cast<std::size_t>(s) * 4 + a) * m.n_states;
      double dir_prob[4];
      for (int d = 0; d < 4; ++d) dir_prob[d] = d == a ? p : (1.0 - p) / 3.0;

      if (wall_rule == WallRule::fold_to_self) {
        for (int d = 0; d < 4; ++d) {
          const int s2 = target_state(r, c, d);
          m.transition[row + (s2 >= 0 ? s2 : s)] += dir_prob[d];
        }
      } else {
        double legal_mass = 0.0;
        for (int d = 0; d < 4; ++d)
          if (target_state(r, c, d) >= 0) legal_mass += dir_prob[d];
        if (legal_mass == 0.0) {
          m.transition[row + s] = 1.0;  // boxed in
        } else {
          for (int d = 0; d < 4; ++d) {
            const int s2 = target_state(r, c, d);
            if (s2 >= 0) m.transition[row + s2] += dir_prob[d] / legal_mass;
          }
        }
      }

      m.reward[static_cast<std::size_t>(s) * 4 + a] = -1.0;
      double expected_cost = 0.0;
      for (int s2 = 0; s2 < m.n_states; ++s2) {
        const int cell = cell_of[s2];
        if (layout.cells[cell] == CellType::cost)
          expected_cost += m.transition[row + s2];
      }
      m.cost[static_cast<std::size_t>(s) * 4 + a] = expected_cost;
    }
  }
  return m;
}

/// Maps a layout cell (row, col) to its state index, -1 for walls.
inline int gridworld_state(const GridLayout& layout, int r, int c) {
  int s = 0;
  for (int rr = 0; rr < layout.rows; ++rr)
    for (int cc = 0; cc < layout.cols; ++cc) {
      if (layout.at(rr, cc) == CellType::wall) continue;
      if (rr == r && cc == c) return s;
      ++s;
    }
  return -1;
}

/// Rolls out a mixed behavior policy (mix*uniform + (1-mix)*reward-optimal)
/// and logs every transition. The optimal component is the unconstrained
/// greedy policy, i.e. the kappa = delta_max solution.
inline TransitionDataset generate_dataset(const TabularCmdp& m, double mix,
                                          long n_episodes, int horizon, Rng& rng) {
  if (!(mix >= 0.0 && mix <= 1.0))
    throw std::invalid_argument("generate_dataset: mix must lie in [0, 1]");
  TransitionDataset d;
  d.n_states = m.n_states;
  d.n_actions = m.n_actions;
  if (n_episodes <= 0) return d;

  const auto vi = reward_value_iteration(m);
  const auto greedy = greedy_policy_from_q(m.n_states, m.n_actions, vi.q);
  const double unif = mix / m.n_actions;
  PolicyFn behavior = [&](int s, int) {
    std::vector<double> dist(m.n_actions, unif);
    for (int a = 0; a < m.n_actions; ++a)
      dist[a] += (1.0 - mix) * greedy[static_cast<std::size_t>(s) * m.n_actions + a];
    return dist;
  };

  const std::uint64_t base = rng.next_u64();
  for (long ep = 0; ep < n_episodes; ++ep) {
    Rng ep_rng(split_seed(base, static_cast<std::uint64_t>(ep)));
    const Trajectory traj = rollout(m, behavior, horizon, ep_rng);
    for (const auto& st : traj.steps)
      d.records.push_back(
          {st.state, st.action, st.reward, st.cost, st.next_state, m.is_absorbing(st.next_state)});
  }
  return d;
}

}  // namespace bcr
