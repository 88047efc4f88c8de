#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "bcr/cmdp.hpp"

namespace bcr {

struct TransitionRecord {
  int s = 0;
  int a = 0;
  double r = 0.0;
  double c = 0.0;
  int s_next = 0;
  bool done = false;
};

/// Logged offline transitions; the only input the learner sees.
struct TransitionDataset {
  std::vector<TransitionRecord> records;
  // Table extents. Zero means "infer from the records".
  int n_states = 0;
  int n_actions = 0;

  int inferred_states() const {
    int m = n_states;
    for (const auto& rec : records) m = std::max({m, rec.s + 1, rec.s_next + 1});
    return m;
  }
  int inferred_actions() const {
    int m = n_actions;
    for (const auto& rec : records) m = std::max(m, rec.a + 1);
    return m;
  }

  void check() const {
    const int S = inferred_states(), A = inferred_actions();
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto& rec = records[i];
      if (rec.s < 0 || rec.s >= S || rec.s_next < 0 || rec.s_next >= S ||
          rec.a < 0 || rec.a >= A)
        throw std::out_of_range("dataset record " + std::to_string(i) + " has indices out of range");
      if (rec.c < 0.0)
        throw std::invalid_argument("dataset record " + std::to_string(i) + " has negative cost");
    }
  }
};

/// Per-(s,a) visitation counts; the tabular stand-in for behavior likelihood.
inline std::vector<long> visit_counts(const TransitionDataset& d, int n_states, int n_actions) {
  std::vector<long> n(static_cast<std::size_t>(n_states) * n_actions, 0);
  for (const auto& rec : d.records)
    ++n[static_cast<std::size_t>(rec.s) * n_actions + rec.a];
  return n;
}

/// Fraction of (s,a) pairs visited at least once, over non-absorbing states
/// (episodes end on entering absorbing states, so pairs there are unreachable
/// by construction).
inline double state_action_coverage(const TransitionDataset& d, const TabularCmdp& m) {
  const auto counts = visit_counts(d, m.n_states, m.n_actions);
  long seen = 0, total = 0;
  for (int s = 0; s < m.n_states; ++s) {
    if (m.is_absorbing(s)) continue;
    for (int a = 0; a < m.n_actions; ++a) {
      ++total;
      if (counts[static_cast<std::size_t>(s) * m.n_actions + a] > 0) ++seen;
    }
  }
  return total == 0 ? 1.0 : static_cast<double>(seen) / static_cast<double>(total);
}

}  // namespace bcr
