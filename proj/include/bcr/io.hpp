#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bcr/cmdp.hpp"
#include "bcr/cost_critic.hpp"
#include "bcr/dataset.hpp"
#include "bcr/solver.hpp"

namespace bcr {

/// Shortest decimal form that round-trips an IEEE double exactly.
inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  double back = 0.0;
  std::sscanf(buf, "%lf", &back);
  if (back == x) {
    // try shorter renderings for readability
    for (int prec = 1; prec <= 16; ++prec) {
      char shorter[40];
      std::snprintf(shorter, sizeof(shorter), "%.*g", prec, x);
      std::sscanf(shorter, "%lf", &back);
      if (back == x) return shorter;
    }
  }
  return buf;
}

namespace io_detail {

inline void write_doubles(std::ostream& os, const std::string& key,
                          const std::vector<double>& xs) {
  os << key;
  for (double x : xs) os << ' ' << format_double(x);
  os << '\n';
}

inline void write_flags(std::ostream& os, const std::string& key,
                        const std::vector<std::uint8_t>& xs) {
  os << key;
  for (auto x : xs) os << ' ' << int(x);
  os << '\n';
}

/// Key/value reader for the structured text formats below: one record per
/// line, first token is the key.
struct KvFile {
  std::map<std::string, std::vector<std::string>> fields;

  static KvFile parse(std::istream& is) {
    KvFile kv;
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty() || line[0] == '#') continue;
      std::istringstream ls(line);
      std::string key;
      ls >> key;
      auto& vals = kv.fields[key];
      std::string tok;
      while (ls >> tok) vals.push_back(tok);
    }
    return kv;
  }

  const std::vector<std::string>& at(const std::string& key) const {
    auto it = fields.find(key);
    if (it == fields.end()) throw std::runtime_error("missing field: " + key);
    return it->second;
  }
  long get_long(const std::string& key) const { return std::stol(at(key).at(0)); }
  double get_double(const std::string& key) const { return std::stod(at(key).at(0)); }
  std::vector<double> get_doubles(const std::string& key, std::size_t expect) const {
    const auto& toks = at(key);
    if (toks.size() != expect)
      throw std::runtime_error("field " + key + ": expected " + std::to_string(expect) +
                               " values, got " + std::to_string(toks.size()));
    std::vector<double> out(toks.size());
    for (std::size_t i = 0; i < toks.size(); ++i) out[i] = std::stod(toks[i]);
    return out;
  }
};

}  // namespace io_detail

/// CMDP text format: `bcr-cmdp 1` header, scalar fields, then dense arrays in
/// row-major (s,a[,s']) order. Doubles are printed so that load(store(m)) == m
/// bit for bit.
inline void store_cmdp(const TabularCmdp& m, std::ostream& os) {
  os << "bcr-cmdp 1\n";
  os << "n_states " << m.n_states << "\n";
  os << "n_actions " << m.n_actions << "\n";
  os << "gamma " << format_double(m.gamma) << "\n";
  os << "cost_threshold " << format_double(m.cost_threshold) << "\n";
  io_detail::write_doubles(os, "initial_dist", m.initial_dist);
  io_detail::write_doubles(os, "reward", m.reward);
  io_detail::write_doubles(os, "cost", m.cost);
  io_detail::write_doubles(os, "transition", m.transition);
  if (!m.absorbing.empty()) io_detail::write_flags(os, "absorbing", m.absorbing);
}

inline TabularCmdp load_cmdp(std::istream& is) {
  const auto kv = io_detail::KvFile::parse(is);
  if (kv.fields.find("bcr-cmdp") == kv.fields.end())
    throw std::runtime_error("load_cmdp: not a bcr-cmdp file");
  TabularCmdp m;
  m.n_states = static_cast<int>(kv.get_long("n_states"));
  m.n_actions = static_cast<int>(kv.get_long("n_actions"));
  m.gamma = kv.get_double("gamma");
  m.cost_threshold = kv.get_double("cost_threshold");
  const std::size_t sa = static_cast<std::size_t>(m.n_states) * m.n_actions;
  m.initial_dist = kv.get_doubles("initial_dist", m.n_states);
  m.reward = kv.get_doubles("reward", sa);
  m.cost = kv.get_doubles("cost", sa);
  m.transition = kv.get_doubles("transition", sa * m.n_states);
  if (kv.fields.count("absorbing")) {
    const auto& toks = kv.at("absorbing");
    if (toks.size() != static_cast<std::size_t>(m.n_states))
      throw std::runtime_error("load_cmdp: absorbing flag count mismatch");
    m.absorbing.resize(m.n_states);
    for (int s = 0; s < m.n_states; ++s)
      m.absorbing[s] = static_cast<std::uint8_t>(std::stoi(toks[s]));
  }
  return m;
}

/// Critic export in the same table format, for inspection and test fixtures.
inline void store_critic(const CostCritic& cc, std::ostream& os) {
  os << "bcr-cost-critic 1\n";
  os << "n_states " << cc.n_states << "\n";
  os << "n_actions " << cc.n_actions << "\n";
  os << "gamma " << format_double(cc.gamma) << "\n";
  os << "delta_max " << format_double(cc.delta_max) << "\n";
  os << "residual " << format_double(cc.residual) << "\n";
  io_detail::write_doubles(os, "v", cc.v);
  io_detail::write_doubles(os, "q", cc.q);
}

inline CostCritic load_critic(std::istream& is) {
  const auto kv = io_detail::KvFile::parse(is);
  if (kv.fields.find("bcr-cost-critic") == kv.fields.end())
    throw std::runtime_error("load_critic: not a bcr-cost-critic file");
  CostCritic cc;
  cc.n_states = static_cast<int>(kv.get_long("n_states"));
  cc.n_actions = static_cast<int>(kv.get_long("n_actions"));
  cc.gamma = kv.get_double("gamma");
  cc.delta_max = kv.get_double("delta_max");
  cc.residual = kv.get_double("residual");
  cc.v = kv.get_doubles("v", cc.n_states);
  cc.q = kv.get_doubles("q", static_cast<std::size_t>(cc.n_states) * cc.n_actions);
  return cc;
}

inline void store_solution(const CmdpSolution& sol, std::ostream& os) {
  os << "bcr-cmdp-solution 1\n";
  os << "status " << (sol.status == SimplexSolver::Status::optimal ? "optimal" : "infeasible")
     << "\n";
  if (sol.status != SimplexSolver::Status::optimal) return;
  os << "j_reward " << format_double(sol.j_reward) << "\n";
  os << "j_cost " << format_double(sol.j_cost) << "\n";
  io_detail::write_doubles(os, "occupancy", sol.occupancy);
  io_detail::write_doubles(os, "policy", sol.policy);
}

/// Budget policy dump: one row per (s, bin) with the action distribution.
inline void store_budget_policy(const BudgetPolicy& pol, std::ostream& os) {
  os << "bcr-budget-policy 1\n";
  os << "n_states " << pol.n_states << "\n";
  os << "n_actions " << pol.n_actions << "\n";
  os << "n_bins " << pol.grid.n_bins << "\n";
  os << "delta_max " << format_double(pol.grid.delta_max) << "\n";
  os << "# s bin action_probs...\n";
  for (int s = 0; s < pol.n_states; ++s)
    for (int b = 0; b < pol.grid.n_bins; ++b) {
      os << "row " << s << ' ' << b;
      for (int a = 0; a < pol.n_actions; ++a) os << ' ' << format_double(pol.prob(s, b, a));
      os << '\n';
    }
  os << "fallback";
  for (int a : pol.fallback) os << ' ' << a;
  os << '\n';
}

/// Dataset file: header `s,a,r,c,s_next,done`, one comma-separated record per
/// line, `.` decimal separator, LF endings.
inline void store_dataset(const TransitionDataset& d, std::ostream& os) {
  os << "s,a,r,c,s_next,done\n";
  for (const auto& rec : d.records)
    os << rec.s << ',' << rec.a << ',' << format_double(rec.r) << ','
       << format_double(rec.c) << ',' << rec.s_next << ',' << (rec.done ? 1 : 0) << '\n';
}

inline TransitionDataset load_dataset(std::istream& is) {
  TransitionDataset d;
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("load_dataset: empty file");
  if (line != "s,a,r,c,s_next,done")
    throw std::runtime_error("load_dataset: missing or malformed header row");
  long lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    TransitionRecord rec;
    int done = 0;
    if (std::sscanf(line.c_str(), "%d,%d,%lf,%lf,%d,%d", &rec.s, &rec.a, &rec.r, &rec.c,
                    &rec.s_next, &done) != 6)
      throw std::runtime_error("load_dataset: malformed record at line " +
                               std::to_string(lineno));
    rec.done = done != 0;
    d.records.push_back(rec);
  }
  return d;
}

/// Minimal INI reader for run configs: `[section]` headers, `key = value`
/// lines, `#` or `;` comments. Values keep internal whitespace.
inline std::map<std::string, std::map<std::string, std::string>> parse_ini(
    std::istream& is) {
  std::map<std::string, std::map<std::string, std::string>> out;
  std::string line, section;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
  };
  long lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::runtime_error("parse_ini: unterminated section at line " +
                                 std::to_string(lineno));
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("parse_ini: expected key = value at line " +
                               std::to_string(lineno));
    out[section][trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open file for writing: " + path);
  f << content;
  if (!f) throw std::runtime_error("write failed: " + path);
}

}  // namespace bcr
