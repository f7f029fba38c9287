#pragma once

// Brute-force reference implementations for tests and acceptance runs.
// Dense byte matrices only; nothing here shares code with the packed
// production path in graph_state.hpp.

#include <cstddef>
#include <cstdint>
#include <map>
#include <queue>
#include <utility>
#include <string>
#include <vector>

#include "gfc/bit_matrix.hpp"
#include "gfc/errors.hpp"
#include "gfc/graph_state.hpp"

namespace gfc::oracle {

/// Dense d x d 0/1 matrix; m[i][j] = 1 encodes j -> i like everywhere else.
using Dense = std::vector<std::vector<std::uint8_t>>;

inline Dense zeros(std::size_t d) { return Dense(d, std::vector<std::uint8_t>(d, 0)); }

inline Dense to_dense(const BitMatrix& m) {
  Dense out = zeros(m.size());
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < m.size(); ++j) out[i][j] = m.test(i, j) ? 1 : 0;
  return out;
}

inline bool equals(const Dense& a, const BitMatrix& b) { return a == to_dense(b); }

/// Reflexive closure; out[i][j] = 1 iff i is reachable from j.
inline Dense reachability_floyd_warshall(const Dense& a) {
  const std::size_t d = a.size();
  Dense r = a;
  for (std::size_t i = 0; i < d; ++i) r[i][i] = 1;
  for (std::size_t k = 0; k < d; ++k)
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j)
        if (r[i][k] && r[k][j]) r[i][j] = 1;
  return r;
}

/// Three-colour depth-first search over edges j -> i.
inline bool has_cycle(const Dense& a) {
  const std::size_t d = a.size();
  enum Colour : std::uint8_t { kWhite, kGrey, kBlack };
  std::vector<Colour> colour(d, kWhite);
  std::vector<std::pair<std::size_t, std::size_t>> stack;  // (node, next child to try)
  for (std::size_t root = 0; root < d; ++root) {
    if (colour[root] != kWhite) continue;
    stack.push_back({root, 0});
    colour[root] = kGrey;
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next == d) {
        colour[node] = kBlack;
        stack.pop_back();
        continue;
      }
      const std::size_t child = next++;
      if (!a[child][node]) continue;
      if (colour[child] == kGrey) return true;
      if (colour[child] == kWhite) {
        colour[child] = kGrey;
        stack.push_back({child, 0});
      }
    }
  }
  return false;
}

inline std::size_t edge_count(const Dense& a) {
  std::size_t c = 0;
  for (const auto& row : a)
    for (auto v : row) c += v;
  return c;
}

/// True when every pair of distinct nodes is ordered by reachability.
inline bool all_pairs_comparable(const Dense& a) {
  const Dense r = reachability_floyd_warshall(a);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a.size(); ++j)
      if (!r[i][j] && !r[j][i]) return false;
  return true;
}

/// Edges j -> i that are absent and keep the graph acyclic, checked one by one.
inline Dense brute_force_allowed(const Dense& a) {
  const std::size_t d = a.size();
  Dense ok = zeros(d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      if (i == j || a[i][j]) continue;
      Dense b = a;
      b[i][j] = 1;
      ok[i][j] = has_cycle(b) ? 0 : 1;
    }
  return ok;
}

/// Whether a directed graph is a simple path j1 -> j2 -> ... and where it ends.
struct PathInfo {
  bool is_path = false;
  std::size_t tail = 0;
  std::vector<std::uint8_t> on_path;
};

inline PathInfo path_info(const Dense& a) {
  const std::size_t d = a.size();
  PathInfo p;
  p.on_path.assign(d, 0);
  std::vector<std::size_t> indeg(d, 0), outdeg(d, 0);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      if (a[i][j]) {
        ++indeg[i];
        ++outdeg[j];
        p.on_path[i] = p.on_path[j] = 1;
      }
  std::size_t tails = 0;
  for (std::size_t v = 0; v < d; ++v) {
    if (!p.on_path[v]) continue;
    if (indeg[v] > 1 || outdeg[v] > 1) return p;
    if (outdeg[v] == 0) {
      ++tails;
      p.tail = v;
    }
  }
  p.is_path = tails == 1 && !has_cycle(a);
  return p;
}

/// Actions available under a sampling case, derived from first principles.
inline std::vector<std::pair<std::size_t, std::size_t>> legal_moves(const Dense& a, SamplingCase mode) {
  const std::size_t d = a.size();
  std::vector<std::pair<std::size_t, std::size_t>> moves;  // (from, to)
  const Dense ok = brute_force_allowed(a);
  const std::size_t e = edge_count(a);
  if (mode == SamplingCase::kPath && e > 0) {
    const PathInfo p = path_info(a);
    for (std::size_t to = 0; to < d; ++to)
      if (!p.on_path[to] && ok[to][p.tail]) moves.push_back({p.tail, to});
    return moves;
  }
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      if (ok[i][j]) moves.push_back({j, i});
  return moves;
}

inline bool terminal(const Dense& a, SamplingCase mode) {
  const std::size_t d = a.size();
  switch (mode) {
    case SamplingCase::kFull: return edge_count(a) == d * (d - 1) / 2;
    case SamplingCase::kIdentify: return all_pairs_comparable(a);
    case SamplingCase::kPath: return edge_count(a) + 1 == d;
  }
  return false;
}

inline std::string key_of(const Dense& a) {
  std::string k;
  for (const auto& row : a)
    for (auto v : row) k.push_back(static_cast<char>('0' + v));
  return k;
}

/// One state of the exhaustively expanded construction DAG.
struct StateNode {
  Dense adjacency;
  bool terminal = false;
  std::vector<std::pair<std::size_t, std::size_t>> moves;  // (from, to) out of this state
  std::vector<std::string> children;                        // keys, aligned with moves
  std::vector<std::string> parents;                         // keys of predecessor states
  double trajectories = 0;                                  // complete prefixes reaching it

  StateNode() = default;
  explicit StateNode(Dense a) : adjacency(std::move(a)) {}
};

struct StateGraph {
  std::size_t d = 0;
  SamplingCase mode = SamplingCase::kIdentify;
  std::map<std::string, StateNode> nodes;
  std::vector<std::string> bfs_order;  // by edge count, then discovery
};

/// Breadth-first expansion of every reachable state; d <= 4.
inline StateGraph enumerate_state_graph(std::size_t d, SamplingCase mode) {
  if (d > 4) throw TooLarge("exhaustive enumeration is limited to d <= 4");
  if (d < 2) throw InvalidDimension("d must be at least 2");
  StateGraph g;
  g.d = d;
  g.mode = mode;
  const Dense empty = zeros(d);
  const std::string root = key_of(empty);
  g.nodes[root] = StateNode(empty);
  g.nodes[root].trajectories = 1;
  std::queue<std::string> frontier;
  frontier.push(root);
  while (!frontier.empty()) {
    const std::string key = frontier.front();
    frontier.pop();
    g.bfs_order.push_back(key);
    StateNode& node = g.nodes[key];
    node.terminal = terminal(node.adjacency, mode);
    if (node.terminal) continue;
    node.moves = legal_moves(node.adjacency, mode);
    for (const auto& [from, to] : node.moves) {
      Dense next = node.adjacency;
      next[to][from] = 1;
      const std::string nk = key_of(next);
      auto [it, inserted] = g.nodes.try_emplace(nk, StateNode(next));
      it->second.parents.push_back(key);
      if (inserted) frontier.push(nk);
      g.nodes[key].children.push_back(nk);
    }
  }
  // BFS visits states in non-decreasing edge count, so counts are final
  // before a state is expanded.
  for (const auto& key : g.bfs_order) {
    const StateNode& node = g.nodes[key];
    for (const auto& child : node.children) g.nodes[child].trajectories += node.trajectories;
  }
  return g;
}

struct TerminalState {
  Dense adjacency;
  double trajectories = 0;
};

/// Terminal states keyed by their dense adjacency string.
inline std::map<std::string, TerminalState> enumerate_terminal_states(std::size_t d, SamplingCase mode) {
  const StateGraph g = enumerate_state_graph(d, mode);
  std::map<std::string, TerminalState> out;
  for (const auto& [key, node] : g.nodes)
    if (node.terminal) out[key] = TerminalState{node.adjacency, node.trajectories};
  return out;
}

}  // namespace gfc::oracle
