#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gfc/bit_matrix.hpp"
#include "gfc/errors.hpp"

namespace gfc {

/// Adds the edge `from -> to`, i.e. sets A(to, from) = 1.
struct EdgeAction {
  std::size_t from = 0;
  std::size_t to = 0;

  /// Position of this action in a flattened d*d action vector (row = to).
  std::size_t index(std::size_t d) const noexcept { return to * d + from; }

  static EdgeAction from_index(std::size_t idx, std::size_t d) noexcept {
    return {idx % d, idx / d};
  }

  friend bool operator==(const EdgeAction&, const EdgeAction&) = default;
  friend auto operator<=>(const EdgeAction&, const EdgeAction&) = default;
};

/// How a trajectory is constrained and when it stops.
///
///   kFull        stop only when the graph has d(d-1)/2 edges
///   kIdentify    stop as soon as the topological sort is identified
///   kPath        build a directed Hamiltonian path; stop after d-1 edges
enum class SamplingCase { kFull = 1, kIdentify = 2, kPath = 3 };

inline std::string to_string(SamplingCase c) {
  switch (c) {
    case SamplingCase::kFull: return "1";
    case SamplingCase::kIdentify: return "2";
    case SamplingCase::kPath: return "3";
  }
  return "?";
}

inline SamplingCase sampling_case_from_int(int v) {
  if (v < 1 || v > 3) throw InvalidParameter("sampling case must be 1, 2 or 3");
  return static_cast<SamplingCase>(v);
}

/// State of the incremental DAG builder.
///
///   adjacency   A, A(i, j) = 1 iff edge j -> i
///   closure     H, reflexive; H(i, j) = 1 iff i is reachable from j
///   mask        M = A | H^T; M(i, j) = 1 forbids adding j -> i
///   identifying Q = H | H^T; no zero entry iff the node order is total
///
/// All four are kept consistent by apply(); each step costs O(d * d / 64)
/// word operations.
class BuilderState {
 public:
  BuilderState() = default;

  explicit BuilderState(std::size_t d)
      : d_(d),
        adjacency_(d),
        closure_(BitMatrix::identity(d)),
        mask_(BitMatrix::identity(d)),
        identifying_(BitMatrix::identity(d)),
        incomparable_pairs_(d * (d - 1) / 2) {}

  std::size_t d() const noexcept { return d_; }
  std::size_t edge_count() const noexcept { return edges_; }
  const BitMatrix& adjacency() const noexcept { return adjacency_; }
  const BitMatrix& closure() const noexcept { return closure_; }
  const BitMatrix& mask() const noexcept { return mask_; }
  const BitMatrix& identifying() const noexcept { return identifying_; }

  /// Number of unordered node pairs that are not yet reachability-comparable.
  std::size_t incomparable_pairs() const noexcept { return incomparable_pairs_; }

  bool allows(const EdgeAction& a) const noexcept {
    return a.from < d_ && a.to < d_ && !mask_.test(a.to, a.from);
  }

  /// Applies an allowed action in place.
  void apply(const EdgeAction& a) {
    if (!allows(a)) {
      throw ForbiddenAction("action " + std::to_string(a.from) + "->" +
                            std::to_string(a.to) + " is masked");
    }
    // H' = H | h_to * row_from: every descendant of `to` becomes reachable
    // from every ancestor of `from`.
    const auto from_row = closure_.row(a.from);
    for (std::size_t k = 0; k < d_; ++k) {
      if (!closure_.test(k, a.to)) continue;
      auto target = closure_.row(k);
      for (std::size_t w = 0; w < target.size(); ++w) {
        BitMatrix::Word fresh = from_row[w] & ~target[w];
        if (fresh == 0) continue;
        target[w] |= fresh;
        while (fresh != 0) {
          const std::size_t l = w * BitMatrix::kWordBits +
                                static_cast<std::size_t>(std::countr_zero(fresh));
          fresh &= fresh - 1;
          mask_.set(l, k);
          identifying_.set(k, l);
          identifying_.set(l, k);
          // Acyclicity guarantees H(l, k) was 0, so the pair was incomparable.
          --incomparable_pairs_;
        }
      }
    }
    adjacency_.set(a.to, a.from);
    mask_.set(a.to, a.from);
    ++edges_;
  }

  friend bool operator==(const BuilderState& a, const BuilderState& b) {
    return a.d_ == b.d_ && a.adjacency_ == b.adjacency_;
  }

 private:
  std::size_t d_ = 0;
  BitMatrix adjacency_;
  BitMatrix closure_;
  BitMatrix mask_;
  BitMatrix identifying_;
  std::size_t edges_ = 0;
  std::size_t incomparable_pairs_ = 0;
};

inline BuilderState new_state(std::size_t d) {
  if (d < 2) throw InvalidDimension("node count must be at least 2, got " + std::to_string(d));
  return BuilderState(d);
}

inline BuilderState apply_action(BuilderState s, const EdgeAction& a) {
  s.apply(a);
  return s;
}

/// Rebuilds a state from an adjacency matrix by replaying its edges.
inline BuilderState state_from_adjacency(const Adjacency& a) {
  BuilderState s = new_state(a.size());
  a.for_each_set([&](std::size_t child, std::size_t parent) {
    const EdgeAction act{parent, child};
    if (!s.allows(act)) throw InvalidGraph("adjacency contains a cycle or a self loop");
    s.apply(act);
  });
  return s;
}

inline bool is_identified(const BuilderState& s) noexcept { return s.incomparable_pairs() == 0; }

inline std::size_t max_edges(std::size_t d) noexcept { return d * (d - 1) / 2; }

/// Every action with M(to, from) = 0.
inline std::vector<EdgeAction> allowed_actions(const BuilderState& s) {
  std::vector<EdgeAction> out;
  const std::size_t d = s.d();
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      if (!s.mask().test(i, j)) out.push_back({j, i});
  return out;
}

/// Nodes touched by at least one edge.
inline std::vector<bool> visited_nodes(const BuilderState& s) {
  std::vector<bool> seen(s.d(), false);
  s.adjacency().for_each_set([&](std::size_t i, std::size_t j) {
    seen[i] = true;
    seen[j] = true;
  });
  return seen;
}

/// End of the path built under SamplingCase::kPath: the visited node with no child.
inline std::optional<std::size_t> path_tail(const BuilderState& s) {
  if (s.edge_count() == 0) return std::nullopt;
  const auto seen = visited_nodes(s);
  std::vector<bool> has_child(s.d(), false);
  s.adjacency().for_each_set([&](std::size_t, std::size_t parent) { has_child[parent] = true; });
  for (std::size_t v = 0; v < s.d(); ++v)
    if (seen[v] && !has_child[v]) return v;
  return std::nullopt;
}

/// Forbidden-action matrix for a sampling case; same layout as M.
///
/// Cases 1 and 2 use M directly. Case 3 additionally forbids any source other
/// than the current path tail and any target already on the path.
inline BitMatrix effective_mask(const BuilderState& s, SamplingCase mode) {
  if (mode != SamplingCase::kPath || s.edge_count() == 0) return s.mask();
  const std::size_t d = s.d();
  BitMatrix m(d);
  const auto tail = path_tail(s);
  const auto seen = visited_nodes(s);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      if (!tail || j != *tail || seen[i] || s.mask().test(i, j)) m.set(i, j);
  return m;
}

inline std::vector<EdgeAction> allowed_actions(const BuilderState& s, SamplingCase mode) {
  if (mode != SamplingCase::kPath) return allowed_actions(s);
  const BitMatrix m = effective_mask(s, mode);
  std::vector<EdgeAction> out;
  for (std::size_t i = 0; i < s.d(); ++i)
    for (std::size_t j = 0; j < s.d(); ++j)
      if (!m.test(i, j)) out.push_back({j, i});
  return out;
}

inline bool is_terminal(const BuilderState& s, SamplingCase mode) noexcept {
  switch (mode) {
    case SamplingCase::kFull: return s.edge_count() == max_edges(s.d());
    case SamplingCase::kIdentify: return is_identified(s);
    case SamplingCase::kPath: return s.edge_count() + 1 == s.d();
  }
  return false;
}

/// Fully-connected DAG H - I implied by an identified state.
inline Adjacency induced_full_dag(const BuilderState& s) {
  if (!is_identified(s)) throw NotIdentified("topological sort is not identified yet");
  Adjacency full = s.closure();
  for (std::size_t i = 0; i < s.d(); ++i) full.reset(i, i);
  return full;
}

/// Complete topological sort: nodes ordered by ancestor count (row sums of H).
inline std::vector<std::size_t> topological_sort(const BuilderState& s) {
  if (!is_identified(s)) throw NotIdentified("topological sort is not identified yet");
  std::vector<std::size_t> order(s.d());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::size_t> ancestors(s.d());
  for (std::size_t v = 0; v < s.d(); ++v) ancestors[v] = s.closure().row_count(v);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return ancestors[a] < ancestors[b]; });
  return order;
}

/// Predecessor of a state in the construction MDP together with the action leading back.
struct ParentTransition {
  BuilderState state;
  EdgeAction action;
};

/// All (parent, action) pairs with T(parent, action) = s under the given case.
///
/// Parents are rebuilt from scratch. Under kIdentify, parents that are
/// already identified are dropped because a trajectory would have stopped there.
inline std::vector<ParentTransition> enumerate_parents(const BuilderState& s, SamplingCase mode) {
  std::vector<ParentTransition> out;
  if (s.edge_count() == 0) return out;

  if (mode == SamplingCase::kPath) {
    const auto tail = path_tail(s);
    if (!tail) return out;
    std::size_t parent_node = s.d();
    s.adjacency().for_each_set_in_row(*tail, [&](std::size_t j) { parent_node = j; });
    Adjacency a = s.adjacency();
    a.reset(*tail, parent_node);
    out.push_back({state_from_adjacency(a), EdgeAction{parent_node, *tail}});
    return out;
  }

  s.adjacency().for_each_set([&](std::size_t child, std::size_t parent) {
    Adjacency a = s.adjacency();
    a.reset(child, parent);
    BuilderState p = state_from_adjacency(a);
    if (mode == SamplingCase::kIdentify && is_identified(p)) return;
    out.push_back({std::move(p), EdgeAction{parent, child}});
  });
  return out;
}

}  // namespace gfc
