#include <random>

#include <gtest/gtest.h>

#include "gfc/oracle.hpp"
#include "support.hpp"

namespace gfc::oracle {
namespace {

Dense dense(std::size_t d, std::initializer_list<std::pair<std::size_t, std::size_t>> edges) {
  Dense a = zeros(d);
  for (auto [from, to] : edges) a[to][from] = 1;
  return a;
}

TEST(FloydWarshall, EmptyIsIdentity) {
  const Dense r = reachability_floyd_warshall(zeros(4));
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(r[i][j], i == j ? 1 : 0);
}

TEST(FloydWarshall, ChainAddsTwoHop) {
  const Dense r = reachability_floyd_warshall(dense(3, {{0, 1}, {1, 2}}));
  EXPECT_EQ(r[2][0], 1);
  EXPECT_EQ(r[0][2], 0);
}

TEST(FloydWarshall, MatchesIncrementalClosureAtEightNodes) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 200; ++trial)
    gfc::testing::random_walk(8, SamplingCase::kFull, rng,
                              [](const BuilderState& s) { ASSERT_TRUE(gfc::testing::closure_matches_oracle(s)); });
}

TEST(HasCycle, Basics) {
  EXPECT_FALSE(has_cycle(zeros(3)));
  EXPECT_TRUE(has_cycle(dense(2, {{0, 1}, {1, 0}})));
  EXPECT_TRUE(has_cycle(dense(4, {{0, 1}, {1, 2}, {2, 3}, {3, 1}})));
  EXPECT_FALSE(has_cycle(dense(4, {{0, 1}, {0, 2}, {1, 3}, {2, 3}})));
}

TEST(HasCycle, NeverTrueAlongConstruction) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 200; ++trial)
    gfc::testing::random_walk(7, SamplingCase::kFull, rng,
                              [](const BuilderState& s) { ASSERT_FALSE(has_cycle(to_dense(s.adjacency()))); });
}

TEST(TerminalStates, TwoNodes) {
  for (auto mode : {SamplingCase::kFull, SamplingCase::kIdentify, SamplingCase::kPath}) {
    const auto t = enumerate_terminal_states(2, mode);
    EXPECT_EQ(t.size(), 2u);
    for (const auto& [_, ts] : t) EXPECT_EQ(ts.trajectories, 1.0);
  }
}

TEST(TerminalStates, ThreeNodePathsArePermutations) {
  const auto t = enumerate_terminal_states(3, SamplingCase::kPath);
  EXPECT_EQ(t.size(), 6u);
  for (const auto& [_, ts] : t) {
    EXPECT_EQ(edge_count(ts.adjacency), 2u);
    EXPECT_EQ(ts.trajectories, 1.0);
  }
}

TEST(TerminalStates, IdentifyStopsAtFirstIdentifiedState) {
  const auto g = enumerate_state_graph(3, SamplingCase::kIdentify);
  std::size_t terminals = 0;
  for (const auto& [key, node] : g.nodes) {
    EXPECT_EQ(node.terminal, all_pairs_comparable(node.adjacency));
    if (node.terminal) {
      ++terminals;
      for (const auto& p : node.parents) EXPECT_FALSE(all_pairs_comparable(g.nodes.at(p).adjacency));
    }
  }
  EXPECT_EQ(terminals, enumerate_terminal_states(3, SamplingCase::kIdentify).size());
}

TEST(TerminalStates, FullCaseTrajectoryCounts) {
  // Every complete DAG on 3 nodes is reached by 3! edge orders.
  const auto t = enumerate_terminal_states(3, SamplingCase::kFull);
  EXPECT_EQ(t.size(), 6u);
  for (const auto& [_, ts] : t) EXPECT_EQ(ts.trajectories, 6.0);
}

TEST(TerminalStates, ModeConsistentExpansion) {
  for (auto mode : {SamplingCase::kFull, SamplingCase::kIdentify, SamplingCase::kPath}) {
    const auto g = enumerate_state_graph(4, mode);
    for (const auto& [key, node] : g.nodes) {
      if (node.terminal) continue;
      for (const auto& [from, to] : legal_moves(node.adjacency, mode)) {
        Dense next = node.adjacency;
        next[to][from] = 1;
        EXPECT_TRUE(g.nodes.count(key_of(next)));
      }
    }
  }
}

TEST(TerminalStates, Deterministic) {
  const auto a = enumerate_terminal_states(4, SamplingCase::kIdentify);
  const auto b = enumerate_terminal_states(4, SamplingCase::kIdentify);
  ASSERT_EQ(a.size(), b.size());
  for (const auto& [key, ts] : a) EXPECT_EQ(b.at(key).trajectories, ts.trajectories);
}

TEST(TerminalStates, TooLarge) {
  EXPECT_THROW(enumerate_terminal_states(5, SamplingCase::kPath), TooLarge);
}

}  // namespace
}  // namespace gfc::oracle
