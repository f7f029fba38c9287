#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "gfc/rewards.hpp"
#include "gfc/synthetic.hpp"
#include "support.hpp"

namespace gfc {
namespace {

using testing::graph;
using testing::state;

Eigen::VectorXd vars(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index k = 0;
  for (double x : v) out(k++) = x;
  return out;
}

Dataset chain_data(std::uint64_t seed, std::size_t n = 1000) {
  WeightedGraph g{graph(3, {{0, 1}, {1, 2}}), Eigen::MatrixXd::Zero(3, 3)};
  g.weights(1, 0) = 1.5;
  g.weights(2, 1) = -1.2;
  return simulate_sem(g, n, {NoiseKind::kGaussian, 1.0}, seed);
}

TEST(Varsortability, SingleIncreasingEdge) {
  EXPECT_DOUBLE_EQ(varsortability(graph(2, {{0, 1}}), vars({1.0, 2.0})), 1.0);
  EXPECT_DOUBLE_EQ(varsortability(graph(2, {{0, 1}}), vars({2.0, 1.0})), 0.0);
}

TEST(Varsortability, EqualVariancesGiveHalf) {
  EXPECT_DOUBLE_EQ(varsortability(graph(4, {{0, 1}, {1, 2}, {0, 3}}), vars({1, 1, 1, 1})), 0.5);
}

TEST(Varsortability, ChainByHand) {
  // Paths (1,2) gamma 1, (2,3) gamma 0, (1,3) gamma 0.
  EXPECT_DOUBLE_EQ(varsortability(graph(3, {{0, 1}, {1, 2}}), vars({1.0, 2.0, 0.5})), 1.0 / 3.0);
}

TEST(Varsortability, PairCountedOncePerPower) {
  // Diamond 1->2->4, 1->3->4: (1,4) is one pair at k = 2 despite two paths.
  // k=1: (1,2) (1,3) (2,4) (3,4); k=2: (1,4). Variances increasing -> 5/5.
  // With var(4) smallest: k=1 hits (1,2) (1,3); misses (2,4) (3,4); k=2 miss -> 2/5.
  const Adjacency a = graph(4, {{0, 1}, {1, 3}, {0, 2}, {2, 3}});
  EXPECT_DOUBLE_EQ(varsortability(a, vars({1, 2, 3, 4})), 1.0);
  EXPECT_DOUBLE_EQ(varsortability(a, vars({1, 2, 3, 0.5})), 2.0 / 5.0);
}

TEST(Varsortability, EmptyGraphIsNeutral) { EXPECT_DOUBLE_EQ(varsortability(Adjacency(3), vars({1, 2, 3})), 0.5); }

TEST(Varsortability, Errors) {
  EXPECT_THROW(varsortability(graph(2, {{0, 1}, {1, 0}}), vars({1, 2})), InvalidGraph);
  EXPECT_THROW(varsortability(graph(2, {{0, 1}}), vars({0, 2})), DegenerateData);
  EXPECT_THROW(varsortability(graph(2, {{0, 1}}), vars({1, 2, 3})), ShapeError);
}

TEST(Varsortability, AlwaysInUnitInterval) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.1, 5);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Eigen::VectorXd v(8);
    for (Eigen::Index k = 0; k < 8; ++k) v(k) = u(rng);
    const double nu = varsortability(sample_er_graph(8, 2.0, seed), v);
    EXPECT_GE(nu, 0.0);
    EXPECT_LE(nu, 1.0);
  }
}

TEST(Varsortability, MatchesClosurePairEnumeration) {
  // Independent count: enumerate pairs reachable by a walk of exactly k edges.
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const Adjacency a = sample_er_graph(7, 2.0, seed);
    const Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(7, 1.0, 7.0).reverse();
    const std::size_t d = 7;
    std::vector<std::vector<int>> reach(d, std::vector<int>(d, 0));  // reach[start][end] for current k
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) reach[j][i] = a.test(i, j);
    double hits = 0, total = 0;
    for (std::size_t k = 1; k < d; ++k) {
      std::vector<std::vector<int>> next(d, std::vector<int>(d, 0));
      for (std::size_t s = 0; s < d; ++s)
        for (std::size_t e = 0; e < d; ++e) {
          if (!reach[s][e]) continue;
          total += 1;
          hits += v(static_cast<Eigen::Index>(s)) < v(static_cast<Eigen::Index>(e)) ? 1.0 : 0.0;
          for (std::size_t f = 0; f < d; ++f)
            if (a.test(f, e)) next[s][f] = 1;
        }
      reach = next;
    }
    EXPECT_DOUBLE_EQ(varsortability(a, v), total > 0 ? hits / total : 0.5);
  }
}

TEST(Bic, EmptyGraphFormula) {
  const Dataset x = standardize(chain_data(1));
  const BicScore s = bic_linear_gaussian(Adjacency(3), x);
  const double n = 1000;
  // Standardized columns have biased variance exactly 1.
  const double per_node = -(n / 2) * (std::log(2 * std::numbers::pi) + 1);
  EXPECT_NEAR(s.log_likelihood, 3 * per_node, 1e-6);
  EXPECT_EQ(s.parameters, 3u);
  EXPECT_NEAR(s.score, -2 * 3 * per_node + 3 * std::log(n), 1e-6);
  EXPECT_FALSE(s.ridge_used);
}

TEST(Bic, TrueChainBeatsReversedEdge) {
  // A reversal that changes the skeleton's v-structures: 1->2<-3 versus 1->2->3.
  const Dataset x = chain_data(2);
  const double truth = bic_linear_gaussian(graph(3, {{0, 1}, {1, 2}}), x).score;
  const double collider = bic_linear_gaussian(graph(3, {{0, 1}, {2, 1}}), x).score;
  EXPECT_LT(truth, collider);
}

TEST(Bic, SpuriousParentCostsAboutLogN) {
  double mean_delta = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Dataset x = chain_data(100 + seed);
    // Fourth, independent column.
    Eigen::MatrixXd wide(x.x.rows(), 4);
    wide.leftCols(3) = x.x;
    wide.col(3) = simulate_sem(sample_weights(Adjacency(1 + 1), 1), 1000, {NoiseKind::kGaussian, 1.0}, 900 + seed)
                      .x.col(0);
    const Dataset w{wide, default_column_names(4)};
    const double base = bic_linear_gaussian(graph(4, {{0, 1}, {1, 2}}), w).score;
    const double extra = bic_linear_gaussian(graph(4, {{0, 1}, {1, 2}, {3, 2}}), w).score;
    EXPECT_NEAR(extra - base, std::log(1000.0), 12.0);
    mean_delta += (extra - base) / 20;
  }
  // Mean of log n - chi2_1 is log n - 1.
  EXPECT_NEAR(mean_delta, std::log(1000.0) - 1.0, 2.0);
}

TEST(Bic, PenaltyMonotoneUnderNesting) {
  // Columns a and b are centred and exactly orthogonal, so adding b as a
  // parent of a leaves the fit unchanged and costs exactly log n.
  Eigen::MatrixXd m(4, 2);
  m << 1, 1, -1, 1, 1, -1, -1, -1;
  const Dataset x{m, default_column_names(2)};
  const BicScore small = bic_linear_gaussian(Adjacency(2), x);
  const BicScore big = bic_linear_gaussian(graph(2, {{1, 0}}), x);
  EXPECT_NEAR(big.log_likelihood, small.log_likelihood, 1e-12);
  EXPECT_NEAR(big.score - small.score, std::log(4.0), 1e-12);
}

TEST(Bic, RankDeficientDesignUsesRidge) {
  Eigen::MatrixXd m(50, 3);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  for (Eigen::Index r = 0; r < 50; ++r) {
    m(r, 0) = nd(rng);
    m(r, 1) = 2 * m(r, 0);
    m(r, 2) = m(r, 0) + nd(rng);
  }
  const BicScore s = bic_linear_gaussian(graph(3, {{0, 2}, {1, 2}}), {m, default_column_names(3)});
  EXPECT_TRUE(s.ridge_used);
  EXPECT_TRUE(std::isfinite(s.score));
}

TEST(Bic, Errors) {
  const Dataset x = chain_data(3, 3);
  EXPECT_THROW(bic_linear_gaussian(graph(3, {{0, 2}, {1, 2}}), x), DegenerateData);
  EXPECT_THROW(bic_linear_gaussian(graph(3, {{0, 1}, {1, 0}}), chain_data(3)), InvalidGraph);
}

TEST(Reward, PerfectVarianceSortGivesScale) {
  const Dataset x = chain_data(4);
  const Eigen::VectorXd v = column_variances(x.x);
  ASSERT_LT(v(0), v(1));
  ASSERT_LT(v(0), v(2));
  // Sort nodes by variance; the chain built in that order is perfectly sorted.
  std::vector<std::size_t> order{0, 1, 2};
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return v(static_cast<Eigen::Index>(a)) < v(static_cast<Eigen::Index>(b)); });
  const auto s = state(3, {{order[0], order[1]}, {order[1], order[2]}});
  EXPECT_DOUBLE_EQ(reward(s, x, {RewardKind::kVarsortability, 1.0, 0}), 1.0);
  EXPECT_DOUBLE_EQ(reward(s, x, {RewardKind::kVarsortability, 100.0, 0}), 100.0);
}

TEST(Reward, DependsOnlyOnTopologicalSort) {
  const Dataset x = chain_data(5);
  const RewardFunction r(x, {RewardKind::kBic, 100, 0});
  const auto chain = state(3, {{0, 1}, {1, 2}});
  const auto full = state(3, {{0, 2}, {1, 2}, {0, 1}});
  EXPECT_EQ(r(chain), r(full));
  const RewardFunction rv(x, {RewardKind::kVarsortability, 100, 0});
  EXPECT_EQ(rv(chain), rv(full));
}

TEST(Reward, BicRatioFollowsScores) {
  const Dataset x = chain_data(6);
  const double tau = 500;
  const RewardFunction r(x, {RewardKind::kBic, 100, tau});
  const auto s1 = state(3, {{0, 1}, {1, 2}});
  const auto s2 = state(3, {{2, 1}, {1, 0}});
  const double b1 = bic_linear_gaussian(induced_full_dag(s1), x).score;
  const double b2 = bic_linear_gaussian(induced_full_dag(s2), x).score;
  EXPECT_NEAR(r(s1) / r(s2), std::exp((b2 - b1) / tau), 1e-9 * std::exp((b2 - b1) / tau));
  EXPECT_GT(r(s1), 0.0);
}

TEST(Reward, DefaultTemperatureIsNTimesD) {
  const Dataset x = chain_data(7);
  const RewardFunction r(x, {RewardKind::kBic, 100, 0});
  EXPECT_DOUBLE_EQ(r.config().temperature, 3000.0);
}

TEST(Reward, NotIdentifiedThrows) {
  const Dataset x = chain_data(8);
  EXPECT_THROW(reward(state(3, {{0, 1}}), x, {}), NotIdentified);
}

TEST(RewardConfig, Validation) {
  EXPECT_THROW((RewardConfig{RewardKind::kVarsortability, 0.0, 0}).validate(), InvalidParameter);
  EXPECT_THROW((RewardConfig{RewardKind::kBic, 1.0, -1}).validate(), InvalidParameter);
  EXPECT_THROW(reward_kind_from_string("cam"), InvalidParameter);
}

}  // namespace
}  // namespace gfc
