#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "gfc/oracle.hpp"
#include "gfc/regression.hpp"
#include "gfc/synthetic.hpp"
#include "support.hpp"

namespace gfc {
namespace {

std::size_t max_total_degree(const Adjacency& a) {
  std::vector<std::size_t> deg(a.size(), 0);
  a.for_each_set([&](std::size_t i, std::size_t j) {
    ++deg[i];
    ++deg[j];
  });
  return *std::max_element(deg.begin(), deg.end());
}

TEST(ErGraph, MeanEdgeCount) {
  double total = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const Adjacency a = sample_er_graph(12, 2.0, seed);
    ASSERT_FALSE(oracle::has_cycle(oracle::to_dense(a)));
    total += static_cast<double>(a.count());
  }
  const double mean = total / 1000;
  EXPECT_GE(mean, 22.0);
  EXPECT_LE(mean, 26.0);
}

TEST(ErGraph, MaximalDensityIsComplete) {
  // beta*d = d(d-1)/2 with d = 7, beta = 3.
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Adjacency a = sample_er_graph(7, 3.0, seed);
    EXPECT_EQ(a.count(), 21u);
    EXPECT_TRUE(is_acyclic(a));
  }
}

TEST(ErGraph, InfeasibleDensity) {
  EXPECT_THROW(sample_er_graph(5, 0.5, 1), InvalidDensity);
  EXPECT_THROW(sample_er_graph(5, 3.0, 1), InvalidDensity);
  EXPECT_THROW(sample_er_graph(1, 1.0, 1), InvalidDimension);
}

TEST(ErGraph, SeedDeterminism) {
  EXPECT_EQ(sample_er_graph(20, 2.0, 7), sample_er_graph(20, 2.0, 7));
  EXPECT_NE(sample_er_graph(20, 2.0, 7), sample_er_graph(20, 2.0, 8));
}

TEST(SfGraph, TreeWhenBetaIsOne) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Adjacency a = sample_sf_graph(10, 1, seed);
    EXPECT_EQ(a.count(), 9u);
    EXPECT_TRUE(is_acyclic(a));
    // Connected: every node reachable from some root in the undirected sense.
    std::vector<std::size_t> comp(10);
    std::iota(comp.begin(), comp.end(), std::size_t{0});
    std::function<std::size_t(std::size_t)> find = [&](std::size_t v) {
      return comp[v] == v ? v : comp[v] = find(comp[v]);
    };
    a.for_each_set([&](std::size_t i, std::size_t j) { comp[find(i)] = find(j); });
    for (std::size_t v = 1; v < 10; ++v) EXPECT_EQ(find(v), find(0));
  }
}

TEST(SfGraph, EdgeCountAndAcyclicity) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Adjacency a = sample_sf_graph(30, 5, seed);
    EXPECT_EQ(a.count(), 5u * 25u + 10u);
    EXPECT_FALSE(oracle::has_cycle(oracle::to_dense(a)));
  }
}

TEST(SfGraph, HeavierTailThanEr) {
  // Old -> new edges cap in-degree at beta, so the hub shows up in total degree.
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const Adjacency sf = sample_sf_graph(30, 5, seed);
    const Adjacency er = sample_er_graph(30, static_cast<double>(sf.count()) / 30.0, seed + 1000);
    if (max_total_degree(sf) > max_total_degree(er)) ++wins;
  }
  EXPECT_GE(wins, 180);
}

TEST(SfGraph, RejectsBadBeta) {
  EXPECT_THROW(sample_sf_graph(5, 5, 1), InvalidParameter);
  EXPECT_THROW(sample_sf_graph(5, 0, 1), InvalidParameter);
}

TEST(Weights, MagnitudeRangeAndZeros) {
  const Adjacency a = sample_er_graph(15, 3.0, 4);
  const WeightedGraph g = sample_weights(a, 9);
  for (Eigen::Index i = 0; i < 15; ++i)
    for (Eigen::Index j = 0; j < 15; ++j) {
      const double w = g.weights(i, j);
      if (a.test(static_cast<std::size_t>(i), static_cast<std::size_t>(j))) {
        EXPECT_GE(std::abs(w), 0.5);
        EXPECT_LE(std::abs(w), 2.0);
      } else {
        EXPECT_EQ(w, 0.0);
      }
    }
  EXPECT_TRUE(sample_weights(Adjacency(4), 1).weights.isZero());
}

TEST(Weights, SignBalance) {
  std::size_t negative = 0, total = 0;
  for (std::uint64_t seed = 0; total < 10000; ++seed) {
    const WeightedGraph g = sample_weights(sample_er_graph(20, 5.0, seed), seed);
    for (Eigen::Index k = 0; k < g.weights.size(); ++k)
      if (g.weights(k) != 0) {
        ++total;
        negative += g.weights(k) < 0;
      }
  }
  const double frac = static_cast<double>(negative) / static_cast<double>(total);
  EXPECT_GE(frac, 0.47);
  EXPECT_LE(frac, 0.53);
}

TEST(Weights, RejectsCycles) {
  EXPECT_THROW(sample_weights(testing::graph(3, {{0, 1}, {1, 2}, {2, 0}}), 1), InvalidGraph);
}

TEST(Sem, PureNoiseHasZeroMean) {
  const WeightedGraph g = sample_weights(Adjacency(4), 1);
  const Dataset x = simulate_sem(g, 10000, {NoiseKind::kGaussian, 1.0}, 3);
  const Eigen::RowVectorXd mean = x.x.colwise().mean();
  for (Eigen::Index c = 0; c < 4; ++c) EXPECT_LT(std::abs(mean(c)), 0.05);
}

TEST(Sem, SingleEdgeVariance) {
  WeightedGraph g{testing::graph(2, {{0, 1}}), Eigen::MatrixXd::Zero(2, 2)};
  g.weights(1, 0) = 1.0;
  const Dataset x = simulate_sem(g, 10000, {NoiseKind::kGaussian, 1.0}, 5);
  const double v = column_variances(x.x)(1);
  EXPECT_GE(v, 1.85);
  EXPECT_LE(v, 2.15);
}

TEST(Sem, Deterministic) {
  const WeightedGraph g = sample_weights(sample_er_graph(8, 2.0, 1), 2);
  const Dataset a = simulate_sem(g, 200, {NoiseKind::kGumbel, 1.0}, 3);
  const Dataset b = simulate_sem(g, 200, {NoiseKind::kGumbel, 1.0}, 3);
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(a.names, (std::vector<std::string>{"x1", "x2", "x3", "x4", "x5", "x6", "x7", "x8"}));
}

TEST(Sem, OlsRecoversWeights) {
  const WeightedGraph g = sample_weights(sample_er_graph(8, 2.0, 21), 22);
  const Dataset x = simulate_sem(g, 10000, {NoiseKind::kGaussian, 1.0}, 23);
  const Eigen::MatrixXd xc = centered(x.x);
  for (std::size_t i = 0; i < 8; ++i) {
    std::vector<std::size_t> parents;
    g.adjacency.for_each_set_in_row(i, [&](std::size_t j) { parents.push_back(j); });
    const OlsFit fit = ols(xc, i, parents);
    for (std::size_t k = 0; k < parents.size(); ++k)
      EXPECT_NEAR(fit.coef(static_cast<Eigen::Index>(k)),
                  g.weights(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(parents[k])), 0.1);
  }
}

TEST(Sem, IndependentColumnsAreUncorrelated) {
  const Dataset x = simulate_sem(sample_weights(Adjacency(5), 1), 10000, {NoiseKind::kGaussian, 1.0}, 31);
  const Eigen::MatrixXd xc = centered(x.x);
  const Eigen::MatrixXd cov = xc.transpose() * xc;
  for (Eigen::Index i = 0; i < 5; ++i)
    for (Eigen::Index j = i + 1; j < 5; ++j) EXPECT_LT(std::abs(cov(i, j) / std::sqrt(cov(i, i) * cov(j, j))), 0.05);
}

TEST(Sem, GumbelNoiseMoments) {
  // Location 0, scale b: mean = b * Euler-Mascheroni, variance = (pi b)^2 / 6.
  const Dataset x = simulate_sem(sample_weights(Adjacency(2), 1), 20000, {NoiseKind::kGumbel, 2.0}, 41);
  EXPECT_NEAR(x.x.col(0).mean(), 2.0 * 0.5772156649, 0.05);
  EXPECT_NEAR(column_variances(x.x)(0), std::pow(std::numbers::pi * 2.0, 2) / 6.0, 0.3);
}

TEST(Sem, RejectsBadArguments) {
  const WeightedGraph g = sample_weights(Adjacency(2), 1);
  EXPECT_THROW(simulate_sem(g, 0, {NoiseKind::kGaussian, 1.0}, 1), InvalidParameter);
  EXPECT_THROW(simulate_sem(g, 10, {NoiseKind::kGaussian, 0.0}, 1), InvalidParameter);
}

TEST(Dataset, StandardizeAndCsvRoundTrip) {
  const WeightedGraph g = sample_weights(sample_er_graph(5, 1.0, 2), 3);
  const Dataset x = standardize(simulate_sem(g, 300, {NoiseKind::kGaussian, 1.0}, 4));
  const Eigen::VectorXd v = column_variances(x.x);
  for (Eigen::Index c = 0; c < 5; ++c) EXPECT_NEAR(v(c), 1.0, 1e-12);
  std::stringstream ss;
  write_dataset_csv(ss, x);
  const Dataset back = read_dataset_csv(ss);
  EXPECT_EQ(back.names, x.names);
  EXPECT_EQ(back.x, x.x);
}

TEST(Dataset, CsvErrors) {
  std::stringstream bad_count("x1,x2\n1,2\n3\n");
  EXPECT_THROW(read_dataset_csv(bad_count), ParseError);
  std::stringstream bad_number("x1\nfoo\n");
  EXPECT_THROW(read_dataset_csv(bad_number), ParseError);
  std::stringstream empty("");
  EXPECT_THROW(read_dataset_csv(empty), ParseError);
}

TEST(CausalOrder, RespectsEdges) {
  const Adjacency a = sample_er_graph(15, 3.0, 17);
  const auto order = causal_order(a);
  std::vector<std::size_t> pos(15);
  for (std::size_t k = 0; k < 15; ++k) pos[order[k]] = k;
  a.for_each_set([&](std::size_t child, std::size_t parent) { EXPECT_LT(pos[parent], pos[child]); });
}

}  // namespace
}  // namespace gfc
