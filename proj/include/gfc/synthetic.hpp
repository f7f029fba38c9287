#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gfc/bit_matrix.hpp"
#include "gfc/errors.hpp"
#include "gfc/graph_state.hpp"

namespace gfc {

/// Ground truth for a linear SEM. W(i, j) != 0 iff edge j -> i.
struct WeightedGraph {
  Adjacency adjacency;
  Eigen::MatrixXd weights;

  std::size_t d() const noexcept { return adjacency.size(); }
};

/// n x d observations, one column per variable.
struct Dataset {
  Eigen::MatrixXd x;
  std::vector<std::string> names;

  std::size_t n() const noexcept { return static_cast<std::size_t>(x.rows()); }
  std::size_t d() const noexcept { return static_cast<std::size_t>(x.cols()); }
};

enum class NoiseKind { kGaussian, kGumbel };

struct NoiseSpec {
  NoiseKind kind = NoiseKind::kGaussian;
  double scale = 1.0;
};

inline std::string to_string(NoiseKind k) { return k == NoiseKind::kGaussian ? "gaussian" : "gumbel"; }

inline NoiseKind noise_kind_from_string(const std::string& s) {
  if (s == "gaussian") return NoiseKind::kGaussian;
  if (s == "gumbel") return NoiseKind::kGumbel;
  throw InvalidParameter("unknown noise kind '" + s + "'");
}

inline std::vector<std::string> default_column_names(std::size_t d) {
  std::vector<std::string> names;
  names.reserve(d);
  for (std::size_t i = 0; i < d; ++i) names.push_back("x" + std::to_string(i + 1));
  return names;
}

/// Erdos-Renyi DAG with on average beta*d edges.
///
/// Nodes are put in a uniformly random order and every pair (earlier, later)
/// becomes an edge earlier -> later with probability beta*d / (d(d-1)/2).
inline Adjacency sample_er_graph(std::size_t d, double beta, std::uint64_t seed) {
  if (d < 2) throw InvalidDimension("ER graph needs d >= 2");
  const double pairs = static_cast<double>(max_edges(d));
  if (!(beta >= 1.0) || beta * static_cast<double>(d) > pairs)
    throw InvalidDensity("beta*d must lie in [d, d(d-1)/2]");
  const double p = beta * static_cast<double>(d) / pairs;

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> perm(d);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  Adjacency a(d);
  for (std::size_t later = 1; later < d; ++later)
    for (std::size_t earlier = 0; earlier < later; ++earlier)
      if (p >= 1.0 || unif(rng) < p) a.set(perm[later], perm[earlier]);
  return a;
}

/// Scale-free DAG by preferential attachment.
///
/// Node k (in insertion order) receives min(beta, k) edges from distinct
/// existing nodes, each chosen with probability proportional to degree + 1.
/// Edges always point old -> new. Labels are shuffled afterwards so the
/// index order carries no causal information.
inline Adjacency sample_sf_graph(std::size_t d, std::size_t beta, std::uint64_t seed) {
  if (d < 2) throw InvalidDimension("SF graph needs d >= 2");
  if (beta < 1 || beta >= d) throw InvalidParameter("SF attachment count must satisfy 1 <= beta < d");

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> degree(d, 0);
  std::vector<std::pair<std::size_t, std::size_t>> edges;  // (old, new)
  for (std::size_t k = 1; k < d; ++k) {
    const std::size_t m = std::min(beta, k);
    std::vector<bool> taken(k, false);
    for (std::size_t e = 0; e < m; ++e) {
      double total = 0;
      for (std::size_t v = 0; v < k; ++v)
        if (!taken[v]) total += static_cast<double>(degree[v] + 1);
      double u = std::uniform_real_distribution<double>(0.0, total)(rng);
      std::size_t pick = k;
      for (std::size_t v = 0; v < k; ++v) {
        if (taken[v]) continue;
        pick = v;
        u -= static_cast<double>(degree[v] + 1);
        if (u < 0) break;
      }
      taken[pick] = true;
      edges.push_back({pick, k});
    }
    for (std::size_t v = 0; v < k; ++v)
      if (taken[v]) ++degree[v];
    degree[k] += m;
  }

  std::vector<std::size_t> label(d);
  std::iota(label.begin(), label.end(), std::size_t{0});
  std::shuffle(label.begin(), label.end(), rng);
  Adjacency a(d);
  for (const auto& [from, to] : edges) a.set(label[to], label[from]);
  return a;
}

inline bool is_acyclic(const Adjacency& a) {
  try {
    (void)state_from_adjacency(a);
    return true;
  } catch (const InvalidGraph&) {
    return false;
  }
}

/// Weights uniform on [-2, -0.5] U [0.5, 2] for every edge.
inline WeightedGraph sample_weights(const Adjacency& a, std::uint64_t seed) {
  if (!is_acyclic(a)) throw InvalidGraph("weights can only be assigned to a DAG");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> mag(0.5, 2.0);
  std::bernoulli_distribution negative(0.5);
  const auto d = static_cast<Eigen::Index>(a.size());
  WeightedGraph g{a, Eigen::MatrixXd::Zero(d, d)};
  a.for_each_set([&](std::size_t i, std::size_t j) {
    const double m = mag(rng);
    g.weights(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = negative(rng) ? -m : m;
  });
  return g;
}

/// Any topological order of a DAG (Kahn, smallest index first).
inline std::vector<std::size_t> causal_order(const Adjacency& a) {
  const std::size_t d = a.size();
  std::vector<std::size_t> indeg(d, 0);
  for (std::size_t i = 0; i < d; ++i) indeg[i] = a.row_count(i);
  std::vector<std::size_t> order;
  std::vector<bool> done(d, false);
  while (order.size() < d) {
    std::size_t next = d;
    for (std::size_t v = 0; v < d; ++v)
      if (!done[v] && indeg[v] == 0) {
        next = v;
        break;
      }
    if (next == d) throw InvalidGraph("graph has a cycle");
    done[next] = true;
    order.push_back(next);
    for (std::size_t c = 0; c < d; ++c)
      if (a.test(c, next)) --indeg[c];
  }
  return order;
}

/// Samples n rows of x_i = sum_j W(i, j) x_j + e_i in causal order.
inline Dataset simulate_sem(const WeightedGraph& g, std::size_t n, const NoiseSpec& noise, std::uint64_t seed) {
  if (n < 1) throw InvalidParameter("sample count must be positive");
  if (!(noise.scale > 0)) throw InvalidParameter("noise scale must be positive");
  const std::size_t d = g.d();
  const auto rows = static_cast<Eigen::Index>(n);
  std::mt19937_64 rng(seed);

  Eigen::MatrixXd e(rows, static_cast<Eigen::Index>(d));
  if (noise.kind == NoiseKind::kGaussian) {
    std::normal_distribution<double> dist(0.0, noise.scale);
    for (Eigen::Index c = 0; c < e.cols(); ++c)
      for (Eigen::Index r = 0; r < rows; ++r) e(r, c) = dist(rng);
  } else {
    std::extreme_value_distribution<double> dist(0.0, noise.scale);
    for (Eigen::Index c = 0; c < e.cols(); ++c)
      for (Eigen::Index r = 0; r < rows; ++r) e(r, c) = dist(rng);
  }

  Dataset ds{Eigen::MatrixXd::Zero(rows, static_cast<Eigen::Index>(d)), default_column_names(d)};
  for (std::size_t node : causal_order(g.adjacency)) {
    const auto i = static_cast<Eigen::Index>(node);
    Eigen::VectorXd col = e.col(i);
    g.adjacency.for_each_set_in_row(node, [&](std::size_t parent) {
      const auto j = static_cast<Eigen::Index>(parent);
      col += g.weights(i, j) * ds.x.col(j);
    });
    ds.x.col(i) = col;
  }
  return ds;
}

/// Population (biased) variance of every column.
inline Eigen::VectorXd column_variances(const Eigen::MatrixXd& x) {
  const Eigen::RowVectorXd mean = x.colwise().mean();
  return ((x.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(x.rows())).transpose();
}

/// Zero mean, unit variance columns.
inline Dataset standardize(Dataset ds) {
  const Eigen::RowVectorXd mean = ds.x.colwise().mean();
  const Eigen::VectorXd var = column_variances(ds.x);
  for (Eigen::Index c = 0; c < ds.x.cols(); ++c) {
    if (!(var(c) > 0)) throw DegenerateData("cannot standardize a constant column");
    ds.x.col(c) = (ds.x.col(c).array() - mean(c)) / std::sqrt(var(c));
  }
  return ds;
}

/// CSV with a header row of column names followed by n rows.
inline void write_dataset_csv(std::ostream& os, const Dataset& ds) {
  for (std::size_t c = 0; c < ds.d(); ++c) os << (c ? "," : "") << ds.names[c];
  os << '\n' << std::setprecision(17);
  for (Eigen::Index r = 0; r < ds.x.rows(); ++r) {
    for (Eigen::Index c = 0; c < ds.x.cols(); ++c) os << (c ? "," : "") << ds.x(r, c);
    os << '\n';
  }
}

inline Dataset read_dataset_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ParseError("dataset CSV is empty");
  Dataset ds;
  {
    std::istringstream hs(line);
    std::string name;
    while (std::getline(hs, name, ',')) ds.names.push_back(name);
  }
  const std::size_t d = ds.names.size();
  std::vector<double> values;
  std::size_t rows = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::size_t cols = 0;
    while (std::getline(ls, cell, ',')) {
      try {
        values.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ParseError("dataset CSV row " + std::to_string(rows + 1) + ": bad number '" + cell + "'");
      }
      ++cols;
    }
    if (cols != d) throw ParseError("dataset CSV row " + std::to_string(rows + 1) + " has wrong column count");
    ++rows;
  }
  ds.x.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(d));
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < d; ++c)
      ds.x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = values[r * d + c];
  if (!ds.x.allFinite()) throw ParseError("dataset contains non-finite values");
  return ds;
}

inline void save_dataset_csv(const std::filesystem::path& p, const Dataset& ds) {
  std::ofstream os(p);
  if (!os) throw ParseError("cannot open " + p.string() + " for writing");
  write_dataset_csv(os, ds);
}

inline Dataset load_dataset_csv(const std::filesystem::path& p) {
  std::ifstream is(p);
  if (!is) throw ParseError("cannot open " + p.string());
  return read_dataset_csv(is);
}

}  // namespace gfc
