#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gfc/bit_matrix.hpp"
#include "gfc/errors.hpp"
#include "gfc/graph_state.hpp"
#include "gfc/regression.hpp"
#include "gfc/synthetic.hpp"

namespace gfc {

enum class RewardKind { kVarsortability, kBic };

inline std::string to_string(RewardKind k) { return k == RewardKind::kBic ? "bic" : "varsortability"; }

inline RewardKind reward_kind_from_string(const std::string& s) {
  if (s == "varsortability") return RewardKind::kVarsortability;
  if (s == "bic") return RewardKind::kBic;
  throw InvalidParameter("unknown reward kind '" + s + "'");
}

struct RewardConfig {
  RewardKind kind = RewardKind::kVarsortability;
  double scale = 100.0;       // c, varsortability only
  double temperature = 0.0;   // tau, bic only; <= 0 means n * d

  void validate() const {
    if (kind == RewardKind::kVarsortability && !(scale > 0)) throw InvalidParameter("reward scale must be positive");
    if (kind == RewardKind::kBic && temperature < 0) throw InvalidParameter("temperature must be positive");
  }
};

/// Fraction of (path length, start, end) triples whose start has strictly
/// lower marginal variance than the end; ties count one half.
///
/// A triple (k, j, i) is counted when the k-th boolean power of A links
/// j to i, k = 1..d-1. A graph without edges has no paths and scores 1/2.
inline double varsortability(const Adjacency& a, const Eigen::VectorXd& variances) {
  const std::size_t d = a.size();
  if (static_cast<std::size_t>(variances.size()) != d) throw ShapeError("variance vector length differs from d");
  if (!is_acyclic(a)) throw InvalidGraph("varsortability needs a DAG");
  for (Eigen::Index c = 0; c < variances.size(); ++c)
    if (!(variances(c) > 0)) throw DegenerateData("column " + std::to_string(c) + " has zero variance");

  double hits = 0;
  double total = 0;
  BitMatrix power = a;
  for (std::size_t k = 1; k < d && !power.none(); ++k) {
    power.for_each_set([&](std::size_t end, std::size_t start) {
      const double vs = variances(static_cast<Eigen::Index>(start));
      const double ve = variances(static_cast<Eigen::Index>(end));
      hits += vs < ve ? 1.0 : (vs == ve ? 0.5 : 0.0);
      total += 1.0;
    });
    // (P A)(i, c) = OR_j P(i, j) A(j, c): row i of the next power is the OR
    // of the adjacency rows of every j set in row i.
    BitMatrix next(d);
    for (std::size_t i = 0; i < d; ++i) {
      auto dst = next.row(i);
      power.for_each_set_in_row(i, [&](std::size_t j) {
        const auto src = a.row(j);
        for (std::size_t w = 0; w < dst.size(); ++w) dst[w] |= src[w];
      });
    }
    power = std::move(next);
  }
  return total > 0 ? hits / total : 0.5;
}

inline double varsortability(const Adjacency& a, const Dataset& x) {
  if (x.d() != a.size()) throw ShapeError("dataset column count differs from d");
  return varsortability(a, column_variances(x.x));
}

struct BicScore {
  double score = 0;          // -2 log L + |theta| log n, lower is better
  double log_likelihood = 0;
  std::size_t parameters = 0;
  bool ridge_used = false;
};

/// Linear-Gaussian BIC from a precomputed column-centred data matrix.
inline BicScore bic_linear_gaussian_centered(const Adjacency& a, const Eigen::MatrixXd& xc) {
  const std::size_t d = a.size();
  if (static_cast<std::size_t>(xc.cols()) != d) throw ShapeError("dataset column count differs from d");
  if (!is_acyclic(a)) throw InvalidGraph("BIC needs a DAG");
  const auto n = static_cast<double>(xc.rows());
  BicScore out;
  std::vector<std::size_t> parents;
  for (std::size_t i = 0; i < d; ++i) {
    parents.clear();
    a.for_each_set_in_row(i, [&](std::size_t j) { parents.push_back(j); });
    if (xc.rows() <= static_cast<Eigen::Index>(parents.size() + 1))
      throw DegenerateData("not enough samples for node " + std::to_string(i));
    const OlsFit fit = ols(xc, i, parents);
    out.ridge_used = out.ridge_used || fit.ridge_used;
    const double sigma2 = fit.rss / n;
    out.log_likelihood += -0.5 * n * (std::log(2.0 * std::numbers::pi * sigma2) + 1.0);
    out.parameters += parents.size() + 1;
  }
  out.score = -2.0 * out.log_likelihood + static_cast<double>(out.parameters) * std::log(n);
  return out;
}

inline BicScore bic_linear_gaussian(const Adjacency& a, const Dataset& x) {
  return bic_linear_gaussian_centered(a, centered(x.x));
}

/// Terminal-state reward evaluated on the fully-connected DAG of an identified state.
///
/// Caches the statistics of the dataset so repeated calls during training do
/// not recompute variances or centring.
class RewardFunction {
 public:
  RewardFunction(const Dataset& x, RewardConfig cfg)
      : cfg_(cfg), variances_(column_variances(x.x)), centered_(centered(x.x)) {
    cfg_.validate();
    if (cfg_.kind == RewardKind::kBic && !(cfg_.temperature > 0))
      cfg_.temperature = static_cast<double>(x.n() * x.d());
  }

  const RewardConfig& config() const noexcept { return cfg_; }

  /// Reward of an arbitrary DAG.
  double score_graph(const Adjacency& full) const {
    if (cfg_.kind == RewardKind::kVarsortability) return cfg_.scale * varsortability(full, variances_);
    return std::exp(-bic_linear_gaussian_centered(full, centered_).score / cfg_.temperature);
  }

  double operator()(const BuilderState& terminal) const { return score_graph(induced_full_dag(terminal)); }

 private:
  RewardConfig cfg_;
  Eigen::VectorXd variances_;
  Eigen::MatrixXd centered_;
};

inline double reward(const BuilderState& terminal, const Dataset& x, const RewardConfig& cfg) {
  return RewardFunction(x, cfg)(terminal);
}

}  // namespace gfc
