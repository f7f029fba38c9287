#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "gfc/bit_matrix.hpp"
#include "gfc/errors.hpp"
#include "gfc/regression.hpp"
#include "gfc/synthetic.hpp"

namespace gfc {

struct PruneResult {
  Adjacency graph;
  bool ridge_used = false;  // some node's regression fell back to ridge
  bool converged = true;    // lasso only
};

namespace detail {

inline void check_prune_inputs(const Adjacency& full, const Dataset& x) {
  if (x.d() != full.size()) throw ShapeError("dataset column count differs from graph size");
  if (!is_acyclic(full)) throw InvalidGraph("pruning needs a DAG");
}

inline std::vector<std::size_t> parents_of(const Adjacency& a, std::size_t node) {
  std::vector<std::size_t> p;
  a.for_each_set_in_row(node, [&](std::size_t j) { p.push_back(j); });
  return p;
}

}  // namespace detail

/// Regresses every node on its parents and drops edges with |coefficient| < omega.
inline PruneResult prune_threshold(const Adjacency& full, const Dataset& x, double omega) {
  if (!(omega >= 0)) throw InvalidParameter("omega must be non-negative");
  detail::check_prune_inputs(full, x);
  const Eigen::MatrixXd xc = centered(x.x);
  PruneResult out{Adjacency(full.size())};
  for (std::size_t i = 0; i < full.size(); ++i) {
    const auto parents = detail::parents_of(full, i);
    if (parents.empty()) continue;
    const OlsFit fit = ols(xc, i, parents);
    out.ridge_used = out.ridge_used || fit.ridge_used;
    for (std::size_t k = 0; k < parents.size(); ++k)
      if (!(std::abs(fit.coef(static_cast<Eigen::Index>(k))) < omega)) out.graph.set(i, parents[k]);
  }
  return out;
}

/// L1-penalised regression of every node on its parents; zero coefficients are dropped.
inline PruneResult prune_lasso(const Adjacency& full, const Dataset& x, double lambda) {
  if (!(lambda >= 0)) throw InvalidParameter("lambda must be non-negative");
  detail::check_prune_inputs(full, x);
  const Eigen::MatrixXd xc = centered(x.x);
  PruneResult out{Adjacency(full.size())};
  for (std::size_t i = 0; i < full.size(); ++i) {
    const auto parents = detail::parents_of(full, i);
    if (parents.empty()) continue;
    const LassoFit fit = lasso(xc, i, parents, lambda);
    out.converged = out.converged && fit.converged;
    for (std::size_t k = 0; k < parents.size(); ++k)
      if (fit.coef(static_cast<Eigen::Index>(k)) != 0.0) out.graph.set(i, parents[k]);
  }
  return out;
}

struct MetricReport {
  double tpr = 0;
  double fdr = 0;
  std::size_t shd = 0;
  std::optional<double> e_shd;
  std::optional<double> auroc;

  nlohmann::json to_json() const {
    nlohmann::json j = {{"tpr", tpr}, {"fdr", fdr}, {"shd", shd}};
    if (e_shd) j["e_shd"] = *e_shd;
    if (auroc) j["auroc"] = *auroc;
    return j;
  }
};

/// Structural Hamming distance: unordered pairs whose edge status differs.
/// A reversed edge is one differing pair and therefore counts once.
inline std::size_t shd(const Adjacency& pred, const Adjacency& truth) {
  if (pred.size() != truth.size()) throw ShapeError("graphs have different node counts");
  std::size_t out = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    for (std::size_t j = i + 1; j < pred.size(); ++j)
      if (pred.test(i, j) != truth.test(i, j) || pred.test(j, i) != truth.test(j, i)) ++out;
  return out;
}

/// TPR, FDR and SHD. Reversed edges are false discoveries, never true positives.
/// An empty truth gives TPR 1 (nothing to recover).
inline MetricReport compare(const Adjacency& pred, const Adjacency& truth) {
  if (pred.size() != truth.size()) throw ShapeError("graphs have different node counts");
  const std::size_t true_edges = truth.count();
  const std::size_t predicted = pred.count();
  const std::size_t hits = (pred & truth).count();
  MetricReport r;
  r.tpr = true_edges == 0 ? 1.0 : static_cast<double>(hits) / static_cast<double>(true_edges);
  r.fdr = static_cast<double>(predicted - hits) / static_cast<double>(std::max<std::size_t>(predicted, 1));
  r.shd = shd(pred, truth);
  return r;
}

inline double expected_shd(std::span<const Adjacency> samples, const Adjacency& truth) {
  if (samples.empty()) throw EmptyInput("expected SHD needs at least one sample");
  double total = 0;
  for (const auto& s : samples) total += static_cast<double>(shd(s, truth));
  return total / static_cast<double>(samples.size());
}

/// Mann-Whitney rank statistic with midranks for ties.
inline double auroc_from_scores(std::span<const double> scores, std::span<const bool> labels) {
  if (scores.size() != labels.size()) throw ShapeError("scores and labels differ in length");
  const std::size_t pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw UndefinedAuroc("AUROC needs both positive and negative pairs");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0;
  for (std::size_t start = 0; start < idx.size();) {
    std::size_t end = start;
    while (end < idx.size() && scores[idx[end]] == scores[idx[start]]) ++end;
    const double midrank = 0.5 * static_cast<double>(start + 1 + end);  // mean of ranks start+1..end
    for (std::size_t k = start; k < end; ++k)
      if (labels[idx[k]]) pos_rank_sum += midrank;
    start = end;
  }
  const double p = static_cast<double>(pos);
  return (pos_rank_sum - p * (p + 1) / 2) / (p * static_cast<double>(neg));
}

/// Edge marginal frequency per ordered pair across samples.
inline std::vector<double> edge_marginals(std::span<const Adjacency> samples) {
  if (samples.empty()) throw EmptyInput("edge marginals need at least one sample");
  const std::size_t d = samples.front().size();
  std::vector<double> freq(d * d, 0.0);
  for (const auto& s : samples) {
    if (s.size() != d) throw ShapeError("samples have different node counts");
    s.for_each_set([&](std::size_t i, std::size_t j) { freq[i * d + j] += 1.0; });
  }
  for (auto& f : freq) f /= static_cast<double>(samples.size());
  return freq;
}

/// AUROC of edge marginals over all d(d-1) ordered pairs against the truth.
inline double auroc(std::span<const Adjacency> samples, const Adjacency& truth) {
  const auto freq = edge_marginals(samples);
  const std::size_t d = truth.size();
  if (samples.front().size() != d) throw ShapeError("samples and truth differ in node count");
  std::vector<double> scores;
  std::vector<bool> labels_vec;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      if (i == j) continue;
      scores.push_back(freq[i * d + j]);
      labels_vec.push_back(truth.test(i, j));
    }
  // std::vector<bool> has no contiguous storage.
  const std::unique_ptr<bool[]> labels(new bool[labels_vec.size()]);
  std::copy(labels_vec.begin(), labels_vec.end(), labels.get());
  return auroc_from_scores(scores, std::span<const bool>(labels.get(), labels_vec.size()));
}

}  // namespace gfc
