#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gfc/bit_matrix.hpp"
#include "gfc/errors.hpp"

namespace gfc {

/// Edge list text format.
///
///   # d <node count>
///   <from> <to> <weight>
///   ...
///
/// Node indices are 0-based. Binary graphs carry weight 1. Lines starting with
/// '#' other than the header are ignored.
struct EdgeList {
  std::size_t d = 0;
  struct Edge {
    std::size_t from;
    std::size_t to;
    double weight;
  };
  std::vector<Edge> edges;
};

inline EdgeList to_edge_list(const Adjacency& a) {
  EdgeList out{a.size(), {}};
  a.for_each_set([&](std::size_t child, std::size_t parent) { out.edges.push_back({parent, child, 1.0}); });
  return out;
}

inline EdgeList to_edge_list(const Eigen::MatrixXd& w) {
  EdgeList out{static_cast<std::size_t>(w.rows()), {}};
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      if (w(i, j) != 0.0)
        out.edges.push_back({static_cast<std::size_t>(j), static_cast<std::size_t>(i), w(i, j)});
  return out;
}

inline Adjacency to_adjacency(const EdgeList& el) {
  Adjacency a(el.d);
  for (const auto& e : el.edges) a.set(e.to, e.from);
  return a;
}

inline void write_edge_list(std::ostream& os, const EdgeList& el) {
  os << "# d " << el.d << '\n';
  os << std::setprecision(17);
  for (const auto& e : el.edges) os << e.from << ' ' << e.to << ' ' << e.weight << '\n';
}

inline EdgeList read_edge_list(std::istream& is) {
  EdgeList el;
  bool have_d = false;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    if (line[0] == '#') {
      std::string hash, tag;
      std::size_t d = 0;
      if (ls >> hash >> tag >> d && tag == "d") {
        el.d = d;
        have_d = true;
      }
      continue;
    }
    EdgeList::Edge e{};
    if (!(ls >> e.from >> e.to >> e.weight))
      throw ParseError("edge list line " + std::to_string(lineno) + ": expected 'from to weight'");
    el.edges.push_back(e);
  }
  if (!have_d) throw ParseError("edge list is missing the '# d <n>' header");
  for (const auto& e : el.edges)
    if (e.from >= el.d || e.to >= el.d || e.from == e.to)
      throw ParseError("edge list contains an out-of-range or self-loop edge");
  return el;
}

inline void save_edge_list(const std::filesystem::path& p, const EdgeList& el) {
  std::ofstream os(p);
  if (!os) throw ParseError("cannot open " + p.string() + " for writing");
  write_edge_list(os, el);
}

inline EdgeList load_edge_list(const std::filesystem::path& p) {
  std::ifstream is(p);
  if (!is) throw ParseError("cannot open " + p.string());
  return read_edge_list(is);
}

/// Header-free d x d CSV.
inline void write_dense_csv(std::ostream& os, const Adjacency& a) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < a.size(); ++j) os << (j ? "," : "") << (a.test(i, j) ? 1 : 0);
    os << '\n';
  }
}

inline void write_dense_csv(std::ostream& os, const Eigen::MatrixXd& w) {
  os << std::setprecision(17);
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    for (Eigen::Index j = 0; j < w.cols(); ++j) os << (j ? "," : "") << w(i, j);
    os << '\n';
  }
}

}  // namespace gfc
