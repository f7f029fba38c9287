#pragma once

#include <cstddef>
#include <filesystem>
#include <initializer_list>
#include <random>
#include <string>
#include <utility>

#include "gfc/bit_matrix.hpp"
#include "gfc/graph_state.hpp"
#include "gfc/oracle.hpp"

namespace gfc::testing {

/// Adjacency from (from, to) pairs, 0-based.
inline Adjacency graph(std::size_t d, std::initializer_list<std::pair<std::size_t, std::size_t>> edges) {
  Adjacency a(d);
  for (auto [from, to] : edges) a.set(to, from);
  return a;
}

inline BuilderState state(std::size_t d, std::initializer_list<std::pair<std::size_t, std::size_t>> edges) {
  BuilderState s = new_state(d);
  for (auto [from, to] : edges) s.apply({from, to});
  return s;
}

/// Uniform random walk under `mode` until terminal, calling fn(state) on every state.
template <typename Fn>
void random_walk(std::size_t d, SamplingCase mode, std::mt19937_64& rng, Fn&& fn) {
  BuilderState s = new_state(d);
  fn(s);
  while (!is_terminal(s, mode)) {
    const auto acts = allowed_actions(s, mode);
    s.apply(acts[std::uniform_int_distribution<std::size_t>(0, acts.size() - 1)(rng)]);
    fn(s);
  }
}

inline bool closure_matches_oracle(const BuilderState& s) {
  return oracle::equals(oracle::reachability_floyd_warshall(oracle::to_dense(s.adjacency())), s.closure());
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("gfc_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

}  // namespace gfc::testing
