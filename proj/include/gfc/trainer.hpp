#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "gfc/errors.hpp"
#include "gfc/flow_net.hpp"
#include "gfc/graph_state.hpp"
#include "gfc/postprocess.hpp"
#include "gfc/rewards.hpp"
#include "gfc/synthetic.hpp"

namespace gfc {

enum class LossSpace { kRawFlow, kLogFlow };

inline std::string to_string(LossSpace s) { return s == LossSpace::kRawFlow ? "raw" : "log"; }

inline LossSpace loss_space_from_string(const std::string& s) {
  if (s == "raw") return LossSpace::kRawFlow;
  if (s == "log") return LossSpace::kLogFlow;
  throw InvalidParameter("unknown loss space '" + s + "'");
}

struct TrainConfig {
  std::size_t d = 0;
  std::size_t batch = 64;
  std::size_t epochs = 5000;
  double lr = 1e-4;
  SamplingCase mode = SamplingCase::kIdentify;
  RewardConfig reward;
  std::uint64_t seed = 0;
  LossSpace loss_space = LossSpace::kLogFlow;
  double log_epsilon = 1e-8;
  std::size_t hidden = 256;
  FeatureMode features = FeatureMode::kAdjacency;
  // Exploration: fully uniform for the first `uniform_epochs`, then a mixture
  // (1 - epsilon_floor) * policy + epsilon_floor * uniform.
  std::size_t uniform_epochs = 500;
  double epsilon_floor = 0.05;
  std::size_t workers = 1;
  double prune_omega = 0.3;
  std::size_t checkpoint_every = 0;
  std::filesystem::path checkpoint_dir;
  nlohmann::json checkpoint_context = nlohmann::json::object();

  void validate() const {
    if (d < 2) throw InvalidDimension("d must be at least 2");
    if (batch < 1) throw InvalidParameter("batch size must be at least 1");
    if (!(lr > 0)) throw InvalidParameter("learning rate must be positive");
    if (!(log_epsilon >= 0)) throw InvalidParameter("log-space epsilon must be non-negative");
    if (hidden < 1) throw InvalidParameter("hidden width must be positive");
    if (!(epsilon_floor >= 0 && epsilon_floor <= 1)) throw InvalidParameter("epsilon floor must lie in [0, 1]");
    if (workers < 1) throw InvalidParameter("worker count must be at least 1");
    if (!(prune_omega >= 0)) throw InvalidParameter("omega must be non-negative");
    reward.validate();
  }
};

/// s_0 -> ... -> s_T with the actions between them; reward belongs to s_T.
struct Trajectory {
  std::vector<BuilderState> states;
  std::vector<EdgeAction> actions;
  double reward = 0;
  SamplingCase mode = SamplingCase::kIdentify;

  const BuilderState& terminal() const { return states.back(); }
  std::size_t length() const noexcept { return actions.size(); }
};

using RewardFn = std::function<double(const BuilderState&)>;
using GraphPruner = std::function<Adjacency(const Adjacency&)>;

/// Independent 64-bit seed for (base, stream, index).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index) {
  auto mix = [](std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(base) ^ stream) ^ index);
}

namespace detail {

inline std::size_t draw(const std::vector<double>& probs, std::mt19937_64& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0;
  std::size_t last = probs.size();
  for (std::size_t k = 0; k < probs.size(); ++k) {
    if (probs[k] <= 0) continue;
    last = k;
    acc += probs[k];
    if (u < acc) return k;
  }
  return last;
}

/// Uniform choice among the zero bits of a forbid-mask.
inline EdgeAction draw_uniform(const BitMatrix& forbidden, std::mt19937_64& rng) {
  const std::size_t d = forbidden.size();
  const std::size_t free = d * d - forbidden.count();
  if (free == 0) throw DeadEnd("every action is masked");
  std::size_t pick = std::uniform_int_distribution<std::size_t>(0, free - 1)(rng);
  for (std::size_t i = 0; i < d; ++i) {
    const std::size_t row_free = d - forbidden.row_count(i);
    if (pick >= row_free) {
      pick -= row_free;
      continue;
    }
    for (std::size_t j = 0; j < d; ++j)
      if (!forbidden.test(i, j) && pick-- == 0) return {j, i};
  }
  throw DeadEnd("uniform draw fell off the mask");
}

/// Advances a set of trajectories in lockstep, one batched forward per step.
inline void advance_lockstep(const FlowNet* net, SamplingCase mode, double explore,
                             std::span<Trajectory> trajs, std::span<std::mt19937_64> rngs) {
  std::vector<std::size_t> active;
  for (std::size_t k = 0; k < trajs.size(); ++k)
    if (!is_terminal(trajs[k].states.back(), mode)) active.push_back(k);

  while (!active.empty()) {
    Eigen::MatrixXd logflows;
    const bool use_net = net != nullptr && explore < 1.0;
    if (use_net) {
      std::vector<const BuilderState*> ptrs;
      ptrs.reserve(active.size());
      for (std::size_t k : active) ptrs.push_back(&trajs[k].states.back());
      logflows = forward_batch(*net, encode_states(*net, ptrs)).post[FlowNet::kLayers - 1];
    }
    std::vector<std::size_t> still;
    for (std::size_t c = 0; c < active.size(); ++c) {
      const std::size_t k = active[c];
      Trajectory& t = trajs[k];
      const BuilderState& s = t.states.back();
      const BitMatrix forbidden = effective_mask(s, mode);
      EdgeAction a;
      if (!use_net) {
        a = draw_uniform(forbidden, rngs[k]);
      } else {
        const auto col = logflows.col(static_cast<Eigen::Index>(c));
        ActionDistribution dist =
            masked_distribution(std::span<const double>(col.data(), static_cast<std::size_t>(col.size())), forbidden);
        mix_uniform(dist, explore);
        a = EdgeAction::from_index(draw(dist.probs, rngs[k]), s.d());
      }
      t.states.push_back(apply_action(s, a));
      t.actions.push_back(a);
      if (!is_terminal(t.states.back(), mode)) still.push_back(k);
    }
    active = std::move(still);
  }
}

}  // namespace detail

/// Samples `count` trajectories; trajectory k uses the RNG seeded by derive_seed(seed, stream, k).
///
/// A null network or explore = 1 gives the uniform policy over allowed actions.
/// Rewards are evaluated once per trajectory at its terminal state.
inline std::vector<Trajectory> sample_trajectories(const FlowNet* net, std::size_t d, SamplingCase mode,
                                                   std::size_t count, std::uint64_t seed, std::uint64_t stream,
                                                   double explore, const RewardFn& reward, std::size_t workers = 1) {
  std::vector<Trajectory> trajs(count);
  std::vector<std::mt19937_64> rngs(count);
  for (std::size_t k = 0; k < count; ++k) {
    trajs[k].states.push_back(new_state(d));
    trajs[k].mode = mode;
    rngs[k].seed(derive_seed(seed, stream, k));
  }
  workers = std::max<std::size_t>(1, std::min(workers, count));
  const std::size_t chunk = (count + workers - 1) / std::max<std::size_t>(workers, 1);
  auto run = [&](std::size_t begin, std::size_t end) {
    detail::advance_lockstep(net, mode, explore, std::span(trajs).subspan(begin, end - begin),
                             std::span(rngs).subspan(begin, end - begin));
    if (reward)
      for (std::size_t k = begin; k < end; ++k) trajs[k].reward = reward(trajs[k].terminal());
  };
  if (workers <= 1) {
    run(0, count);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t begin = 0; begin < count; begin += chunk)
      pool.emplace_back(run, begin, std::min(count, begin + chunk));
  }
  return trajs;
}

inline Trajectory sample_trajectory(const FlowNet* net, const TrainConfig& cfg, std::uint64_t seed,
                                    const RewardFn& reward, double explore = 0.0) {
  return std::move(sample_trajectories(net, cfg.d, cfg.mode, 1, seed, 0, explore, reward).front());
}

/// One flow-matching equation: inflow(s) = reward(s) or outflow(s).
struct FlowTerm {
  std::vector<std::pair<std::size_t, std::size_t>> inflow;  // (row, action index)
  bool terminal = false;
  double reward = 0;
  std::size_t outflow_row = 0;
  std::vector<std::size_t> outflow_actions;
};

/// Distinct states needing log-flows plus the equations that read them.
struct FlowBatch {
  std::vector<BuilderState> rows;
  std::vector<FlowTerm> terms;
};

inline FlowBatch build_flow_batch(std::span<const Trajectory> batch, SamplingCase mode) {
  if (batch.empty()) throw EmptyInput("flow matching needs a non-empty batch");
  FlowBatch fb;
  std::unordered_map<std::string, std::size_t> index;
  auto row_of = [&](const BuilderState& s) {
    auto [it, inserted] = index.try_emplace(s.adjacency().key(), fb.rows.size());
    if (inserted) fb.rows.push_back(s);
    return it->second;
  };
  for (const Trajectory& t : batch) {
    const std::size_t d = t.states.front().d();
    for (std::size_t step = 1; step < t.states.size(); ++step) {
      const BuilderState& s = t.states[step];
      FlowTerm term;
      for (const auto& p : enumerate_parents(s, mode)) term.inflow.push_back({row_of(p.state), p.action.index(d)});
      term.terminal = step + 1 == t.states.size();
      if (term.terminal) {
        term.reward = t.reward;
      } else {
        term.outflow_row = row_of(s);
        for (const auto& a : allowed_actions(s, mode)) term.outflow_actions.push_back(a.index(d));
      }
      fb.terms.push_back(std::move(term));
    }
  }
  return fb;
}

struct LossResult {
  double loss = 0;
  std::vector<double> term_losses;
  Eigen::MatrixXd upstream;  // d(loss)/d(log-flow), same shape as the outputs
  std::vector<double> grads;  // filled by flow_match_loss
};

namespace detail {

/// log(eps + sum exp(v)) over the selected entries, and the softmax weights.
inline double log_sum(const std::vector<double>& v, double eps, std::vector<double>& weights) {
  double peak = eps > 0 ? std::log(eps) : -std::numeric_limits<double>::infinity();
  for (double x : v) peak = std::max(peak, x);
  double total = eps > 0 ? std::exp(std::log(eps) - peak) : 0.0;
  weights.resize(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) total += weights[k] = std::exp(v[k] - peak);
  const double out = peak + std::log(total);
  for (auto& w : weights) w /= total;
  return out;
}

}  // namespace detail

/// Mean squared flow mismatch over every non-initial state of the batch, given
/// log-flows for each row (column k of `logflows` belongs to fb.rows[k]).
inline LossResult evaluate_flow_terms(const FlowBatch& fb, const Eigen::MatrixXd& logflows, LossSpace space,
                                      double eps) {
  LossResult r;
  r.upstream = Eigen::MatrixXd::Zero(logflows.rows(), logflows.cols());
  const double n_terms = static_cast<double>(fb.terms.size());
  std::vector<double> in_vals, out_vals, in_w, out_w;
  for (const FlowTerm& term : fb.terms) {
    in_vals.clear();
    for (const auto& [row, act] : term.inflow)
      in_vals.push_back(logflows(static_cast<Eigen::Index>(act), static_cast<Eigen::Index>(row)));
    out_vals.clear();
    if (!term.terminal)
      for (std::size_t act : term.outflow_actions)
        out_vals.push_back(logflows(static_cast<Eigen::Index>(act), static_cast<Eigen::Index>(term.outflow_row)));

    double value = 0;
    double g_in_scale = 0;   // d(term)/d(inflow-side quantity)
    double g_out_scale = 0;  // d(term)/d(target-side quantity)
    if (space == LossSpace::kRawFlow) {
      double inflow = 0;
      for (double v : in_vals) inflow += std::exp(v);
      double target = term.reward;
      if (!term.terminal) {
        target = 0;
        for (double v : out_vals) target += std::exp(v);
      }
      const double diff = inflow - target;
      value = diff * diff;
      g_in_scale = 2 * diff;
      g_out_scale = -2 * diff;
      in_w.assign(in_vals.size(), 0.0);
      for (std::size_t k = 0; k < in_vals.size(); ++k) in_w[k] = std::exp(in_vals[k]);
      out_w.assign(out_vals.size(), 0.0);
      for (std::size_t k = 0; k < out_vals.size(); ++k) out_w[k] = std::exp(out_vals[k]);
    } else {
      const double log_in = detail::log_sum(in_vals, eps, in_w);
      double log_target = 0;
      if (term.terminal) {
        log_target = std::log(eps + term.reward);
        out_w.clear();
      } else {
        log_target = detail::log_sum(out_vals, eps, out_w);
      }
      const double diff = log_in - log_target;
      value = diff * diff;
      g_in_scale = 2 * diff;
      g_out_scale = -2 * diff;
    }
    r.term_losses.push_back(value);
    r.loss += value / n_terms;
    for (std::size_t k = 0; k < term.inflow.size(); ++k) {
      const auto& [row, act] = term.inflow[k];
      r.upstream(static_cast<Eigen::Index>(act), static_cast<Eigen::Index>(row)) += g_in_scale * in_w[k] / n_terms;
    }
    if (!term.terminal)
      for (std::size_t k = 0; k < term.outflow_actions.size(); ++k)
        r.upstream(static_cast<Eigen::Index>(term.outflow_actions[k]), static_cast<Eigen::Index>(term.outflow_row)) +=
            g_out_scale * out_w[k] / n_terms;
  }
  return r;
}

/// Flow-matching loss of a batch and its exact gradient with respect to the network parameters.
inline LossResult flow_match_loss(const FlowNet& net, std::span<const Trajectory> batch, SamplingCase mode,
                                  LossSpace space, double eps, std::size_t step = 0) {
  const FlowBatch fb = build_flow_batch(batch, mode);
  std::vector<const BuilderState*> ptrs;
  ptrs.reserve(fb.rows.size());
  for (const auto& s : fb.rows) ptrs.push_back(&s);
  const ForwardCache cache = forward_batch(net, encode_states(net, ptrs));
  LossResult r = evaluate_flow_terms(fb, cache.post[FlowNet::kLayers - 1], space, eps);
  if (!std::isfinite(r.loss)) throw TrainingDivergence("non-finite flow-matching loss", step);
  r.grads = backward_batch(net, cache, r.upstream);
  return r;
}

inline LossResult flow_match_loss(const FlowNet& net, std::span<const Trajectory> batch, const TrainConfig& cfg) {
  return flow_match_loss(net, batch, cfg.mode, cfg.loss_space, cfg.log_epsilon);
}

/// Highest-reward terminal state seen so far and its pruned graph.
struct BestGraph {
  bool found = false;
  double reward = 0;
  Adjacency terminal;
  Adjacency full;
  Adjacency pruned;
  std::vector<std::size_t> order;
};

struct EpochLog {
  std::size_t epoch = 0;
  double mean_loss = 0;
  double best_reward = 0;
  double mean_traj_len = 0;
  double wall_ms = 0;
};

struct TrainResult {
  FlowNet net;
  OptState opt;
  BestGraph best;
  std::vector<EpochLog> log;
};

/// Thrown when training stops on a non-finite loss or gradient; carries the
/// last parameters for which everything was finite.
class TrainingDiverged : public TrainingDivergence {
 public:
  TrainingDiverged(const TrainingDivergence& cause, FlowNet last_finite, OptState opt)
      : TrainingDivergence(cause), last_finite_(std::move(last_finite)), opt_(std::move(opt)) {}

  const FlowNet& last_finite() const noexcept { return last_finite_; }
  const OptState& optimizer() const noexcept { return opt_; }

 private:
  FlowNet last_finite_;
  OptState opt_;
};

/// Optional observers; on_batch sees every sampled batch before the update.
struct TrainHooks {
  std::function<void(std::size_t epoch, std::span<const Trajectory>)> on_batch;
  std::function<void(const EpochLog&)> on_epoch;
};

inline double exploration_for_epoch(const TrainConfig& cfg, std::size_t epoch) {
  return epoch < cfg.uniform_epochs ? 1.0 : cfg.epsilon_floor;
}

/// Batched training loop with best-graph tracking.
inline TrainResult train(const TrainConfig& cfg, const RewardFn& reward, const GraphPruner& pruner = {},
                         const TrainHooks& hooks = {}) {
  cfg.validate();
  TrainResult res;
  res.net = FlowNet(cfg.d, cfg.hidden, cfg.features);
  res.net.initialize(derive_seed(cfg.seed, 1, 0));
  res.opt = OptState::for_net(res.net, cfg.lr);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double explore = exploration_for_epoch(cfg, epoch);
    const auto batch =
        sample_trajectories(&res.net, cfg.d, cfg.mode, cfg.batch, cfg.seed, 1000 + epoch, explore, reward, cfg.workers);
    if (hooks.on_batch) hooks.on_batch(epoch, batch);

    double total_len = 0;
    for (const Trajectory& t : batch) {
      total_len += static_cast<double>(t.length());
      if (!res.best.found || t.reward > res.best.reward) {
        res.best.found = true;
        res.best.reward = t.reward;
        res.best.terminal = t.terminal().adjacency();
        res.best.full = induced_full_dag(t.terminal());
        res.best.order = topological_sort(t.terminal());
        res.best.pruned = pruner ? pruner(res.best.full) : res.best.full;
      }
    }

    LossResult loss;
    try {
      loss = flow_match_loss(res.net, batch, cfg.mode, cfg.loss_space, cfg.log_epsilon, res.opt.step + 1);
      adam_step(res.net, loss.grads, res.opt);
    } catch (const TrainingDivergence& e) {
      throw TrainingDiverged(e, res.net, res.opt);
    }

    EpochLog row{epoch, loss.loss, res.best.reward, total_len / static_cast<double>(batch.size()),
                 std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count()};
    res.log.push_back(row);
    if (hooks.on_epoch) hooks.on_epoch(row);

    if (cfg.checkpoint_every > 0 && !cfg.checkpoint_dir.empty() && (epoch + 1) % cfg.checkpoint_every == 0) {
      std::filesystem::create_directories(cfg.checkpoint_dir);
      char name[32];
      std::snprintf(name, sizeof(name), "ckpt_%06zu", epoch + 1);
      save_checkpoint(cfg.checkpoint_dir / name, res.net, res.opt, cfg.checkpoint_context);
    }
  }
  return res;
}

/// Training against a dataset with the configured reward and threshold pruning.
inline TrainResult train(const TrainConfig& cfg, const Dataset& x, const TrainHooks& hooks = {}) {
  if (x.d() != cfg.d) throw ShapeError("dataset has " + std::to_string(x.d()) + " columns, config says d=" +
                                       std::to_string(cfg.d));
  const RewardFunction reward(x, cfg.reward);
  const double omega = cfg.prune_omega;
  return train(cfg, [&](const BuilderState& s) { return reward(s); },
               [&](const Adjacency& full) { return prune_threshold(full, x, omega).graph; }, hooks);
}

struct ResampleResult {
  std::vector<Adjacency> graphs;  // terminal adjacency of each trajectory
  std::vector<double> rewards;
  std::vector<std::size_t> lengths;
  std::size_t distinct = 0;
  std::size_t above_threshold = 0;
  double total_ms = 0;
  double mean_ms_per_graph = 0;
};

/// On-policy sampling without parameter updates.
inline ResampleResult resample(const FlowNet& net, std::size_t n, const TrainConfig& cfg, const RewardFn& reward,
                               double reward_threshold = std::numeric_limits<double>::infinity()) {
  ResampleResult out;
  if (n == 0) return out;
  const auto t0 = std::chrono::steady_clock::now();
  auto trajs = sample_trajectories(&net, cfg.d, cfg.mode, n, cfg.seed, 7, 0.0, reward, cfg.workers);
  out.total_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  out.mean_ms_per_graph = out.total_ms / static_cast<double>(n);
  std::unordered_set<std::string> seen;
  for (auto& t : trajs) {
    seen.insert(t.terminal().adjacency().key());
    out.graphs.push_back(t.terminal().adjacency());
    out.rewards.push_back(t.reward);
    out.lengths.push_back(t.length());
    if (t.reward >= reward_threshold) ++out.above_threshold;
  }
  out.distinct = seen.size();
  return out;
}

/// Uniform-policy trajectory length without storing the visited states.
inline std::size_t uniform_trajectory_length(std::size_t d, SamplingCase mode, std::mt19937_64& rng) {
  BuilderState s = new_state(d);
  if (mode == SamplingCase::kPath) {
    std::vector<std::size_t> unvisited(d);
    std::iota(unvisited.begin(), unvisited.end(), std::size_t{0});
    auto take = [&]() {
      const std::size_t k = std::uniform_int_distribution<std::size_t>(0, unvisited.size() - 1)(rng);
      const std::size_t v = unvisited[k];
      unvisited[k] = unvisited.back();
      unvisited.pop_back();
      return v;
    };
    std::size_t tail = take();
    while (!unvisited.empty()) {
      const std::size_t next = take();
      s.apply({tail, next});
      tail = next;
    }
    return s.edge_count();
  }
  while (!is_terminal(s, mode)) s.apply(detail::draw_uniform(s.mask(), rng));
  return s.edge_count();
}

struct CaseBench {
  SamplingCase mode;
  double total_ms = 0;
  double mean_length = 0;
  std::size_t graphs = 0;
};

/// Accumulated wall time and mean trajectory length of n_graphs uniform-policy
/// trajectories under each sampling case.
inline std::vector<CaseBench> bench_cases(std::size_t d, std::size_t n_graphs, std::uint64_t seed) {
  if (d < 2) throw InvalidDimension("d must be at least 2");
  if (n_graphs < 1) throw InvalidParameter("n_graphs must be at least 1");
  std::vector<CaseBench> out;
  for (SamplingCase mode : {SamplingCase::kFull, SamplingCase::kIdentify, SamplingCase::kPath}) {
    std::mt19937_64 rng(derive_seed(seed, 99, static_cast<std::uint64_t>(mode)));
    CaseBench b{mode, 0, 0, n_graphs};
    std::size_t total = 0;
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t k = 0; k < n_graphs; ++k) total += uniform_trajectory_length(d, mode, rng);
    b.total_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    b.mean_length = static_cast<double>(total) / static_cast<double>(n_graphs);
    out.push_back(b);
  }
  return out;
}

}  // namespace gfc
