#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "gfc/config.hpp"
#include "gfc/errors.hpp"
#include "gfc/flow_net.hpp"
#include "gfc/graph_io.hpp"
#include "gfc/postprocess.hpp"
#include "gfc/rewards.hpp"
#include "gfc/synthetic.hpp"
#include "gfc/trainer.hpp"

#ifndef GFC_GIT_DESCRIBE
#define GFC_GIT_DESCRIBE "unknown"
#endif

namespace gfc::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitDivergence = 3;

namespace fs = std::filesystem;
using nlohmann::json;

namespace detail {

inline std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(p);
  if (!os) throw ParseError("cannot write " + p.string());
  return os;
}

inline void write_json(const fs::path& p, const json& j) { open_out(p) << j.dump(2) << '\n'; }

inline std::optional<std::size_t> env_workers() {
  const char* v = std::getenv("GFC_WORKERS");
  if (v == nullptr || *v == '\0') return std::nullopt;
  char* end = nullptr;
  const long w = std::strtol(v, &end, 10);
  if (*end != '\0' || w < 1) throw InvalidParameter("GFC_WORKERS must be a positive integer");
  return static_cast<std::size_t>(w);
}

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

class Run {
 public:
  Run(std::string command, fs::path out_dir) : command_(std::move(command)), out_(std::move(out_dir)) {}

  const fs::path& dir() const noexcept { return out_; }
  // Creates the parent directory; call only once inputs are validated.
  fs::path path(const fs::path& rel) const {
    fs::path p = out_ / rel;
    fs::create_directories(p.parent_path());
    return p;
  }
  void output(const fs::path& rel) { outputs_.push_back(rel.generic_string()); }

  void finish(const json& config, const json& seeds, const json& args) const {
    json manifest = {
        {"command", command_},
        {"config", config},
        {"args", args},
        {"seeds", seeds},
        {"git_describe", GFC_GIT_DESCRIBE},
        {"outputs", outputs_},
        {"wall_time_ms", std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count()},
    };
    write_json(path("manifest.json"), manifest);
  }

 private:
  std::string command_;
  fs::path out_;
  std::vector<std::string> outputs_;
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline fs::path resolve_out(const std::string& flag, const std::string& from_config) {
  if (!flag.empty()) return flag;
  return from_config.empty() ? fs::path(".") : fs::path(from_config);
}

inline GraphPruner make_pruner(const PruneConfig& p, const Dataset& x) {
  if (p.method == PruneMethod::kLasso) {
    const double lambda = p.lambda;
    return [&x, lambda](const Adjacency& full) { return prune_lasso(full, x, lambda).graph; };
  }
  const double omega = p.omega;
  return [&x, omega](const Adjacency& full) { return prune_threshold(full, x, omega).graph; };
}

inline json reward_json(const RewardConfig& r) {
  return {{"kind", to_string(r.kind)}, {"c", r.scale}, {"tau", r.temperature}};
}

inline RewardConfig reward_from_json(const json& j) {
  RewardConfig r;
  r.kind = reward_kind_from_string(j.at("kind").get<std::string>());
  r.scale = j.value("c", r.scale);
  r.temperature = j.value("tau", r.temperature);
  r.validate();
  return r;
}

// ---- subcommands -----------------------------------------------------------

inline int gen_data(const std::string& config_path, const std::string& out_flag) {
  const ExperimentConfig cfg = load_config(config_path);
  Run run("gen-data", resolve_out(out_flag, cfg.output_dir));
  const auto& dc = cfg.data;

  const GeneratedData gd = generate_data(dc);
  const Adjacency& a = gd.truth.adjacency;
  const WeightedGraph& g = gd.truth;
  const Dataset& x = gd.x;

  save_dataset_csv(run.path("data.csv"), x);
  run.output("data.csv");
  save_edge_list(run.path("truth.edges"), to_edge_list(g.weights));
  run.output("truth.edges");
  write_json(run.path("truth.json"), {{"d", dc.d},
                                      {"n", dc.n},
                                      {"noise", {{"kind", to_string(dc.noise.kind)}, {"scale", dc.noise.scale}}},
                                      {"beta", dc.beta},
                                      {"graph_type", to_string(dc.graph_type)},
                                      {"seed", dc.seed},
                                      {"standardize", dc.standardize},
                                      {"edges", a.count()}});
  run.output("truth.json");
  run.finish(to_json(cfg), {{"data", dc.seed}, {"graph", gd.graph_seed}, {"weights", gd.weight_seed}, {"noise", gd.noise_seed}},
             {{"config", config_path}});
  std::cerr << "gen-data: d=" << dc.d << " n=" << dc.n << " edges=" << a.count() << " -> " << run.dir() << '\n';
  return kExitOk;
}

inline int train_cmd(const std::string& config_path, const std::string& out_flag, const std::string& data_flag,
                     std::optional<std::size_t> workers_flag) {
  ExperimentConfig cfg = load_config(config_path);
  Run run("train", resolve_out(out_flag, cfg.output_dir));
  if (workers_flag) cfg.train.workers = *workers_flag;
  if (auto w = env_workers()) cfg.train.workers = *w;
  cfg.train.validate();

  const fs::path data_path = !data_flag.empty()       ? fs::path(data_flag)
                             : !cfg.data.path.empty() ? fs::path(cfg.data.path)
                                                      : run.path("data.csv");
  const Dataset x = load_dataset_csv(data_path);
  if (x.d() != cfg.train.d)
    throw ShapeError("dataset " + data_path.string() + " has " + std::to_string(x.d()) + " columns, config says d=" +
                     std::to_string(cfg.train.d));
  const RewardFunction reward(x, cfg.train.reward);

  TrainConfig tc = cfg.train;
  tc.checkpoint_dir = run.path("checkpoints");
  tc.checkpoint_context = {{"case", static_cast<int>(tc.mode)},
                           {"reward", reward_json(reward.config())},
                           {"data_path", fs::absolute(data_path).string()},
                           {"seed", tc.seed}};

  auto log = open_out(run.path("train_log.csv"));
  run.output("train_log.csv");
  log << "epoch,mean_loss,best_reward,mean_traj_len,wall_ms\n";
  TrainHooks hooks;
  const std::size_t report_every = std::max<std::size_t>(1, tc.epochs / 20);
  hooks.on_epoch = [&](const EpochLog& e) {
    log << e.epoch << ',' << fmt(e.mean_loss) << ',' << fmt(e.best_reward) << ',' << fmt(e.mean_traj_len) << ','
        << fmt(e.wall_ms) << '\n';
    if ((e.epoch + 1) % report_every == 0)
      std::cerr << "train: epoch " << e.epoch + 1 << '/' << tc.epochs << " loss=" << e.mean_loss
                << " best=" << e.best_reward << '\n';
  };

  const json seeds = {{"train", tc.seed}, {"data", cfg.data.seed}};
  const json args = {{"config", config_path}, {"data", data_path.string()}};
  TrainResult res;
  try {
    res = train(tc, [&](const BuilderState& s) { return reward(s); }, make_pruner(cfg.prune, x), hooks);
  } catch (const TrainingDiverged& e) {
    log.flush();
    save_checkpoint(run.path("checkpoints/last_finite"), e.last_finite(), e.optimizer(), tc.checkpoint_context);
    run.output("checkpoints/last_finite.json");
    run.finish(to_json(cfg), seeds, args);
    std::cerr << "train: diverged at step " << e.step() << ": " << e.what() << '\n';
    return kExitDivergence;
  }
  log.flush();

  save_checkpoint(run.path("checkpoints/final"), res.net, res.opt, tc.checkpoint_context);
  run.output("checkpoints/final.json");
  save_edge_list(run.path("best_graph.edges"), to_edge_list(res.best.pruned));
  run.output("best_graph.edges");
  save_edge_list(run.path("best_full.edges"), to_edge_list(res.best.full));
  run.output("best_full.edges");
  write_json(run.path("train_summary.json"), {{"best_reward", res.best.reward},
                                              {"best_order", res.best.order},
                                              {"best_edges", res.best.pruned.count()},
                                              {"epochs", tc.epochs},
                                              {"final_loss", res.log.empty() ? 0.0 : res.log.back().mean_loss}});
  run.output("train_summary.json");
  run.finish(to_json(cfg), seeds, args);
  std::cerr << "train: best reward " << res.best.reward << ", " << res.best.pruned.count() << " edges after pruning\n";
  return kExitOk;
}

inline int sample_cmd(const std::string& checkpoint, std::size_t n, const std::string& out_flag,
                      const std::string& data_flag, std::uint64_t seed, std::optional<double> threshold,
                      std::size_t bins) {
  if (bins < 1) throw InvalidParameter("histogram needs at least one bin");
  const Checkpoint ck = load_checkpoint(checkpoint);
  const json& ctx = ck.extra;
  const std::string data_path = !data_flag.empty() ? data_flag : ctx.value("data_path", std::string());
  if (data_path.empty()) throw ParseError("no dataset: pass --data or use a checkpoint written by `train`");
  const Dataset x = load_dataset_csv(data_path);
  if (x.d() != ck.net.d()) throw ShapeError("dataset column count does not match the checkpoint");
  const RewardFunction reward(x, reward_from_json(ctx.at("reward")));

  TrainConfig tc;
  tc.d = ck.net.d();
  tc.mode = sampling_case_from_int(ctx.value("case", 2));
  tc.seed = seed;
  tc.workers = env_workers().value_or(1);
  Run run("sample", resolve_out(out_flag, "."));

  const ResampleResult rs = resample(ck.net, n, tc, [&](const BuilderState& s) { return reward(s); },
                                     threshold.value_or(std::numeric_limits<double>::infinity()));

  auto table = open_out(run.path("samples.csv"));
  run.output("samples.csv");
  table << "index,reward,length,edges,file\n";
  for (std::size_t k = 0; k < rs.graphs.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof(name), "graph_%05zu.edges", k);
    save_edge_list(run.path(fs::path("samples") / name), to_edge_list(rs.graphs[k]));
    table << k << ',' << fmt(rs.rewards[k]) << ',' << rs.lengths[k] << ',' << rs.graphs[k].count() << ",samples/"
          << name << '\n';
  }
  table.flush();

  auto hist = open_out(run.path("reward_histogram.csv"));
  run.output("reward_histogram.csv");
  hist << "bin_low,bin_high,count\n";
  if (!rs.rewards.empty()) {
    const auto [lo_it, hi_it] = std::minmax_element(rs.rewards.begin(), rs.rewards.end());
    const double lo = *lo_it;
    const double width = (*hi_it - lo) / static_cast<double>(bins);
    std::vector<std::size_t> counts(bins, 0);
    for (double r : rs.rewards) {
      std::size_t b = width > 0 ? static_cast<std::size_t>((r - lo) / width) : 0;
      counts[std::min(b, bins - 1)]++;
    }
    for (std::size_t b = 0; b < bins; ++b)
      hist << fmt(lo + width * static_cast<double>(b)) << ',' << fmt(lo + width * static_cast<double>(b + 1)) << ','
           << counts[b] << '\n';
  }
  hist.flush();

  double mean_len = 0;
  for (auto l : rs.lengths) mean_len += static_cast<double>(l);
  if (n > 0) mean_len /= static_cast<double>(n);
  write_json(run.path("sample_summary.json"),
             {{"n", n},
              {"distinct_graphs", rs.distinct},
              {"above_threshold", rs.above_threshold},
              {"threshold", threshold ? json(*threshold) : json(nullptr)},
              {"mean_length", mean_len},
              {"total_ms", rs.total_ms},
              {"mean_ms_per_graph", rs.mean_ms_per_graph}});
  run.output("sample_summary.json");
  run.finish(nullptr, {{"sample", seed}},
             {{"checkpoint", checkpoint}, {"n", n}, {"data", data_path}, {"bins", bins}});
  std::cerr << "sample: " << n << " graphs, " << rs.distinct << " distinct\n";
  return kExitOk;
}

inline int prune_cmd(const std::string& graph_path, const std::string& data_path, const std::string& method,
                     double omega, double lambda, const std::string& out_flag, const std::string& out_name) {
  PruneConfig pc;
  pc.method = prune_method_from_string(method);
  pc.omega = omega;
  pc.lambda = lambda;
  const Adjacency full = to_adjacency(load_edge_list(graph_path));
  const Dataset x = load_dataset_csv(data_path);
  const PruneResult r =
      pc.method == PruneMethod::kThreshold ? prune_threshold(full, x, omega) : prune_lasso(full, x, lambda);
  Run run("prune", resolve_out(out_flag, "."));
  save_edge_list(run.path(out_name), to_edge_list(r.graph));
  run.output(out_name);
  if (r.ridge_used) std::cerr << "prune: warning: rank-deficient regression, ridge fallback used\n";
  if (!r.converged) std::cerr << "prune: warning: lasso did not converge, last iterate used\n";
  run.finish(nullptr, json::object(),
             {{"graph", graph_path},
              {"data", data_path},
              {"method", method},
              {"omega", omega},
              {"lambda", lambda},
              {"ridge_used", r.ridge_used},
              {"converged", r.converged}});
  std::cerr << "prune: " << full.count() << " -> " << r.graph.count() << " edges\n";
  return kExitOk;
}

inline std::vector<Adjacency> load_sample_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ParseError("samples directory " + dir.string() + " does not exist");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".edges") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<Adjacency> out;
  for (const auto& f : files) out.push_back(to_adjacency(load_edge_list(f)));
  return out;
}

inline int eval_cmd(const std::string& pred_path, const std::string& truth_path, const std::string& samples_dir,
                    const std::string& out_flag, const std::string& seed_label, const std::string& method,
                    const std::string& graph_type) {
  const Adjacency pred = to_adjacency(load_edge_list(pred_path));
  const Adjacency truth = to_adjacency(load_edge_list(truth_path));
  MetricReport m = compare(pred, truth);
  if (!samples_dir.empty()) {
    const auto samples = load_sample_dir(samples_dir);
    m.e_shd = expected_shd(samples, truth);
    try {
      m.auroc = auroc(samples, truth);
    } catch (const UndefinedAuroc& e) {
      std::cerr << "eval: " << e.what() << "; AUROC omitted\n";
    }
  }
  Run run("eval", resolve_out(out_flag, "."));
  write_json(run.path("metrics.json"), m.to_json());
  run.output("metrics.json");

  const fs::path csv = run.path("metrics.csv");
  const bool fresh = !fs::exists(csv);
  std::ofstream row(csv, std::ios::app);
  if (!row) throw ParseError("cannot write " + csv.string());
  if (fresh) row << "seed,method,graph_type,tpr,fdr,shd,e_shd,auroc\n";
  row << seed_label << ',' << method << ',' << graph_type << ',' << fmt(m.tpr) << ',' << fmt(m.fdr) << ',' << m.shd
      << ',' << (m.e_shd ? fmt(*m.e_shd) : "") << ',' << (m.auroc ? fmt(*m.auroc) : "") << '\n';
  run.output("metrics.csv");
  run.finish(nullptr, json::object(),
             {{"pred", pred_path}, {"truth", truth_path}, {"samples", samples_dir}, {"seed", seed_label},
              {"method", method}, {"graph_type", graph_type}});
  std::cout << m.to_json().dump() << '\n';
  return kExitOk;
}

inline int bench_cmd(std::size_t d, std::size_t n, std::uint64_t seed, const std::string& out_flag) {
  const auto rows = bench_cases(d, n, seed);
  Run run("bench-cases", resolve_out(out_flag, "."));
  auto os = open_out(run.path("bench_cases.csv"));
  run.output("bench_cases.csv");
  os << "case,d,graphs,total_ms,mean_length\n";
  for (const auto& r : rows)
    os << static_cast<int>(r.mode) << ',' << d << ',' << r.graphs << ',' << fmt(r.total_ms) << ','
       << fmt(r.mean_length) << '\n';
  os.flush();
  run.finish(nullptr, {{"bench", seed}}, {{"d", d}, {"n", n}});
  for (const auto& r : rows)
    std::cerr << "case " << static_cast<int>(r.mode) << ": " << r.total_ms << " ms, mean length " << r.mean_length
              << '\n';
  return kExitOk;
}

}  // namespace detail

/// Parses argv, dispatches one subcommand and maps failures to exit codes:
/// 0 success, 2 usage/config/validation, 3 training divergence.
inline int run_command(int argc, const char* const* argv) {
  CLI::App app{"Flow-network sampler for causal DAGs"};
  app.require_subcommand(1);
  std::string out_dir;

  std::string config;
  auto* gen = app.add_subcommand("gen-data", "Sample a ground-truth graph and a dataset");
  gen->add_option("--config", config, "Experiment config (JSON)")->required();
  gen->add_option("--output-dir", out_dir, "Output directory (default: config output_dir)");

  std::string data;
  std::optional<std::size_t> workers;
  auto* tr = app.add_subcommand("train", "Train the flow network");
  tr->add_option("--config", config, "Experiment config (JSON) or a previous run manifest")->required();
  tr->add_option("--output-dir", out_dir, "Output directory (default: config output_dir)");
  tr->add_option("--data", data, "Dataset CSV (default: data.path, else <output-dir>/data.csv)");
  tr->add_option("--workers", workers, "Sampling threads (GFC_WORKERS overrides)");

  std::string checkpoint;
  std::size_t n = 1000;
  std::uint64_t seed = 0;
  std::optional<double> threshold;
  std::size_t bins = 20;
  auto* sa = app.add_subcommand("sample", "Sample graphs from a trained checkpoint");
  sa->add_option("--checkpoint", checkpoint, "Checkpoint stem or .json manifest")->required();
  sa->add_option("--n", n, "Number of graphs");
  sa->add_option("--data", data, "Dataset CSV (default: the one used in training)");
  sa->add_option("--seed", seed, "Sampling seed");
  sa->add_option("--threshold", threshold, "Reward threshold for the above-threshold count");
  sa->add_option("--bins", bins, "Reward histogram bins");
  sa->add_option("--output-dir", out_dir, "Output directory");

  std::string graph, method = "threshold", out_name = "pruned.edges";
  double omega = 0.3, lambda = 0.1;
  auto* pr = app.add_subcommand("prune", "Prune a DAG by regression coefficients");
  pr->add_option("--graph", graph, "Edge list to prune")->required();
  pr->add_option("--data", data, "Dataset CSV")->required();
  pr->add_option("--method", method, "threshold | lasso");
  pr->add_option("--omega", omega, "Coefficient threshold");
  pr->add_option("--lambda", lambda, "L1 penalty");
  pr->add_option("--out", out_name, "Output edge list name");
  pr->add_option("--output-dir", out_dir, "Output directory");

  std::string pred, truth, samples, seed_label = "0", eval_method = "gfc", graph_type = "";
  auto* ev = app.add_subcommand("eval", "Score a predicted graph against the truth");
  ev->add_option("--pred", pred, "Predicted edge list")->required();
  ev->add_option("--truth", truth, "Ground-truth edge list")->required();
  ev->add_option("--samples", samples, "Directory of sampled edge lists for E-SHD and AUROC");
  ev->add_option("--seed", seed_label, "Seed label for the CSV row");
  ev->add_option("--method", eval_method, "Method label for the CSV row");
  ev->add_option("--graph-type", graph_type, "Graph-type label for the CSV row");
  ev->add_option("--output-dir", out_dir, "Output directory");

  std::size_t bench_d = 30;
  auto* be = app.add_subcommand("bench-cases", "Time uniform sampling under each sampling case");
  be->add_option("--d", bench_d, "Node count");
  be->add_option("--n", n, "Graphs per case");
  be->add_option("--seed", seed, "Seed");
  be->add_option("--output-dir", out_dir, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) return detail::gen_data(config, out_dir);
    if (*tr) return detail::train_cmd(config, out_dir, data, workers);
    if (*sa) return detail::sample_cmd(checkpoint, n, out_dir, data, seed, threshold, bins);
    if (*pr) return detail::prune_cmd(graph, data, method, omega, lambda, out_dir, out_name);
    if (*ev) return detail::eval_cmd(pred, truth, samples, out_dir, seed_label, eval_method, graph_type);
    if (*be) return detail::bench_cmd(bench_d, n, seed, out_dir);
  } catch (const TrainingDivergence& e) {
    std::cerr << "error: training diverged at step " << e.step() << ": " << e.what() << '\n';
    return kExitDivergence;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace gfc::cli
