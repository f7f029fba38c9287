#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <utility>

#include "json.hpp"

#include "gfc/errors.hpp"
#include "gfc/synthetic.hpp"
#include "gfc/trainer.hpp"

namespace gfc {

enum class GraphType { kEr, kSf };

inline std::string to_string(GraphType g) { return g == GraphType::kEr ? "er" : "sf"; }

inline GraphType graph_type_from_string(const std::string& s) {
  if (s == "er") return GraphType::kEr;
  if (s == "sf") return GraphType::kSf;
  throw InvalidParameter("unknown graph type '" + s + "'");
}

enum class PruneMethod { kThreshold, kLasso };

inline std::string to_string(PruneMethod m) { return m == PruneMethod::kThreshold ? "threshold" : "lasso"; }

inline PruneMethod prune_method_from_string(const std::string& s) {
  if (s == "threshold") return PruneMethod::kThreshold;
  if (s == "lasso") return PruneMethod::kLasso;
  throw InvalidParameter("unknown prune method '" + s + "'");
}

struct DataConfig {
  std::size_t d = 0;
  std::size_t n = 1000;
  GraphType graph_type = GraphType::kEr;
  double beta = 2;
  NoiseSpec noise{NoiseKind::kGaussian, 1.0};
  std::uint64_t seed = 0;
  bool standardize = false;
  std::string path;  // dataset CSV for `train`; empty means <output_dir>/data.csv
};

struct PruneConfig {
  PruneMethod method = PruneMethod::kThreshold;
  double omega = 0.3;
  double lambda = 0.1;
};

struct ExperimentConfig {
  DataConfig data;
  TrainConfig train;
  PruneConfig prune;
  std::string output_dir = ".";

  void validate() const {
    if (data.d < 2) throw InvalidDimension("data.d must be at least 2");
    if (data.n < 1) throw InvalidParameter("data.n must be at least 1");
    if (!(data.noise.scale > 0)) throw InvalidParameter("data.noise.scale must be positive");
    if (data.graph_type == GraphType::kEr) {
      const double dd = static_cast<double>(data.d);
      if (!(data.beta >= 1) || data.beta * dd > dd * (dd - 1) / 2)
        throw InvalidDensity("data.beta gives an infeasible ER density");
    } else if (data.beta < 1 || data.beta >= static_cast<double>(data.d) || data.beta != static_cast<std::size_t>(data.beta)) {
      throw InvalidParameter("data.beta must be an integer in [1, d) for scale-free graphs");
    }
    if (train.epochs < 1) throw InvalidParameter("train.epochs must be at least 1");
    train.validate();
    if (!(prune.omega >= 0)) throw InvalidParameter("prune.omega must be non-negative");
    if (!(prune.lambda >= 0)) throw InvalidParameter("prune.lambda must be non-negative");
  }
};

struct GeneratedData {
  WeightedGraph truth;
  Dataset x;
  std::uint64_t graph_seed = 0;
  std::uint64_t weight_seed = 0;
  std::uint64_t noise_seed = 0;
};

/// Ground-truth graph, weights and samples for a data config.
inline GeneratedData generate_data(const DataConfig& dc) {
  GeneratedData out;
  out.graph_seed = derive_seed(dc.seed, 11, 0);
  out.weight_seed = derive_seed(dc.seed, 12, 0);
  out.noise_seed = derive_seed(dc.seed, 13, 0);
  const Adjacency a = dc.graph_type == GraphType::kEr
                          ? sample_er_graph(dc.d, dc.beta, out.graph_seed)
                          : sample_sf_graph(dc.d, static_cast<std::size_t>(dc.beta), out.graph_seed);
  out.truth = sample_weights(a, out.weight_seed);
  out.x = simulate_sem(out.truth, dc.n, dc.noise, out.noise_seed);
  if (dc.standardize) out.x = standardize(std::move(out.x));
  return out;
}

namespace detail {

inline void reject_unknown(const nlohmann::json& obj, const std::set<std::string>& known, const std::string& where) {
  if (!obj.is_object()) throw ParseError(where + " must be a JSON object");
  for (const auto& [key, _] : obj.items())
    if (!known.count(key)) throw ParseError("unknown key '" + where + "." + key + "'");
}

template <typename T>
void read_opt(const nlohmann::json& obj, const char* key, T& out) {
  if (auto it = obj.find(key); it != obj.end() && !it->is_null()) out = it->get<T>();
}

}  // namespace detail

/// Parses an experiment config. A run manifest is accepted too; its
/// "config" member is used.
inline ExperimentConfig parse_config(const nlohmann::json& doc_in) {
  const nlohmann::json& doc = doc_in.contains("config") && doc_in.contains("command") ? doc_in["config"] : doc_in;
  ExperimentConfig c;
  try {
    detail::reject_unknown(doc, {"data", "train", "prune", "output_dir"}, "config");
    if (!doc.contains("data")) throw ParseError("missing required section 'data'");
    const auto& data = doc["data"];
    detail::reject_unknown(data, {"d", "n", "graph_type", "beta", "noise", "seed", "standardize", "path"}, "data");
    if (!data.contains("d")) throw ParseError("missing required key 'data.d'");
    c.data.d = data["d"].get<std::size_t>();
    detail::read_opt(data, "n", c.data.n);
    if (data.contains("graph_type")) c.data.graph_type = graph_type_from_string(data["graph_type"].get<std::string>());
    detail::read_opt(data, "beta", c.data.beta);
    if (data.contains("noise")) {
      const auto& noise = data["noise"];
      detail::reject_unknown(noise, {"kind", "scale"}, "data.noise");
      if (noise.contains("kind")) c.data.noise.kind = noise_kind_from_string(noise["kind"].get<std::string>());
      detail::read_opt(noise, "scale", c.data.noise.scale);
    }
    detail::read_opt(data, "seed", c.data.seed);
    detail::read_opt(data, "standardize", c.data.standardize);
    detail::read_opt(data, "path", c.data.path);

    c.train.d = c.data.d;
    if (doc.contains("train")) {
      const auto& t = doc["train"];
      detail::reject_unknown(t,
                             {"batch", "epochs", "lr", "case", "reward", "loss_space", "log_epsilon", "hidden_width",
                              "features", "seed", "checkpoint_every", "uniform_epochs", "epsilon_floor", "workers"},
                             "train");
      detail::read_opt(t, "batch", c.train.batch);
      detail::read_opt(t, "epochs", c.train.epochs);
      detail::read_opt(t, "lr", c.train.lr);
      if (t.contains("case")) c.train.mode = sampling_case_from_int(t["case"].get<int>());
      if (t.contains("reward")) {
        const auto& r = t["reward"];
        detail::reject_unknown(r, {"kind", "c", "tau"}, "train.reward");
        if (r.contains("kind")) c.train.reward.kind = reward_kind_from_string(r["kind"].get<std::string>());
        detail::read_opt(r, "c", c.train.reward.scale);
        detail::read_opt(r, "tau", c.train.reward.temperature);
      }
      if (t.contains("loss_space")) c.train.loss_space = loss_space_from_string(t["loss_space"].get<std::string>());
      detail::read_opt(t, "log_epsilon", c.train.log_epsilon);
      detail::read_opt(t, "hidden_width", c.train.hidden);
      if (t.contains("features")) c.train.features = feature_mode_from_string(t["features"].get<std::string>());
      detail::read_opt(t, "seed", c.train.seed);
      detail::read_opt(t, "checkpoint_every", c.train.checkpoint_every);
      detail::read_opt(t, "uniform_epochs", c.train.uniform_epochs);
      detail::read_opt(t, "epsilon_floor", c.train.epsilon_floor);
      detail::read_opt(t, "workers", c.train.workers);
    }
    if (doc.contains("prune")) {
      const auto& p = doc["prune"];
      detail::reject_unknown(p, {"method", "omega", "lambda"}, "prune");
      if (p.contains("method")) c.prune.method = prune_method_from_string(p["method"].get<std::string>());
      detail::read_opt(p, "omega", c.prune.omega);
      detail::read_opt(p, "lambda", c.prune.lambda);
    }
    c.train.prune_omega = c.prune.omega;
    detail::read_opt(doc, "output_dir", c.output_dir);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& p) {
  std::ifstream is(p);
  if (!is) throw ParseError("cannot open config " + p.string());
  nlohmann::json doc;
  try {
    is >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("config " + p.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(doc);
}

/// Fully resolved config, every default made explicit.
inline nlohmann::json to_json(const ExperimentConfig& c) {
  return {
      {"data",
       {{"d", c.data.d},
        {"n", c.data.n},
        {"graph_type", to_string(c.data.graph_type)},
        {"beta", c.data.beta},
        {"noise", {{"kind", to_string(c.data.noise.kind)}, {"scale", c.data.noise.scale}}},
        {"seed", c.data.seed},
        {"standardize", c.data.standardize},
        {"path", c.data.path}}},
      {"train",
       {{"batch", c.train.batch},
        {"epochs", c.train.epochs},
        {"lr", c.train.lr},
        {"case", static_cast<int>(c.train.mode)},
        {"reward",
         {{"kind", to_string(c.train.reward.kind)}, {"c", c.train.reward.scale}, {"tau", c.train.reward.temperature}}},
        {"loss_space", to_string(c.train.loss_space)},
        {"log_epsilon", c.train.log_epsilon},
        {"hidden_width", c.train.hidden},
        {"features", to_string(c.train.features)},
        {"seed", c.train.seed},
        {"checkpoint_every", c.train.checkpoint_every},
        {"uniform_epochs", c.train.uniform_epochs},
        {"epsilon_floor", c.train.epsilon_floor},
        {"workers", c.train.workers}}},
      {"prune", {{"method", to_string(c.prune.method)}, {"omega", c.prune.omega}, {"lambda", c.prune.lambda}}},
      {"output_dir", c.output_dir},
  };
}

}  // namespace gfc
