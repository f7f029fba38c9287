#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "gfc/bit_matrix.hpp"
#include "gfc/errors.hpp"
#include "gfc/graph_state.hpp"

namespace gfc {

enum class FeatureMode { kAdjacency, kAdjacencyClosure };

inline std::string to_string(FeatureMode m) {
  return m == FeatureMode::kAdjacency ? "adjacency" : "adjacency+closure";
}

inline FeatureMode feature_mode_from_string(const std::string& s) {
  if (s == "adjacency") return FeatureMode::kAdjacency;
  if (s == "adjacency+closure") return FeatureMode::kAdjacencyClosure;
  throw InvalidParameter("unknown feature mode '" + s + "'");
}

inline constexpr double kLeakySlope = 0.01;

/// Multilayer perceptron with two leaky-ReLU hidden layers mapping a state to
/// d*d log-flows, one per action index (to * d + from).
///
/// Parameters live in one flat vector, layer by layer, weights (column-major)
/// before biases. Gradients and optimiser moments use the same layout.
class FlowNet {
 public:
  static constexpr std::size_t kLayers = 3;

  FlowNet() = default;

  FlowNet(std::size_t d, std::size_t hidden, FeatureMode features = FeatureMode::kAdjacency)
      : d_(d), hidden_(hidden), features_(features) {
    if (d < 2) throw InvalidDimension("flow network needs d >= 2");
    if (hidden < 1) throw InvalidParameter("hidden width must be positive");
    const std::size_t in = input_dim();
    dims_ = {in, hidden, hidden, d * d};
    std::size_t off = 0;
    for (std::size_t l = 0; l < kLayers; ++l) {
      weight_offset_[l] = off;
      off += dims_[l + 1] * dims_[l];
      bias_offset_[l] = off;
      off += dims_[l + 1];
    }
    params_.assign(off, 0.0);
  }

  /// Glorot-uniform weights, zero biases.
  void initialize(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::fill(params_.begin(), params_.end(), 0.0);
    for (std::size_t l = 0; l < kLayers; ++l) {
      const double bound = std::sqrt(6.0 / static_cast<double>(dims_[l] + dims_[l + 1]));
      std::uniform_real_distribution<double> dist(-bound, bound);
      auto w = weight(l);
      for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = dist(rng);
    }
  }

  std::size_t d() const noexcept { return d_; }
  std::size_t hidden() const noexcept { return hidden_; }
  FeatureMode features() const noexcept { return features_; }
  std::size_t input_dim() const noexcept { return features_ == FeatureMode::kAdjacency ? d_ * d_ : 2 * d_ * d_; }
  std::size_t output_dim() const noexcept { return d_ * d_; }
  std::size_t parameter_count() const noexcept { return params_.size(); }
  const std::array<std::size_t, kLayers + 1>& dims() const noexcept { return dims_; }

  std::vector<double>& parameters() noexcept { return params_; }
  const std::vector<double>& parameters() const noexcept { return params_; }

  using MatMap = Eigen::Map<Eigen::MatrixXd>;
  using ConstMatMap = Eigen::Map<const Eigen::MatrixXd>;
  using VecMap = Eigen::Map<Eigen::VectorXd>;
  using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

  MatMap weight(std::size_t l) { return {params_.data() + weight_offset_[l], rows(l), cols(l)}; }
  ConstMatMap weight(std::size_t l) const { return {params_.data() + weight_offset_[l], rows(l), cols(l)}; }
  VecMap bias(std::size_t l) { return {params_.data() + bias_offset_[l], rows(l)}; }
  ConstVecMap bias(std::size_t l) const { return {params_.data() + bias_offset_[l], rows(l)}; }

  MatMap weight_of(std::vector<double>& flat, std::size_t l) const {
    return {flat.data() + weight_offset_[l], rows(l), cols(l)};
  }
  VecMap bias_of(std::vector<double>& flat, std::size_t l) const { return {flat.data() + bias_offset_[l], rows(l)}; }

 private:
  Eigen::Index rows(std::size_t l) const { return static_cast<Eigen::Index>(dims_[l + 1]); }
  Eigen::Index cols(std::size_t l) const { return static_cast<Eigen::Index>(dims_[l]); }

  std::size_t d_ = 0;
  std::size_t hidden_ = 0;
  FeatureMode features_ = FeatureMode::kAdjacency;
  std::array<std::size_t, kLayers + 1> dims_{};
  std::array<std::size_t, kLayers> weight_offset_{};
  std::array<std::size_t, kLayers> bias_offset_{};
  std::vector<double> params_;
};

/// Writes the network input for one state into `out` (length input_dim).
inline void encode_state(const FlowNet& net, const BuilderState& s, Eigen::Ref<Eigen::VectorXd> out) {
  if (s.d() != net.d()) throw ShapeError("state has d=" + std::to_string(s.d()) + ", network expects " +
                                         std::to_string(net.d()));
  const std::size_t d = s.d();
  out.setZero();
  s.adjacency().for_each_set([&](std::size_t i, std::size_t j) { out(static_cast<Eigen::Index>(i * d + j)) = 1.0; });
  if (net.features() == FeatureMode::kAdjacencyClosure) {
    s.closure().for_each_set([&](std::size_t i, std::size_t j) {
      if (i != j) out(static_cast<Eigen::Index>(d * d + i * d + j)) = 1.0;
    });
  }
}

/// Activations kept for backpropagation; one column per input state.
struct ForwardCache {
  Eigen::MatrixXd input;
  std::array<Eigen::MatrixXd, FlowNet::kLayers> pre;   // pre-activations
  std::array<Eigen::MatrixXd, FlowNet::kLayers> post;  // activations; post[2] is the output
};

inline Eigen::MatrixXd leaky_relu(const Eigen::MatrixXd& z) {
  return z.unaryExpr([](double v) { return v > 0 ? v : kLeakySlope * v; });
}

inline ForwardCache forward_batch(const FlowNet& net, Eigen::MatrixXd input) {
  if (static_cast<std::size_t>(input.rows()) != net.input_dim()) throw ShapeError("input has wrong feature count");
  ForwardCache c;
  c.input = std::move(input);
  const Eigen::MatrixXd* prev = &c.input;
  for (std::size_t l = 0; l < FlowNet::kLayers; ++l) {
    c.pre[l] = net.weight(l) * *prev;
    c.pre[l].colwise() += net.bias(l);
    c.post[l] = l + 1 < FlowNet::kLayers ? leaky_relu(c.pre[l]) : c.pre[l];
    prev = &c.post[l];
  }
  return c;
}

inline Eigen::MatrixXd encode_states(const FlowNet& net, std::span<const BuilderState* const> states) {
  Eigen::MatrixXd input(static_cast<Eigen::Index>(net.input_dim()), static_cast<Eigen::Index>(states.size()));
  for (std::size_t k = 0; k < states.size(); ++k) encode_state(net, *states[k], input.col(static_cast<Eigen::Index>(k)));
  return input;
}

/// Log-flows log F(s, a) for every action index of one state.
inline Eigen::VectorXd forward(const FlowNet& net, const BuilderState& s) {
  const BuilderState* one[] = {&s};
  return forward_batch(net, encode_states(net, one)).post[FlowNet::kLayers - 1].col(0);
}

/// Gradient of sum(upstream .* output) with respect to the flat parameters.
inline std::vector<double> backward_batch(const FlowNet& net, const ForwardCache& c, const Eigen::MatrixXd& upstream) {
  std::vector<double> grad(net.parameter_count(), 0.0);
  Eigen::MatrixXd delta = upstream;
  for (std::size_t l = FlowNet::kLayers; l-- > 0;) {
    const Eigen::MatrixXd& below = l == 0 ? c.input : c.post[l - 1];
    net.weight_of(grad, l).noalias() = delta * below.transpose();
    net.bias_of(grad, l) = delta.rowwise().sum();
    if (l == 0) break;
    Eigen::MatrixXd back = net.weight(l).transpose() * delta;
    const Eigen::MatrixXd& z = c.pre[l - 1];
    delta = back.cwiseProduct(z.unaryExpr([](double v) { return v > 0 ? 1.0 : kLeakySlope; }));
  }
  return grad;
}

/// Policy over the d*d action indices.
struct ActionDistribution {
  std::vector<double> probs;
  std::vector<bool> support;
};

/// Softmax restricted to entries whose forbid-mask bit is 0.
inline ActionDistribution masked_distribution(std::span<const double> logflows, const BitMatrix& forbidden) {
  const std::size_t d = forbidden.size();
  if (logflows.size() != d * d) throw ShapeError("log-flow vector length differs from d*d");
  ActionDistribution dist{std::vector<double>(d * d, 0.0), std::vector<bool>(d * d, false)};
  double peak = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      if (forbidden.test(i, j)) continue;
      const std::size_t k = i * d + j;
      dist.support[k] = true;
      peak = std::max(peak, logflows[k]);
      any = true;
    }
  if (!any) throw DeadEnd("every action is masked");
  double total = 0;
  for (std::size_t k = 0; k < d * d; ++k)
    if (dist.support[k]) total += dist.probs[k] = std::exp(logflows[k] - peak);
  for (auto& p : dist.probs) p /= total;
  return dist;
}

inline ActionDistribution masked_distribution(const Eigen::VectorXd& logflows, const BitMatrix& forbidden) {
  return masked_distribution(std::span<const double>(logflows.data(), static_cast<std::size_t>(logflows.size())),
                             forbidden);
}

/// Mixes a distribution with the uniform one over its support: (1 - eps) p + eps u.
inline void mix_uniform(ActionDistribution& dist, double eps) {
  if (eps <= 0) return;
  const auto k = static_cast<double>(std::count(dist.support.begin(), dist.support.end(), true));
  for (std::size_t a = 0; a < dist.probs.size(); ++a)
    if (dist.support[a]) dist.probs[a] = (1.0 - eps) * dist.probs[a] + eps / k;
}

/// Adam moments and hyperparameters.
struct OptState {
  std::vector<double> m;
  std::vector<double> v;
  std::size_t step = 0;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static OptState for_net(const FlowNet& net, double lr = 1e-4) {
    OptState o;
    o.m.assign(net.parameter_count(), 0.0);
    o.v.assign(net.parameter_count(), 0.0);
    o.lr = lr;
    return o;
  }
};

/// One bias-corrected Adam update of a flat parameter vector.
inline void adam_update(std::vector<double>& params, std::span<const double> grads, OptState& opt) {
  if (grads.size() != params.size() || opt.m.size() != params.size() || opt.v.size() != params.size())
    throw ShapeError("gradient or moment shape differs from parameters");
  for (double g : grads)
    if (!std::isfinite(g)) throw TrainingDivergence("non-finite gradient", opt.step + 1);
  ++opt.step;
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    opt.m[k] = opt.beta1 * opt.m[k] + (1.0 - opt.beta1) * grads[k];
    opt.v[k] = opt.beta2 * opt.v[k] + (1.0 - opt.beta2) * grads[k] * grads[k];
    const double mhat = opt.m[k] / c1;
    const double vhat = opt.v[k] / c2;
    params[k] -= opt.lr * mhat / (std::sqrt(vhat) + opt.eps);
  }
}

inline void adam_step(FlowNet& net, std::span<const double> grads, OptState& opt) {
  adam_update(net.parameters(), grads, opt);
}

// Checkpoints: <stem>.json manifest plus <stem>.bin holding little-endian
// float64 parameters, then first moments, then second moments.

namespace detail {

inline std::uint64_t swap_bytes(std::uint64_t v) {
  std::uint64_t r = 0;
  for (int i = 0; i < 8; ++i) r = (r << 8) | ((v >> (8 * i)) & 0xFFU);
  return r;
}

inline void write_le_doubles(std::ostream& os, std::span<const double> values) {
  for (double v : values) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    if constexpr (std::endian::native == std::endian::big) bits = swap_bytes(bits);
    os.write(reinterpret_cast<const char*>(&bits), sizeof(bits));
  }
}

inline void read_le_doubles(std::istream& is, std::span<double> values) {
  for (double& v : values) {
    std::uint64_t bits = 0;
    if (!is.read(reinterpret_cast<char*>(&bits), sizeof(bits))) throw ParseError("checkpoint binary is truncated");
    if constexpr (std::endian::native == std::endian::big) bits = swap_bytes(bits);
    v = std::bit_cast<double>(bits);
  }
}

}  // namespace detail

struct Checkpoint {
  FlowNet net;
  OptState opt;
  nlohmann::json extra;  // caller-defined context (reward, data path, ...)
};

inline void save_checkpoint(const std::filesystem::path& stem, const FlowNet& net, const OptState& opt,
                            const nlohmann::json& extra = nlohmann::json::object()) {
  std::filesystem::path json_path = stem;
  json_path += ".json";
  std::filesystem::path bin_path = stem;
  bin_path += ".bin";

  nlohmann::json shapes = nlohmann::json::array();
  for (std::size_t l = 0; l < FlowNet::kLayers; ++l) {
    shapes.push_back({{"name", "w" + std::to_string(l)}, {"shape", {net.dims()[l + 1], net.dims()[l]}}});
    shapes.push_back({{"name", "b" + std::to_string(l)}, {"shape", {net.dims()[l + 1]}}});
  }
  nlohmann::json manifest = {
      {"format", "gfc-flownet-v1"},
      {"d", net.d()},
      {"hidden_width", net.hidden()},
      {"features", to_string(net.features())},
      {"layer_shapes", shapes},
      {"parameter_count", net.parameter_count()},
      {"blocks", {"parameters", "adam_m", "adam_v"}},
      {"binary", bin_path.filename().string()},
      {"optimizer", {{"lr", opt.lr}, {"beta1", opt.beta1}, {"beta2", opt.beta2}, {"eps", opt.eps}}},
      {"step", opt.step},
      {"extra", extra},
  };
  {
    std::ofstream js(json_path);
    if (!js) throw ParseError("cannot write " + json_path.string());
    js << manifest.dump(2) << '\n';
  }
  std::ofstream bin(bin_path, std::ios::binary);
  if (!bin) throw ParseError("cannot write " + bin_path.string());
  detail::write_le_doubles(bin, net.parameters());
  detail::write_le_doubles(bin, opt.m);
  detail::write_le_doubles(bin, opt.v);
}

/// Accepts either the stem or the .json manifest path.
inline Checkpoint load_checkpoint(std::filesystem::path path) {
  if (path.extension() != ".json") path += ".json";
  std::ifstream js(path);
  if (!js) throw ParseError("cannot open checkpoint " + path.string());
  nlohmann::json manifest;
  try {
    js >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("checkpoint manifest is not valid JSON: " + std::string(e.what()));
  }
  if (manifest.value("format", "") != "gfc-flownet-v1") throw ParseError("unknown checkpoint format");
  Checkpoint ck;
  ck.net = FlowNet(manifest.at("d").get<std::size_t>(), manifest.at("hidden_width").get<std::size_t>(),
                   feature_mode_from_string(manifest.at("features").get<std::string>()));
  if (manifest.at("parameter_count").get<std::size_t>() != ck.net.parameter_count())
    throw ParseError("checkpoint parameter count does not match its layer shapes");
  ck.opt = OptState::for_net(ck.net, manifest.at("optimizer").at("lr").get<double>());
  ck.opt.beta1 = manifest["optimizer"].at("beta1").get<double>();
  ck.opt.beta2 = manifest["optimizer"].at("beta2").get<double>();
  ck.opt.eps = manifest["optimizer"].at("eps").get<double>();
  ck.opt.step = manifest.at("step").get<std::size_t>();
  ck.extra = manifest.value("extra", nlohmann::json::object());

  const auto bin_path = path.parent_path() / manifest.at("binary").get<std::string>();
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw ParseError("cannot open checkpoint binary " + bin_path.string());
  detail::read_le_doubles(bin, ck.net.parameters());
  detail::read_le_doubles(bin, ck.opt.m);
  detail::read_le_doubles(bin, ck.opt.v);
  return ck;
}

}  // namespace gfc
