#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "geoloc/error.hpp"

namespace geoloc {

using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

enum class Activation { Linear, Relu, Tanh, Sigmoid };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::Linear: return "linear";
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Sigmoid: return "sigmoid";
  }
  return "linear";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "linear") return Activation::Linear;
  if (s == "relu") return Activation::Relu;
  if (s == "tanh") return Activation::Tanh;
  if (s == "sigmoid") return Activation::Sigmoid;
  fail(ErrorKind::Schema, "unknown activation '" + s + "'");
}

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct DenseLayer {
  MatX weight;  // out x in
  VecX bias;
  Activation activation = Activation::Linear;

  friend bool operator==(const DenseLayer& a, const DenseLayer& b) {
    return a.activation == b.activation && a.weight.rows() == b.weight.rows() && a.weight.cols() == b.weight.cols() &&
           a.weight == b.weight && a.bias == b.bias;
  }
};

struct MlpParams {
  std::vector<DenseLayer> layers;

  Eigen::Index input_dim() const { return layers.empty() ? 0 : layers.front().weight.cols(); }
  Eigen::Index output_dim() const { return layers.empty() ? 0 : layers.back().weight.rows(); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
  }

  void validate() const {
    for (std::size_t k = 0; k < layers.size(); ++k) {
      const auto& l = layers[k];
      if (l.bias.size() != l.weight.rows()) fail(ErrorKind::ShapeMismatch, "bias length differs from layer width");
      if (k > 0 && l.weight.cols() != layers[k - 1].weight.rows())
        fail(ErrorKind::ShapeMismatch, "layer " + std::to_string(k) + " does not chain with its predecessor");
      if (!l.weight.allFinite() || !l.bias.allFinite()) fail(ErrorKind::InvariantViolation, "non-finite parameter");
    }
  }

  /// Same shapes, all zeros. Used as a gradient accumulator.
  MlpParams zeros_like() const {
    MlpParams z = *this;
    for (auto& l : z.layers) {
      l.weight.setZero();
      l.bias.setZero();
    }
    return z;
  }

  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

/// Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)), zero biases.
inline MlpParams make_mlp(const std::vector<int>& sizes, Activation hidden, Activation output, std::uint64_t seed) {
  if (sizes.size() < 2) fail(ErrorKind::Config, "an MLP needs at least input and output sizes");
  std::mt19937_64 rng(seed);
  MlpParams p;
  for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
    const int in = sizes[k], out = sizes[k + 1];
    if (in <= 0 || out <= 0) fail(ErrorKind::Config, "layer sizes must be positive");
    const double limit = std::sqrt(6.0 / (in + out));
    std::uniform_real_distribution<double> u(-limit, limit);
    DenseLayer l;
    l.weight.resize(out, in);
    for (Eigen::Index c = 0; c < l.weight.cols(); ++c)
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r) l.weight(r, c) = u(rng);
    l.bias = VecX::Zero(out);
    l.activation = (k + 2 == sizes.size()) ? output : hidden;
    p.layers.push_back(std::move(l));
  }
  return p;
}

inline double activate(Activation a, double z) {
  switch (a) {
    case Activation::Linear: return z;
    case Activation::Relu: return z > 0.0 ? z : 0.0;
    case Activation::Tanh: return std::tanh(z);
    case Activation::Sigmoid: return sigmoid(z);
  }
  return z;
}

/// d activation / d z, from the pre-activation z and output y.
inline double activation_slope(Activation a, double z, double y) {
  switch (a) {
    case Activation::Linear: return 1.0;
    case Activation::Relu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::Tanh: return 1.0 - y * y;
    case Activation::Sigmoid: return y * (1.0 - y);
  }
  return 1.0;
}

/// Per-layer inputs and pre-activations of one forward pass.
struct MlpTrace {
  std::vector<VecX> inputs;
  std::vector<VecX> pre;
  VecX output;

  /// Pre-activation of the final layer (e.g. the logit under a sigmoid head).
  const VecX& final_pre() const { return pre.back(); }
};

inline MlpTrace mlp_trace(const MlpParams& p, const VecX& x) {
  if (p.layers.empty()) fail(ErrorKind::ShapeMismatch, "empty MLP");
  if (x.size() != p.input_dim())
    fail(ErrorKind::ShapeMismatch,
         "MLP input has " + std::to_string(x.size()) + " entries, expected " + std::to_string(p.input_dim()));
  MlpTrace t;
  t.inputs.reserve(p.layers.size());
  t.pre.reserve(p.layers.size());
  VecX a = x;
  for (const auto& l : p.layers) {
    t.inputs.push_back(a);
    VecX z = l.weight * a + l.bias;
    a = z.unaryExpr([&](double v) { return activate(l.activation, v); });
    t.pre.push_back(std::move(z));
  }
  t.output = std::move(a);
  return t;
}

inline VecX mlp_forward(const MlpParams& p, const VecX& x) { return mlp_trace(p, x).output; }

/// Row-wise forward; each row goes through the same path as a single call.
inline MatX mlp_forward_batch(const MlpParams& p, const MatX& rows) {
  MatX out(rows.rows(), p.output_dim());
  for (Eigen::Index r = 0; r < rows.rows(); ++r) out.row(r) = mlp_forward(p, rows.row(r).transpose()).transpose();
  return out;
}

/// Accumulates dLoss/dparams into `grads` given dLoss/doutput; returns dLoss/dinput.
inline VecX mlp_backward(const MlpParams& p, const MlpTrace& t, const VecX& upstream, MlpParams& grads) {
  if (upstream.size() != p.output_dim()) fail(ErrorKind::ShapeMismatch, "upstream gradient has the wrong length");
  VecX delta = upstream;
  for (std::size_t k = p.layers.size(); k-- > 0;) {
    const auto& l = p.layers[k];
    const VecX& z = t.pre[k];
    const VecX y = (k + 1 == p.layers.size()) ? t.output : t.inputs[k + 1];
    for (Eigen::Index i = 0; i < delta.size(); ++i) delta[i] *= activation_slope(l.activation, z[i], y[i]);
    grads.layers[k].weight.noalias() += delta * t.inputs[k].transpose();
    grads.layers[k].bias += delta;
    delta = l.weight.transpose() * delta;
  }
  return delta;
}

/// Use for the pre-activation route: upstream is dLoss/d(final pre-activation).
inline VecX mlp_backward_from_pre(const MlpParams& p, const MlpTrace& t, const VecX& upstream_pre, MlpParams& grads) {
  VecX delta = upstream_pre;
  for (std::size_t k = p.layers.size(); k-- > 0;) {
    const auto& l = p.layers[k];
    if (k + 1 != p.layers.size()) {
      const VecX& z = t.pre[k];
      const VecX& y = t.inputs[k + 1];
      for (Eigen::Index i = 0; i < delta.size(); ++i) delta[i] *= activation_slope(l.activation, z[i], y[i]);
    }
    grads.layers[k].weight.noalias() += delta * t.inputs[k].transpose();
    grads.layers[k].bias += delta;
    delta = l.weight.transpose() * delta;
  }
  return delta;
}

struct MlpGradients {
  MlpParams params;
  VecX input;
};

inline MlpGradients mlp_backward(const MlpParams& p, const VecX& x, const VecX& upstream) {
  const MlpTrace t = mlp_trace(p, x);
  MlpGradients g{p.zeros_like(), {}};
  g.input = mlp_backward(p, t, upstream, g.params);
  return g;
}

// Flat parameter views, layer order, weight (column-major) then bias.

inline std::vector<double> flatten(const MlpParams& p) {
  std::vector<double> out;
  out.reserve(p.parameter_count());
  for (const auto& l : p.layers) {
    out.insert(out.end(), l.weight.data(), l.weight.data() + l.weight.size());
    out.insert(out.end(), l.bias.data(), l.bias.data() + l.bias.size());
  }
  return out;
}

/// Writes `values` into `p`; returns the number consumed.
inline std::size_t assign(MlpParams& p, std::span<const double> values) {
  std::size_t k = 0;
  for (auto& l : p.layers) {
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = values[k++];
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias.data()[i] = values[k++];
  }
  return k;
}

inline nlohmann::json to_json(const MlpParams& p) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : p.layers) {
    std::vector<double> w(l.weight.size());
    // row-major on disk
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) w[r * l.weight.cols() + c] = l.weight(r, c);
    layers.push_back({{"in", l.weight.cols()},
                      {"out", l.weight.rows()},
                      {"activation", to_string(l.activation)},
                      {"weight", w},
                      {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}});
  }
  return {{"layers", layers}};
}

inline MlpParams mlp_from_json(const nlohmann::json& j) {
  MlpParams p;
  try {
    for (const auto& jl : j.at("layers")) {
      DenseLayer l;
      const auto in = jl.at("in").get<Eigen::Index>(), out = jl.at("out").get<Eigen::Index>();
      const auto w = jl.at("weight").get<std::vector<double>>();
      const auto b = jl.at("bias").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(w.size()) != in * out || static_cast<Eigen::Index>(b.size()) != out)
        fail(ErrorKind::Schema, "layer data does not match its declared shape");
      l.weight.resize(out, in);
      for (Eigen::Index r = 0; r < out; ++r)
        for (Eigen::Index c = 0; c < in; ++c) l.weight(r, c) = w[r * in + c];
      l.bias = Eigen::Map<const VecX>(b.data(), out);
      l.activation = activation_from_string(jl.at("activation").get<std::string>());
      p.layers.push_back(std::move(l));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Schema, std::string("malformed MLP parameters: ") + e.what());
  }
  p.validate();
  return p;
}

}  // namespace geoloc
