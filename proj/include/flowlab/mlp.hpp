#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "flowlab/common.hpp"
#include "flowlab/rng.hpp"

namespace flowlab {

enum class Activation { kTanh, kRelu, kIdentity };

inline const char* activation_name(Activation a) {
  switch (a) {
    case Activation::kTanh: return "tanh";
    case Activation::kRelu: return "relu";
    case Activation::kIdentity: return "identity";
  }
  return "?";
}

inline Activation activation_from_name(const std::string& s) {
  if (s == "tanh") return Activation::kTanh;
  if (s == "relu") return Activation::kRelu;
  if (s == "identity") return Activation::kIdentity;
  throw ConfigError("unknown activation: " + s);
}

// Layer widths [in, h0, ..., out] plus one activation per layer.
struct MlpSpec {
  std::vector<int> widths;
  std::vector<Activation> activations;

  int num_layers() const { return static_cast<int>(widths.size()) - 1; }
  int input_width() const { return widths.front(); }
  int output_width() const { return widths.back(); }

  void validate() const {
    if (widths.size() < 2) throw ConfigError("MlpSpec: at least one layer required");
    for (int w : widths) {
      if (w <= 0) throw ConfigError("MlpSpec: layer widths must be positive");
    }
    if (activations.size() != widths.size() - 1) {
      throw ConfigError("MlpSpec: need one activation per layer");
    }
  }

  // [in, hidden x depth, out] with tanh hidden layers and identity output.
  static MlpSpec dense(int in, int out, int hidden, int depth) {
    MlpSpec spec;
    spec.widths.push_back(in);
    for (int i = 0; i < depth; ++i) spec.widths.push_back(hidden);
    spec.widths.push_back(out);
    spec.activations.assign(spec.widths.size() - 1, Activation::kTanh);
    spec.activations.back() = Activation::kIdentity;
    return spec;
  }
};

// One learnable tensor plus its gradient accumulator; grad always mirrors
// the value shape.
struct ParamBlock {
  std::string name;
  Eigen::MatrixXd values;
  Eigen::MatrixXd grad;

  ParamBlock() = default;
  ParamBlock(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)),
        values(Eigen::MatrixXd::Zero(rows, cols)),
        grad(Eigen::MatrixXd::Zero(rows, cols)) {}
};

// Activation record from a forward pass: per-layer inputs and pre-activations.
struct MlpTape {
  std::vector<Eigen::VectorXd> inputs;
  std::vector<Eigen::VectorXd> preacts;
};

// Dense feed-forward network; blocks laid out as [W0, b0, W1, b1, ...].
struct Mlp {
  MlpSpec spec;
  std::vector<ParamBlock> blocks;

  ParamBlock& weight(int layer) { return blocks[2 * layer]; }
  ParamBlock& bias(int layer) { return blocks[2 * layer + 1]; }
  const ParamBlock& weight(int layer) const { return blocks[2 * layer]; }
  const ParamBlock& bias(int layer) const { return blocks[2 * layer + 1]; }
};

// Uniform fan-in weight init, zero biases.
inline Mlp make_mlp(const MlpSpec& spec, const std::string& name_prefix, Rng& rng) {
  spec.validate();
  Mlp mlp;
  mlp.spec = spec;
  for (int l = 0; l < spec.num_layers(); ++l) {
    const int in = spec.widths[l];
    const int out = spec.widths[l + 1];
    ParamBlock w(name_prefix + "/W" + std::to_string(l), out, in);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (Eigen::Index i = 0; i < w.values.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.values.cols(); ++j) {
        w.values(i, j) = rng.uniform(-bound, bound);
      }
    }
    mlp.blocks.push_back(std::move(w));
    mlp.blocks.emplace_back(name_prefix + "/b" + std::to_string(l), out, 1);
  }
  return mlp;
}

inline double apply_activation(Activation a, double x) {
  switch (a) {
    case Activation::kTanh: return std::tanh(x);
    case Activation::kRelu: return x > 0.0 ? x : 0.0;
    case Activation::kIdentity: return x;
  }
  return x;
}

inline double activation_derivative(Activation a, double pre) {
  switch (a) {
    case Activation::kTanh: {
      const double t = std::tanh(pre);
      return 1.0 - t * t;
    }
    case Activation::kRelu: return pre > 0.0 ? 1.0 : 0.0;
    case Activation::kIdentity: return 1.0;
  }
  return 1.0;
}

// Forward pass; records the activation tape when `tape` is non-null.
// Pure in (params, input).
inline Eigen::VectorXd mlp_forward(const Mlp& mlp, const Eigen::VectorXd& input,
                                   MlpTape* tape = nullptr) {
  if (input.size() != mlp.spec.input_width()) {
    throw ConfigError("mlp_forward: input width " + std::to_string(input.size()) +
                      " != spec width " + std::to_string(mlp.spec.input_width()));
  }
  if (tape) {
    tape->inputs.clear();
    tape->preacts.clear();
  }
  Eigen::VectorXd x = input;
  for (int l = 0; l < mlp.spec.num_layers(); ++l) {
    Eigen::VectorXd pre = mlp.weight(l).values * x + mlp.bias(l).values.col(0);
    if (tape) {
      tape->inputs.push_back(x);
      tape->preacts.push_back(pre);
    }
    const Activation a = mlp.spec.activations[l];
    for (Eigen::Index i = 0; i < pre.size(); ++i) {
      pre(i) = apply_activation(a, pre(i));
    }
    x = std::move(pre);
  }
  return x;
}

// Reverse-mode pass for output·upstream. Accumulates into each block's grad
// and returns the gradient with respect to the input vector.
inline Eigen::VectorXd mlp_backward(Mlp& mlp, const MlpTape& tape,
                                    const Eigen::VectorXd& upstream) {
  const int layers = mlp.spec.num_layers();
  if (static_cast<int>(tape.inputs.size()) != layers ||
      static_cast<int>(tape.preacts.size()) != layers) {
    throw UsageError("mlp_backward: tape does not match network depth");
  }
  if (upstream.size() != mlp.spec.output_width()) {
    throw UsageError("mlp_backward: upstream width mismatch");
  }
  Eigen::VectorXd delta = upstream;
  for (int l = layers - 1; l >= 0; --l) {
    const Eigen::VectorXd& pre = tape.preacts[l];
    const Eigen::VectorXd& x = tape.inputs[l];
    if (x.size() != mlp.spec.widths[l] || pre.size() != mlp.spec.widths[l + 1]) {
      throw UsageError("mlp_backward: stale tape for layer " + std::to_string(l));
    }
    const Activation a = mlp.spec.activations[l];
    Eigen::VectorXd dpre(pre.size());
    for (Eigen::Index i = 0; i < pre.size(); ++i) {
      dpre(i) = delta(i) * activation_derivative(a, pre(i));
    }
    mlp.weight(l).grad.noalias() += dpre * x.transpose();
    mlp.bias(l).grad.col(0) += dpre;
    delta = mlp.weight(l).values.transpose() * dpre;
  }
  return delta;
}

inline void zero_grads(Mlp& mlp) {
  for (auto& b : mlp.blocks) b.grad.setZero();
}

inline long param_count(const Mlp& mlp) {
  long n = 0;
  for (const auto& b : mlp.blocks) n += static_cast<long>(b.values.size());
  return n;
}

}  // namespace flowlab
