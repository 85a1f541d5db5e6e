#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "flowlab/common.hpp"
#include "flowlab/mlp.hpp"

namespace flowlab {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// First/second moment accumulators, one pair per parameter block;
// step_count advances by exactly one per adam_step call.
struct OptimizerState {
  std::vector<Eigen::MatrixXd> first_moment;
  std::vector<Eigen::MatrixXd> second_moment;
  long step_count = 0;
};

inline OptimizerState make_optimizer_state(const std::vector<ParamBlock*>& blocks) {
  OptimizerState state;
  for (const ParamBlock* b : blocks) {
    state.first_moment.emplace_back(Eigen::MatrixXd::Zero(b->values.rows(), b->values.cols()));
    state.second_moment.emplace_back(Eigen::MatrixXd::Zero(b->values.rows(), b->values.cols()));
  }
  return state;
}

inline double global_grad_norm(const std::vector<ParamBlock*>& blocks) {
  double sq = 0.0;
  for (const ParamBlock* b : blocks) sq += b->grad.squaredNorm();
  return std::sqrt(sq);
}

// Scales all gradients by max_norm/norm when the global L2 norm exceeds
// max_norm; identity otherwise. Returns the pre-clip norm. Idempotent.
inline double clip_global_norm(const std::vector<ParamBlock*>& blocks, double max_norm) {
  if (max_norm <= 0.0) throw ConfigError("clip_global_norm: max_norm must be positive");
  const double norm = global_grad_norm(blocks);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (ParamBlock* b : blocks) b->grad *= scale;
  }
  return norm;
}

// Adam with bias correction, applied in block order.
inline void adam_step(const std::vector<ParamBlock*>& blocks, OptimizerState& state,
                      double lr, const AdamConfig& cfg = {}) {
  if (blocks.size() != state.first_moment.size()) {
    throw ConfigError("adam_step: optimizer state does not match parameter blocks");
  }
  state.step_count += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step_count));
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    ParamBlock& b = *blocks[i];
    if (b.grad.rows() != b.values.rows() || b.grad.cols() != b.values.cols()) {
      throw ConfigError("adam_step: grad shape mismatch in " + b.name);
    }
    if (!b.grad.allFinite()) {
      throw DivergenceError("non-finite gradient in parameter block " + b.name);
    }
    Eigen::MatrixXd& m = state.first_moment[i];
    Eigen::MatrixXd& v = state.second_moment[i];
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * b.grad;
    v = cfg.beta2 * v.array().matrix() + (1.0 - cfg.beta2) * b.grad.cwiseProduct(b.grad);
    const Eigen::MatrixXd m_hat = m / bc1;
    const Eigen::MatrixXd v_hat = v / bc2;
    b.values.array() -= lr * m_hat.array() / (v_hat.array().sqrt() + cfg.epsilon);
  }
}

}  // namespace flowlab
