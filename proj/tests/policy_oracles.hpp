#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "flowlab/policy.hpp"

namespace flowlab::testutil {

// Independent closed-form Gaussian-chain density: assembles the joint log
// probability step by step with scalar arithmetic, bypassing log_prob()'s
// internal helpers.
inline double closed_form_chain_log_prob(const PolicyParams& params, const DenoisingChain& chain,
                                         const Eigen::VectorXd& z) {
  const int n = static_cast<int>(chain.chunks.front().size());
  const double log_two_pi = std::log(2.0 * 3.14159265358979323846);
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    acc += -0.5 * chain.chunks.front()(i) * chain.chunks.front()(i) - 0.5 * log_two_pi;
  }
  const int k_steps = chain.k_steps();
  const double dt = 1.0 / k_steps;
  for (int k = 0; k < k_steps; ++k) {
    const double tau = k * dt;
    // Assemble the conditioning vector by hand.
    Eigen::VectorXd input(params.config.head_input_dim());
    input.segment(0, n) = chain.chunks[k];
    input.segment(n, z.size()) = z;
    input(input.size() - 1) = tau;
    const Eigen::VectorXd v = mlp_forward(params.velocity_head, input);
    const Eigen::VectorXd raw = mlp_forward(params.noise_head, input);
    for (int i = 0; i < n; ++i) {
      const double mean = chain.chunks[k](i) + v(i) * dt;
      double log_std = raw(i);
      if (log_std < params.config.log_std_min) log_std = params.config.log_std_min;
      if (log_std > params.config.log_std_max) log_std = params.config.log_std_max;
      const double s = std::exp(log_std);
      const double d = chain.chunks[k + 1](i) - mean;
      acc += -0.5 * (d / s) * (d / s) - log_std - 0.5 * log_two_pi;
    }
  }
  return acc;
}

}  // namespace flowlab::testutil
