#pragma once

#include <Eigen/Dense>
#include <functional>
#include <utility>
#include <vector>

#include "flowlab/common.hpp"
#include "flowlab/mlp.hpp"
#include "flowlab/observation.hpp"
#include "flowlab/rng.hpp"

namespace flowlab {

// One decision's worth of low-level commands: rows are low-level steps,
// columns are (dx, dy, dz, gripper). The policy samples chunks in a
// dimensionless space; the rollout layer rescales to meters (see world.hpp).
using ActionChunk = Eigen::MatrixXd;

inline ActionChunk to_chunk_matrix(const Eigen::VectorXd& flat, int chunk_len, int action_dim) {
  if (flat.size() != chunk_len * action_dim) {
    throw ConfigError("to_chunk_matrix: flat size mismatch");
  }
  ActionChunk m(chunk_len, action_dim);
  for (int r = 0; r < chunk_len; ++r)
    for (int c = 0; c < action_dim; ++c) m(r, c) = flat(r * action_dim + c);
  return m;
}

inline Eigen::VectorXd flatten_chunk(const ActionChunk& chunk) {
  Eigen::VectorXd flat(chunk.rows() * chunk.cols());
  for (Eigen::Index r = 0; r < chunk.rows(); ++r)
    for (Eigen::Index c = 0; c < chunk.cols(); ++c) flat(r * chunk.cols() + c) = chunk(r, c);
  return flat;
}

struct PolicyConfig {
  int chunk_len = 4;   // C
  int action_dim = 4;  // columns per low-level step
  int k_steps = 1;     // integration steps K used when sampling

  int encoder_hidden = 64;
  int encoder_depth = 2;
  int encoder_out = 64;
  int head_hidden = 64;
  int head_depth = 2;

  double log_std_min = -2.5;
  double log_std_max = -2.0;

  ObservationLayout obs;

  int flat_action_dim() const { return chunk_len * action_dim; }
  // Velocity and noise heads see [flat chunk | z | tau].
  int head_input_dim() const { return flat_action_dim() + encoder_out + 1; }

  void validate() const {
    if (chunk_len <= 0 || action_dim <= 0) throw ConfigError("policy: C and A_dim must be positive");
    if (k_steps < 1) throw ConfigError("policy: K must be >= 1");
    if (log_std_min >= log_std_max) throw ConfigError("policy: log-std clamp is empty");
  }
};

// All learnable parameter blocks: observation encoder, velocity head,
// learnable noise head, and value head.
struct PolicyParams {
  PolicyConfig config;
  Mlp encoder;
  Mlp velocity_head;
  Mlp noise_head;
  Mlp value_head;

  static PolicyParams create(const PolicyConfig& config, Rng& rng) {
    config.validate();
    PolicyParams p;
    p.config = config;
    Rng enc_rng = rng.derive("encoder");
    Rng vel_rng = rng.derive("velocity");
    Rng noise_rng = rng.derive("noise");
    Rng value_rng = rng.derive("value");
    p.encoder = make_mlp(
        MlpSpec::dense(config.obs.dim(), config.encoder_out, config.encoder_hidden, config.encoder_depth),
        "encoder", enc_rng);
    p.velocity_head = make_mlp(
        MlpSpec::dense(config.head_input_dim(), config.flat_action_dim(), config.head_hidden, config.head_depth),
        "velocity", vel_rng);
    p.noise_head = make_mlp(
        MlpSpec::dense(config.head_input_dim(), config.flat_action_dim(), config.head_hidden, config.head_depth),
        "noise", noise_rng);
    p.value_head = make_mlp(
        MlpSpec::dense(config.encoder_out, 1, config.head_hidden, config.head_depth),
        "value", value_rng);
    // Start the log-std at the clamp midpoint for a calibrated initial
    // exploration scale.
    p.noise_head.bias(p.noise_head.spec.num_layers() - 1)
        .values.setConstant(0.5 * (config.log_std_min + config.log_std_max));
    return p;
  }

  std::vector<ParamBlock*> blocks() {
    std::vector<ParamBlock*> out;
    for (Mlp* net : {&encoder, &velocity_head, &noise_head, &value_head}) {
      for (auto& b : net->blocks) out.push_back(&b);
    }
    return out;
  }

  void zero_grads() {
    flowlab::zero_grads(encoder);
    flowlab::zero_grads(velocity_head);
    flowlab::zero_grads(noise_head);
    flowlab::zero_grads(value_head);
  }
};

// The K-step denoising trajectory A^0..A^1 with the per-step Gaussian
// parameters realized at sampling time and the joint log probability.
struct DenoisingChain {
  std::vector<Eigen::VectorXd> chunks;  // K+1 entries; chunks[0] is the initial draw
  std::vector<Eigen::VectorXd> means;   // K entries
  std::vector<Eigen::VectorXd> stds;    // K entries
  double log_prob = 0.0;

  int k_steps() const { return static_cast<int>(chunks.size()) - 1; }
  const Eigen::VectorXd& final_chunk() const { return chunks.back(); }
};

inline double standard_normal_log_density(const Eigen::VectorXd& x) {
  return -0.5 * x.squaredNorm() - 0.5 * kLogTwoPi * static_cast<double>(x.size());
}

inline double diagonal_normal_log_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                                          const Eigen::VectorXd& std) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double u = (x(i) - mean(i)) / std(i);
    acc += -0.5 * u * u - std::log(std(i)) - 0.5 * kLogTwoPi;
  }
  return acc;
}

inline Eigen::VectorXd encode(const PolicyParams& params, const Eigen::VectorXd& obs) {
  return mlp_forward(params.encoder, obs);
}

struct EncodeTrace {
  Eigen::VectorXd z;
  MlpTape tape;
};

inline EncodeTrace encode_traced(const PolicyParams& params, const Eigen::VectorXd& obs) {
  EncodeTrace trace;
  trace.z = mlp_forward(params.encoder, obs, &trace.tape);
  return trace;
}

// Conditioning vector for the velocity and noise heads: the current chunk
// state, the hidden state, and the integration time as a scalar feature.
inline Eigen::VectorXd head_input(const PolicyConfig& config, const Eigen::VectorXd& flat_chunk,
                                  const Eigen::VectorXd& z, double tau) {
  if (flat_chunk.size() != config.flat_action_dim() || z.size() != config.encoder_out) {
    throw ConfigError("head_input: dimension mismatch");
  }
  Eigen::VectorXd input(config.head_input_dim());
  input.segment(0, flat_chunk.size()) = flat_chunk;
  input.segment(flat_chunk.size(), z.size()) = z;
  input(input.size() - 1) = tau;
  return input;
}

inline Eigen::VectorXd velocity_at(const PolicyParams& params, const Eigen::VectorXd& flat_chunk,
                                   const Eigen::VectorXd& z, double tau, MlpTape* tape = nullptr) {
  const Eigen::VectorXd v =
      mlp_forward(params.velocity_head, head_input(params.config, flat_chunk, z, tau), tape);
  if (!v.allFinite()) throw DivergenceError("policy diverged: non-finite velocity output");
  return v;
}

// Clamped per-element log-std and std from the noise head. The raw output is
// clamped to [log_std_min, log_std_max] so emitted stds always lie in
// [exp(log_std_min), exp(log_std_max)].
struct NoiseEval {
  Eigen::VectorXd raw;
  Eigen::VectorXd log_std;
  Eigen::VectorXd std;
};

inline NoiseEval noise_at(const PolicyParams& params, const Eigen::VectorXd& flat_chunk,
                          const Eigen::VectorXd& z, double tau, MlpTape* tape = nullptr) {
  NoiseEval eval;
  eval.raw = mlp_forward(params.noise_head, head_input(params.config, flat_chunk, z, tau), tape);
  if (!eval.raw.allFinite()) throw DivergenceError("policy diverged: non-finite noise output");
  eval.log_std = eval.raw.cwiseMax(params.config.log_std_min).cwiseMin(params.config.log_std_max);
  eval.std = eval.log_std.array().exp();
  return eval;
}

inline Eigen::VectorXd draw_standard_normal(int n, Rng& rng) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = rng.normal();
  return v;
}

// Deterministic Euler integration of the learned velocity field from a given
// initial chunk; no noise injection.
inline Eigen::VectorXd sample_ode_from(const PolicyParams& params, const Eigen::VectorXd& z,
                                       int k_steps, const Eigen::VectorXd& initial) {
  if (k_steps < 1) throw ConfigError("sample_ode: K must be >= 1");
  const double dt = 1.0 / k_steps;
  Eigen::VectorXd a = initial;
  for (int k = 0; k < k_steps; ++k) {
    const double tau = static_cast<double>(k) * dt;
    a += velocity_at(params, a, z, tau) * dt;
  }
  return a;
}

inline ActionChunk sample_ode(const PolicyParams& params, const Eigen::VectorXd& z, int k_steps,
                              Rng& rng) {
  const Eigen::VectorXd initial = draw_standard_normal(params.config.flat_action_dim(), rng);
  return to_chunk_matrix(sample_ode_from(params, z, k_steps, initial), params.config.chunk_len,
                         params.config.action_dim);
}

// Core of the stochastic sampler with the per-step perturbation injected by
// the caller; the public overload below draws it from an RNG stream.
inline DenoisingChain sample_stochastic_with_noise(
    const PolicyParams& params, const Eigen::VectorXd& z, int k_steps,
    const Eigen::VectorXd& initial, const std::function<Eigen::VectorXd(int)>& noise_fn) {
  if (k_steps < 1) throw ConfigError("sample_stochastic: K must be >= 1");
  const double dt = 1.0 / k_steps;
  DenoisingChain chain;
  chain.chunks.push_back(initial);
  chain.log_prob = standard_normal_log_density(initial);
  for (int k = 0; k < k_steps; ++k) {
    const double tau = static_cast<double>(k) * dt;
    const Eigen::VectorXd& a = chain.chunks.back();
    const Eigen::VectorXd mean = a + velocity_at(params, a, z, tau) * dt;
    if (!mean.allFinite()) throw DivergenceError("policy diverged: non-finite step mean");
    const NoiseEval noise = noise_at(params, a, z, tau);
    const Eigen::VectorXd next = mean + noise.std.cwiseProduct(noise_fn(k));
    chain.log_prob += diagonal_normal_log_density(next, mean, noise.std);
    chain.means.push_back(mean);
    chain.stds.push_back(noise.std);
    chain.chunks.push_back(next);
  }
  return chain;
}

inline DenoisingChain sample_stochastic(const PolicyParams& params, const Eigen::VectorXd& z,
                                        int k_steps, Rng& rng) {
  const int flat = params.config.flat_action_dim();
  const Eigen::VectorXd initial = draw_standard_normal(flat, rng);
  return sample_stochastic_with_noise(params, z, k_steps, initial,
                                      [&](int) { return draw_standard_normal(flat, rng); });
}

inline void validate_chain(const PolicyParams& params, const DenoisingChain& chain) {
  if (chain.k_steps() < 1) throw UsageError("chain: needs at least one step");
  for (const auto& c : chain.chunks) {
    if (c.size() != params.config.flat_action_dim()) {
      throw UsageError("chain: chunk width does not match policy");
    }
  }
}

// Joint log probability of the recorded denoising chain under `params`:
// the standard-normal density of the initial draw plus the per-step Gaussian
// transition densities with means and stds recomputed from `params`. Stored
// per-step statistics are ignored so the same chain can be rescored by
// updated parameters.
inline double log_prob(const PolicyParams& params, const DenoisingChain& chain,
                       const Eigen::VectorXd& z) {
  validate_chain(params, chain);
  const int k_steps = chain.k_steps();
  const double dt = 1.0 / k_steps;
  double acc = standard_normal_log_density(chain.chunks.front());
  for (int k = 0; k < k_steps; ++k) {
    const double tau = static_cast<double>(k) * dt;
    const Eigen::VectorXd& a = chain.chunks[k];
    const Eigen::VectorXd mean = a + velocity_at(params, a, z, tau) * dt;
    const NoiseEval noise = noise_at(params, a, z, tau);
    acc += diagonal_normal_log_density(chain.chunks[k + 1], mean, noise.std);
  }
  return acc;
}

inline double value(const PolicyParams& params, const Eigen::VectorXd& z) {
  return mlp_forward(params.value_head, z)(0);
}

// ---------------------------------------------------------------------------
// Gradient plumbing for the RL update. The hidden state is stop-gradient for
// the noise and value heads: their input gradients are dropped, and encoder
// gradients flow only through the velocity head's conditioning path.
// ---------------------------------------------------------------------------

struct ChainTrace {
  double log_prob = 0.0;
  std::vector<MlpTape> velocity_tapes;
  std::vector<MlpTape> noise_tapes;
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::VectorXd> raws;
  std::vector<Eigen::VectorXd> stds;
};

inline ChainTrace chain_forward_traced(const PolicyParams& params, const DenoisingChain& chain,
                                       const Eigen::VectorXd& z) {
  validate_chain(params, chain);
  const int k_steps = chain.k_steps();
  const double dt = 1.0 / k_steps;
  ChainTrace trace;
  trace.log_prob = standard_normal_log_density(chain.chunks.front());
  trace.velocity_tapes.resize(k_steps);
  trace.noise_tapes.resize(k_steps);
  for (int k = 0; k < k_steps; ++k) {
    const double tau = static_cast<double>(k) * dt;
    const Eigen::VectorXd& a = chain.chunks[k];
    const Eigen::VectorXd v = velocity_at(params, a, z, tau, &trace.velocity_tapes[k]);
    const Eigen::VectorXd mean = a + v * dt;
    NoiseEval noise;
    noise.raw = mlp_forward(params.noise_head, head_input(params.config, a, z, tau),
                            &trace.noise_tapes[k]);
    noise.log_std = noise.raw.cwiseMax(params.config.log_std_min).cwiseMin(params.config.log_std_max);
    noise.std = noise.log_std.array().exp();
    trace.log_prob += diagonal_normal_log_density(chain.chunks[k + 1], mean, noise.std);
    trace.means.push_back(mean);
    trace.raws.push_back(noise.raw);
    trace.stds.push_back(noise.std);
  }
  return trace;
}

// Accumulates coeff * d(log_prob)/d(params) into the parameter gradients.
// `encoder_trace` must be the traced encoding that produced `z`; pass
// update_encoder = false to freeze the encoder.
inline void chain_backward(PolicyParams& params, const DenoisingChain& chain,
                           const ChainTrace& trace, const EncodeTrace& encoder_trace,
                           double coeff, bool update_encoder = true) {
  const int k_steps = chain.k_steps();
  const double dt = 1.0 / k_steps;
  const int flat = params.config.flat_action_dim();
  Eigen::VectorXd dz = Eigen::VectorXd::Zero(params.config.encoder_out);
  for (int k = 0; k < k_steps; ++k) {
    const Eigen::VectorXd& x = chain.chunks[k + 1];
    const Eigen::VectorXd& mean = trace.means[k];
    const Eigen::VectorXd& std = trace.stds[k];
    const Eigen::VectorXd& raw = trace.raws[k];

    Eigen::VectorXd d_mean(flat);
    Eigen::VectorXd d_raw(flat);
    for (int i = 0; i < flat; ++i) {
      const double inv_var = 1.0 / (std(i) * std(i));
      const double diff = x(i) - mean(i);
      d_mean(i) = coeff * diff * inv_var;
      const double d_log_std = coeff * (diff * diff * inv_var - 1.0);
      const bool inside = raw(i) >= params.config.log_std_min && raw(i) <= params.config.log_std_max;
      d_raw(i) = inside ? d_log_std : 0.0;
    }

    const Eigen::VectorXd d_velocity = d_mean * dt;
    const Eigen::VectorXd d_vel_input =
        mlp_backward(params.velocity_head, trace.velocity_tapes[k], d_velocity);
    // Stop-gradient hidden state for the noise head: input gradient dropped.
    mlp_backward(params.noise_head, trace.noise_tapes[k], d_raw);
    if (update_encoder) dz += d_vel_input.segment(flat, params.config.encoder_out);
  }
  if (update_encoder) mlp_backward(params.encoder, encoder_trace.tape, dz);
}

struct ValueTrace {
  double value = 0.0;
  MlpTape tape;
};

inline ValueTrace value_traced(const PolicyParams& params, const Eigen::VectorXd& z) {
  ValueTrace trace;
  trace.value = mlp_forward(params.value_head, z, &trace.tape)(0);
  return trace;
}

// d(coeff * V)/d(value head); the hidden state is stop-gradient, so nothing
// reaches the encoder.
inline void value_backward(PolicyParams& params, const ValueTrace& trace, double coeff) {
  Eigen::VectorXd upstream(1);
  upstream(0) = coeff;
  mlp_backward(params.value_head, trace.tape, upstream);
}

// ---------------------------------------------------------------------------
// Rectified flow matching loss.
// ---------------------------------------------------------------------------

struct FlowBatchElement {
  Eigen::VectorXd obs;
  Eigen::VectorXd target_chunk;  // flat expert chunk, dimensionless units
};

inline Eigen::VectorXd flow_interpolate(const Eigen::VectorXd& target, const Eigen::VectorXd& eps,
                                        double tau) {
  return tau * target + (1.0 - tau) * eps;
}

// Mean over the batch of |v(A^tau, z, tau) - (A^1 - eps)|^2 with eps ~ N(0,I)
// and tau ~ U(0,1) drawn per element (eps first, then tau). Accumulates exact
// gradients for the encoder and velocity head.
inline double flow_loss_and_grad(PolicyParams& params, const std::vector<FlowBatchElement>& batch,
                                 Rng& rng) {
  if (batch.empty()) throw ConfigError("flow_loss_and_grad: empty batch");
  const int flat = params.config.flat_action_dim();
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  for (const auto& element : batch) {
    if (element.target_chunk.size() != flat) {
      throw ConfigError("flow_loss_and_grad: target chunk width mismatch");
    }
    const Eigen::VectorXd eps = draw_standard_normal(flat, rng);
    const double tau = rng.uniform();
    EncodeTrace enc = encode_traced(params, element.obs);
    const Eigen::VectorXd a_tau = flow_interpolate(element.target_chunk, eps, tau);
    MlpTape vel_tape;
    const Eigen::VectorXd v =
        mlp_forward(params.velocity_head, head_input(params.config, a_tau, enc.z, tau), &vel_tape);
    const Eigen::VectorXd residual = v - (element.target_chunk - eps);
    loss += residual.squaredNorm() * inv_n;
    const Eigen::VectorXd d_vel_input =
        mlp_backward(params.velocity_head, vel_tape, 2.0 * inv_n * residual);
    mlp_backward(params.encoder, enc.tape,
                 d_vel_input.segment(flat, params.config.encoder_out));
  }
  if (!std::isfinite(loss)) throw DivergenceError("flow loss diverged");
  return loss;
}

}  // namespace flowlab
