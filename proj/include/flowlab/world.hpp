#pragma once

#include <Eigen/Dense>
#include <array>
#include <optional>
#include <string>
#include <vector>

#include "flowlab/common.hpp"
#include "flowlab/observation.hpp"
#include "flowlab/policy.hpp"
#include "flowlab/rng.hpp"
#include "flowlab/scene.hpp"

namespace flowlab {

// Domain randomization ranges; defaults follow the standard randomization
// table exactly.
struct DomainRandomizationConfig {
  double object_x_lo = 0.2, object_x_hi = 0.4;
  double object_y_lo = -0.15, object_y_hi = 0.15;
  double yaw_lo = 0.0, yaw_hi = 2.0 * kPi;
  double robot_z_lo = 0.0, robot_z_hi = 0.05;
  double joint_perturb_lo = -0.1, joint_perturb_hi = 0.1;  // rad, 6 joints
  double viewpoint_lo = -0.05, viewpoint_hi = 0.05;        // m, xyz offset
  double brightness_lo = 0.5, brightness_hi = 1.5;
  double ambient_lo = 0.0, ambient_hi = 0.6;               // rgb
  // Analog of the PD-control dynamics gap: position noise on commanded moves.
  bool tracking_noise = true;
  double tracking_noise_std = 0.002;

  void validate() const {
    const auto ok = [](double lo, double hi) { return lo <= hi; };
    if (!(ok(object_x_lo, object_x_hi) && ok(object_y_lo, object_y_hi) &&
          ok(yaw_lo, yaw_hi) && ok(robot_z_lo, robot_z_hi) &&
          ok(joint_perturb_lo, joint_perturb_hi) && ok(viewpoint_lo, viewpoint_hi) &&
          ok(brightness_lo, brightness_hi) && ok(ambient_lo, ambient_hi))) {
      throw ConfigError("domain randomization: every range needs lo <= hi");
    }
  }
};

struct WorldConfig {
  int chunk_len = 4;    // C low-level steps per decision
  int action_dim = 4;   // dx, dy, dz, gripper
  int episode_len = 25; // T decision steps
  double a_max = 0.05;       // per-step delta clamp (m)
  double grasp_radius = 0.03;
  double control_hz = 5.0;
  double gripper_max_width = 0.074;
  double home_x = 0.3, home_y = 0.0, home_z = 0.25;
  // IN destinations accept drops on a shrunken footprint.
  double in_capture_shrink = 0.75;
  // Drops latch onto supports whose top is at or below the release height
  // (with this much slack); releasing below a rim falls through to the table.
  double drop_slack = 0.02;
  ObservationLayout obs;
};

enum class SupportKind { kTable, kObject, kGripper };

struct WorldObject {
  int id = -1;
  std::string phrase;
  Eigen::VectorXd descriptor;
  double footprint_radius = 0.0;
  double height = 0.0;
  double capture_radius = 0.0;
  double yaw = 0.0;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();  // base center
  SupportKind support = SupportKind::kTable;
  int support_id = -1;

  double top() const { return position.z() + height; }
  Eigen::Vector3d center() const { return position + Eigen::Vector3d(0, 0, 0.5 * height); }
};

struct DrDraw {
  double robot_z_perturb = 0.0;
  std::array<double, 6> joint_perturb{};
  Eigen::Vector3d viewpoint_offset = Eigen::Vector3d::Zero();
  double brightness = 1.0;
  Eigen::Vector3d ambient = Eigen::Vector3d::Zero();
};

struct EnvState {
  Eigen::Vector3d gripper = Eigen::Vector3d::Zero();
  int openness = 1;  // 1 open, 0 closed
  std::vector<WorldObject> objects;
  std::optional<int> held;
  int t_low = 0;
  int t_dec = 0;
  SceneSpec scene;
  DrDraw dr_draw;
  std::vector<int> slot_of_object;  // object index -> observation slot
  bool done = false;
  bool succeeded = false;
};

struct StepInfo {
  bool success = false;
  int low_level_steps = 0;
};

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

// Success predicate: A rests on B, touches neither the table nor the robot.
// contact(A, B) <=> support(A) = B; contact(A, robot) <=> A is held.
inline bool success(const EnvState& state) {
  const int a = state.scene.target_index;
  const int b = state.scene.destination_index;
  if (a < 0 || b < 0 || a >= static_cast<int>(state.objects.size()) ||
      b >= static_cast<int>(state.objects.size()) || a == b) {
    throw ConfigError("success: scene does not designate distinct target and destination");
  }
  const WorldObject& target = state.objects[a];
  const bool contact_a_b = target.support == SupportKind::kObject && target.support_id == b;
  const bool contact_a_table = target.support == SupportKind::kTable;
  const bool contact_a_robot = state.held.has_value() && *state.held == a;
  return contact_a_b && !contact_a_table && !contact_a_robot;
}

inline Observation observe(const EnvState& state, const WorldConfig& config) {
  Observation obs;
  // Proprio and object positions share the drawn viewpoint offset, so the
  // reported frame shifts common-mode and the target-relative geometry stays
  // centered.
  obs.proprio.head<3>() = state.gripper + state.dr_draw.viewpoint_offset;
  obs.proprio(3) = static_cast<double>(state.openness);
  obs.slots.assign(config.obs.num_slots,
                   ObjectSlot{Eigen::Vector3d::Zero(),
                              Eigen::VectorXd::Zero(config.obs.descriptor_dim), 0.0});
  for (std::size_t i = 0; i < state.objects.size(); ++i) {
    const WorldObject& o = state.objects[i];
    ObjectSlot& slot = obs.slots[state.slot_of_object[i]];
    slot.position = o.center() + state.dr_draw.viewpoint_offset;
    slot.descriptor = o.descriptor;
    slot.present = 1.0;
  }
  obs.instruction = state.scene.instruction_embedding();
  obs.appearance_bias = Eigen::VectorXd(4);
  obs.appearance_bias(0) = state.scene.appearance_bias(0) * state.dr_draw.brightness;
  obs.appearance_bias(1) = state.scene.appearance_bias(1) + state.dr_draw.ambient(0);
  obs.appearance_bias(2) = state.scene.appearance_bias(2) + state.dr_draw.ambient(1);
  obs.appearance_bias(3) = state.scene.appearance_bias(3) + state.dr_draw.ambient(2);
  return obs;
}

// Kinematic tabletop environment. Each instance owns its RNG stream, so a
// vector of envs behaves identically whether stepped in parallel or
// sequentially.
class Env {
 public:
  Env(WorldConfig config, DomainRandomizationConfig dr, std::uint64_t seed)
      : config_(config), dr_(dr), rng_(seed) {
    dr_.validate();
  }

  const EnvState& state() const { return state_; }
  EnvState& mutable_state() { return state_; }
  const WorldConfig& config() const { return config_; }
  bool done() const { return state_.done; }

  Observation reset(const SceneSpec& scene) { return reset(scene, rng_); }

  // Draw order: robot z perturb, 6 joint perturbs, viewpoint xyz, brightness,
  // ambient rgb, then per object (x, y, yaw) with rejection resampling, then
  // the observation slot permutation.
  Observation reset(const SceneSpec& scene, Rng& rng) {
    if (static_cast<int>(scene.objects.size()) > config_.obs.num_slots) {
      throw ConfigError("reset: scene has more objects than observation slots");
    }
    for (const auto& o : scene.objects) {
      if (o.descriptor.size() != config_.obs.descriptor_dim) {
        throw ConfigError("reset: scene descriptor width does not match observation layout");
      }
    }
    state_ = EnvState{};
    state_.scene = scene;

    state_.dr_draw.robot_z_perturb = rng.uniform(dr_.robot_z_lo, dr_.robot_z_hi);
    for (auto& j : state_.dr_draw.joint_perturb) {
      j = rng.uniform(dr_.joint_perturb_lo, dr_.joint_perturb_hi);
    }
    for (int i = 0; i < 3; ++i) {
      state_.dr_draw.viewpoint_offset(i) = rng.uniform(dr_.viewpoint_lo, dr_.viewpoint_hi);
    }
    state_.dr_draw.brightness = rng.uniform(dr_.brightness_lo, dr_.brightness_hi);
    for (int i = 0; i < 3; ++i) {
      state_.dr_draw.ambient(i) = rng.uniform(dr_.ambient_lo, dr_.ambient_hi);
    }

    int rejections = 0;
    for (std::size_t i = 0; i < scene.objects.size(); ++i) {
      const SceneObjectSpec& spec = scene.objects[i];
      WorldObject obj;
      obj.id = static_cast<int>(i);
      obj.phrase = spec.phrase;
      obj.descriptor = spec.descriptor;
      obj.footprint_radius = spec.footprint_radius;
      obj.height = spec.height;
      obj.capture_radius = spec.footprint_radius;
      if (scene.relation == Relation::kIn && static_cast<int>(i) == scene.destination_index) {
        obj.capture_radius *= config_.in_capture_shrink;
      }
      while (true) {
        const double x = rng.uniform(std::max(spec.region.x_lo, dr_.object_x_lo),
                                     std::min(spec.region.x_hi, dr_.object_x_hi));
        const double y = rng.uniform(std::max(spec.region.y_lo, dr_.object_y_lo),
                                     std::min(spec.region.y_hi, dr_.object_y_hi));
        obj.yaw = rng.uniform(dr_.yaw_lo, dr_.yaw_hi);
        bool clear = true;
        for (const auto& placed : state_.objects) {
          const double d = std::hypot(x - placed.position.x(), y - placed.position.y());
          if (d < obj.footprint_radius + placed.footprint_radius) {
            clear = false;
            break;
          }
        }
        if (clear) {
          obj.position = Eigen::Vector3d(x, y, 0.0);
          break;
        }
        if (++rejections > 100) {
          throw WorldError("scene " + std::to_string(scene.scene_id) +
                           " is infeasible: placement rejected 100 times (QA escape)");
        }
      }
      obj.support = SupportKind::kTable;
      state_.objects.push_back(std::move(obj));
    }

    // Observation slot permutation: object identity is conveyed by the
    // descriptors, never by the slot index.
    std::vector<int> slots(config_.obs.num_slots);
    for (int i = 0; i < config_.obs.num_slots; ++i) slots[i] = i;
    for (int i = 0; i < config_.obs.num_slots - 1; ++i) {
      const int pick = i + rng.uniform_int(config_.obs.num_slots - i);
      std::swap(slots[i], slots[pick]);
    }
    state_.slot_of_object.assign(slots.begin(),
                                 slots.begin() + static_cast<int>(scene.objects.size()));

    const double home_dx = 0.1 * (state_.dr_draw.joint_perturb[0] +
                                  state_.dr_draw.joint_perturb[1] +
                                  state_.dr_draw.joint_perturb[2]) / 3.0;
    const double home_dy = 0.1 * (state_.dr_draw.joint_perturb[3] +
                                  state_.dr_draw.joint_perturb[4] +
                                  state_.dr_draw.joint_perturb[5]) / 3.0;
    state_.gripper = Eigen::Vector3d(config_.home_x + home_dx, config_.home_y + home_dy,
                                     config_.home_z + state_.dr_draw.robot_z_perturb);
    state_.openness = 1;
    return observe(state_, config_);
  }

  // Executes the C low-level rows of one action chunk (deltas in meters,
  // clamped to +-a_max per entry; the gripper column closes when positive).
  // Success is evaluated at the chunk boundary only.
  StepResult step_chunk(const ActionChunk& chunk) { return step_chunk(chunk, rng_); }

  StepResult step_chunk(const ActionChunk& chunk, Rng& rng) {
    if (state_.done) throw UsageError("step_chunk called on a finished episode");
    if (chunk.rows() != config_.chunk_len || chunk.cols() != config_.action_dim) {
      throw ConfigError("step_chunk: chunk shape mismatch");
    }
    for (int r = 0; r < config_.chunk_len; ++r) {
      Eigen::Vector3d delta;
      for (int c = 0; c < 3; ++c) {
        delta(c) = std::clamp(chunk(r, c), -config_.a_max, config_.a_max);
      }
      const bool moving = delta.squaredNorm() > 0.0;
      state_.gripper += delta;
      if (moving && dr_.tracking_noise) {
        for (int c = 0; c < 3; ++c) {
          state_.gripper(c) += dr_.tracking_noise_std * rng.normal();
        }
      }
      state_.gripper.x() = std::clamp(state_.gripper.x(), 0.0, 0.6);
      state_.gripper.y() = std::clamp(state_.gripper.y(), -0.35, 0.35);
      state_.gripper.z() = std::clamp(state_.gripper.z(), 0.0, 0.5);

      if (state_.held) {
        state_.objects[*state_.held].position = state_.gripper;
      }

      const bool want_closed = chunk(r, 3) > 0.0;
      if (want_closed && state_.openness == 1) {
        state_.openness = 0;
        try_grasp();
      } else if (!want_closed && state_.openness == 0) {
        state_.openness = 1;
        if (state_.held) release(*state_.held);
      }
      state_.t_low += 1;
    }
    state_.t_dec += 1;

    StepResult result;
    state_.succeeded = success(state_);
    result.reward = state_.succeeded ? 1.0 : 0.0;
    state_.done = state_.succeeded || state_.t_dec >= config_.episode_len;
    result.done = state_.done;
    result.info = {state_.succeeded, state_.t_low};
    result.observation = observe(state_, config_);
    return result;
  }

 private:
  void try_grasp() {
    int best = -1;
    double best_dist = config_.grasp_radius;
    for (const auto& o : state_.objects) {
      const double d = (state_.gripper - o.center()).norm();
      if (d <= best_dist) {
        best_dist = d;
        best = o.id;
      }
    }
    if (best < 0) return;
    state_.held = best;
    WorldObject& grabbed = state_.objects[best];
    grabbed.support = SupportKind::kGripper;
    grabbed.support_id = -1;
    grabbed.position = state_.gripper;
    // Anything that was stacked on the grabbed object falls.
    for (auto& o : state_.objects) {
      if (o.support == SupportKind::kObject && o.support_id == best) drop_to_support(o);
    }
  }

  void release(int id) {
    state_.held.reset();
    drop_to_support(state_.objects[id]);
  }

  // The falling object lands on the highest support whose capture circle
  // contains its (x, y) and whose top is at or below the release height
  // (plus slack); otherwise it lands on the table.
  void drop_to_support(WorldObject& falling) {
    int support_id = -1;
    double support_top = 0.0;
    for (const auto& o : state_.objects) {
      if (o.id == falling.id) continue;
      if (state_.held && *state_.held == o.id) continue;
      if (o.support == SupportKind::kObject && o.support_id == falling.id) continue;
      const double d = std::hypot(falling.position.x() - o.position.x(),
                                  falling.position.y() - o.position.y());
      if (d > o.capture_radius) continue;
      if (o.top() > falling.position.z() + config_.drop_slack) continue;
      if (o.top() > support_top) {
        support_top = o.top();
        support_id = o.id;
      }
    }
    falling.position.z() = support_top;
    if (support_id >= 0) {
      falling.support = SupportKind::kObject;
      falling.support_id = support_id;
    } else {
      falling.support = SupportKind::kTable;
      falling.support_id = -1;
    }
  }

  WorldConfig config_;
  DomainRandomizationConfig dr_;
  Rng rng_;
  EnvState state_;
};

// A bank of independently seeded environments. Stepping is element-wise
// independent, so parallel execution equals sequential execution.
class VecEnv {
 public:
  VecEnv(const WorldConfig& config, const DomainRandomizationConfig& dr, std::uint64_t base_seed,
         int num_envs) {
    if (num_envs < 1) throw ConfigError("VecEnv: need at least one environment");
    envs_.reserve(num_envs);
    for (int i = 0; i < num_envs; ++i) {
      envs_.emplace_back(config, dr, mix_seed(base_seed, static_cast<std::uint64_t>(i)));
    }
  }

  int size() const { return static_cast<int>(envs_.size()); }
  Env& env(int i) { return envs_.at(i); }
  const Env& env(int i) const { return envs_.at(i); }

  std::vector<StepResult> step(const std::vector<ActionChunk>& chunks, int threads = 1) {
    if (chunks.size() != envs_.size()) {
      throw ConfigError("VecEnv::step: chunk count does not match environment count");
    }
    const int n = static_cast<int>(envs_.size());
    std::vector<StepResult> results(n);
    std::vector<std::string> errors(n);
    const auto worker = [&](int lo, int hi) {
      for (int i = lo; i < hi; ++i) {
        try {
          results[i] = envs_[i].step_chunk(chunks[i]);
        } catch (const std::exception& e) {
          errors[i] = e.what();
        }
      }
    };
    const int workers = std::clamp(threads, 1, n);
    if (workers == 1) {
      worker(0, n);
    } else {
      std::vector<std::thread> pool;
      const int span = (n + workers - 1) / workers;
      for (int w = 0; w < workers; ++w) {
        pool.emplace_back(worker, w * span, std::min(n, (w + 1) * span));
      }
      for (auto& t : pool) t.join();
    }
    for (int i = 0; i < n; ++i) {
      if (!errors[i].empty()) {
        throw WorldError("env " + std::to_string(i) + ": " + errors[i]);
      }
    }
    return results;
  }

 private:
  std::vector<Env> envs_;
};

}  // namespace flowlab
