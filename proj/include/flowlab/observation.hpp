#pragma once

#include <Eigen/Dense>
#include <vector>

#include "flowlab/common.hpp"

namespace flowlab {

// Flat feature layout: proprio | slots (position, descriptor, present) |
// instruction (target descriptor ++ destination descriptor) | appearance.
struct ObservationLayout {
  int num_slots = 6;
  int descriptor_dim = 8;
  int appearance_dim = 4;

  static constexpr int kProprioDim = 4;  // gripper x, y, z, openness

  int slot_dim() const { return 3 + descriptor_dim + 1; }
  int instruction_dim() const { return 2 * descriptor_dim; }
  int dim() const {
    return kProprioDim + num_slots * slot_dim() + instruction_dim() + appearance_dim;
  }
};

struct ObjectSlot {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::VectorXd descriptor;
  double present = 0.0;
};

struct Observation {
  Eigen::Vector4d proprio = Eigen::Vector4d::Zero();
  std::vector<ObjectSlot> slots;
  Eigen::VectorXd instruction;
  Eigen::VectorXd appearance_bias;

  Eigen::VectorXd flatten(const ObservationLayout& layout) const {
    if (static_cast<int>(slots.size()) != layout.num_slots) {
      throw ConfigError("observation: slot count does not match layout");
    }
    if (instruction.size() != layout.instruction_dim() ||
        appearance_bias.size() != layout.appearance_dim) {
      throw ConfigError("observation: instruction/appearance width mismatch");
    }
    Eigen::VectorXd flat(layout.dim());
    int at = 0;
    flat.segment(at, 4) = proprio;
    at += 4;
    for (const auto& slot : slots) {
      if (slot.descriptor.size() != layout.descriptor_dim) {
        throw ConfigError("observation: descriptor width mismatch");
      }
      flat.segment(at, 3) = slot.position;
      flat.segment(at + 3, layout.descriptor_dim) = slot.descriptor;
      flat(at + 3 + layout.descriptor_dim) = slot.present;
      at += layout.slot_dim();
    }
    flat.segment(at, layout.instruction_dim()) = instruction;
    at += layout.instruction_dim();
    flat.segment(at, layout.appearance_dim) = appearance_bias;
    return flat;
  }
};

}  // namespace flowlab
