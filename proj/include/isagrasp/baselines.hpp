#pragma once

#include <array>
#include <cstdint>

#include <nlohmann/json_fwd.hpp>

#include "isagrasp/grasp_transfer.hpp"
#include "isagrasp/shape_field.hpp"

namespace isagrasp {

struct BaselineConfig {
  double translation = 0.1;  // m, half width per axis around the object center
  double rotation = 0.5;     // rad, per axis-angle component
  double finger_lo = 0.5;    // rad
  double finger_hi = 1.0;    // rad
  double top_offset = 0.05;  // m, heuristic palm height above the object top
  double heuristic_flexion = 0.8;  // rad

  void validate() const;
  nlohmann::json to_json() const;
  static BaselineConfig from_json(const nlohmann::json& j);
};

/// Palm at the object center plus U(-t, t)^3, orientation top-down composed
/// with exp(U(-r, r)^3), every joint U(finger_lo, finger_hi). Joints are not
/// clamped; closing the hand clamps them.
Grasp random_grasp(const ShapeInstance& inst, const BaselineConfig& cfg, std::uint64_t seed);

/// Top-down palm at (center_x, center_y, z_max + top_offset), abduction
/// joints at zero and every flexion joint at `heuristic_flexion`.
Grasp heuristic_grasp(const ShapeInstance& inst, const BaselineConfig& cfg = {});

/// exp(-sum_i |f_i - o|) + n_contacts / 4.
double ppo_reward(const std::array<Vec3, kFingerCount>& fingertips, const Vec3& object_center, int n_contacts);

}  // namespace isagrasp
