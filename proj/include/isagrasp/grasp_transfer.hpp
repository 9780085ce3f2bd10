#pragma once

#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "isagrasp/geometry.hpp"
#include "isagrasp/hand_model.hpp"
#include "isagrasp/shape_field.hpp"

namespace isagrasp {

/// Pregrasp palm pose plus the final finger configuration.
struct Grasp {
  RigidTransform pregrasp;
  FingerAngles fingers{};

  HandPose pose() const { return {pregrasp, fingers}; }
  static Grasp from_pose(const HandPose& p) { return {p.base, p.fingers}; }

  nlohmann::json to_json() const;
  static Grasp from_json(const nlohmann::json& j);
};

struct TransferContext {
  std::vector<int> reference_indices;
  std::vector<Vec3> local_offsets;  // O_i^-1 applied to the pregrasp translation
  Vec3 hint = Vec3::UnitZ();
};

/// Reference frame at sample i: origin at the sample, z along its normal.
Frame3 reference_frame(const SurfaceSamples& s, int i, const Vec3& hint);

/// The n samples nearest to the pregrasp translation (ties by index) and the
/// translation expressed in each of their local frames.
TransferContext build_context(const SurfaceSamples& source, const Grasp& grasp, int n = 20,
                              const Vec3& hint = Vec3::UnitZ());

/// Average of the offsets carried by the corresponding target frames;
/// rotation and fingers are copied from `grasp`.
Grasp transfer_grasp(const TransferContext& ctx, const SurfaceSamples& source, const SurfaceSamples& target,
                     const Grasp& grasp);

inline TransferContext build_context(const ShapeInstance& source, const Grasp& grasp, int n = 20,
                                     const Vec3& hint = Vec3::UnitZ()) {
  return build_context(source.surface(), grasp, n, hint);
}

/// Throws std::invalid_argument when the instances come from different templates.
Grasp transfer_grasp(const TransferContext& ctx, const ShapeInstance& source, const ShapeInstance& target,
                     const Grasp& grasp);

}  // namespace isagrasp
