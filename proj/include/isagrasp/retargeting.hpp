#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "isagrasp/geometry.hpp"
#include "isagrasp/hand_model.hpp"

namespace isagrasp {

/// One demonstration frame: human fingertips (thumb, index, middle, ring),
/// the human palm frame and the object pose.
struct DemoRecord {
  std::array<Vec3, kFingerCount> human_fingertips;
  Frame3 human_palm;
  RigidTransform object_pose;
  Vec3 object_center = Vec3::Zero();

  void validate() const;
  /// The same demo with every world quantity moved by `t`.
  DemoRecord transformed(const RigidTransform& t) const;

  nlohmann::json to_json() const;
  static DemoRecord from_json(const nlohmann::json& j);
};

struct RetargetWeights {
  double w_g = 1.0;  // palm-to-fingertip shape term
  double w_c = 1.0;  // fingertip-to-object term
  double w_r = 0.5;  // palm orientation term
  void validate() const;
};

struct RetargetOptions {
  int restarts = 8;
  int max_iters = 500;
  double grad_tol = 1e-6;
  double fd_step = 1e-5;
  std::uint64_t seed = 0;
  /// Start-point spread around the human palm for restarts > 0.
  double init_translation_jitter = 0.02;
  double init_rotation_jitter = 0.3;
  /// Translations are optimized in units of this length so that all 22
  /// coordinates have comparable gradient magnitudes.
  double translation_scale = 0.1;
  bool record_trace = false;
};

struct RetargetResult {
  HandPose pose;
  double objective = 0.0;
  std::array<double, 3> terms{};  // d_g, d_c, d_r
  bool converged = false;
  int best_restart = 0;
  double initial_objective = 0.0;  // at the first start point
  std::vector<double> trace;       // best restart, per iteration
};

double cost_dg(const HandDescription& desc, const HandPose& pose, const DemoRecord& demo);
double cost_dc(const HandDescription& desc, const HandPose& pose, const DemoRecord& demo);
double cost_dr(const HandDescription& desc, const HandPose& pose, const DemoRecord& demo);

/// w_g d_g + w_c d_c + w_r d_r, with the terms written to `terms` when given.
double retarget_objective(const HandDescription& desc, const HandPose& pose, const DemoRecord& demo,
                          const RetargetWeights& w, std::array<double, 3>* terms = nullptr);

/// Starting pose used by restart 0: the hand placed on the human palm frame
/// with every joint at the middle of its range.
HandPose initial_pose(const HandDescription& desc, const DemoRecord& demo);

/// Multi-start proximal gradient descent: central-difference gradients on the
/// position terms, an exact shrink step on the palm rotation term, joint
/// limits by projection and a backtracking line search. Deterministic for a
/// fixed seed.
RetargetResult retarget(const HandDescription& desc, const DemoRecord& demo, const RetargetWeights& weights,
                        const RetargetOptions& opts = {});

}  // namespace isagrasp
