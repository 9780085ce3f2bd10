#pragma once

#include <array>
#include <filesystem>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "isagrasp/geometry.hpp"

namespace isagrasp {

inline constexpr int kFingerCount = 4;
inline constexpr int kJointsPerFinger = 4;
inline constexpr int kFingerJoints = kFingerCount * kJointsPerFinger;

/// Finger order used throughout: thumb, index, middle, ring.
enum class Finger : int { thumb = 0, index = 1, middle = 2, ring = 3 };

using FingerAngles = std::array<double, kFingerJoints>;

struct JointLimit {
  double lo = 0.0;
  double hi = 0.0;
};

/// One finger: an abduction joint about the base z axis followed by three
/// flexion joints. The straight finger extends along base x and curls toward
/// base z.
struct FingerChain {
  std::string name;
  Vec3 base_position = Vec3::Zero();  // palm frame
  Mat3 base_axes = Mat3::Identity();  // palm frame
  std::array<double, 3> link_lengths{};
  std::array<JointLimit, kJointsPerFinger> limits{};

  double length() const { return link_lengths[0] + link_lengths[1] + link_lengths[2]; }
};

struct HandDescription {
  std::string name;
  std::array<FingerChain, kFingerCount> fingers;
  double tip_radius = 0.0;   // m
  double scale_ratio = 1.0;  // robot size / human size

  /// The description shipped in data/hand_default.json.
  static const HandDescription& default_hand();
  static HandDescription from_json(const nlohmann::json& j);
  static HandDescription load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  /// Throws std::invalid_argument when an invariant is violated.
  void validate() const;

  JointLimit limit(int joint) const {
    return fingers[joint / kJointsPerFinger].limits[joint % kJointsPerFinger];
  }
};

struct HandPose {
  RigidTransform base;  // palm frame in world
  FingerAngles fingers{};
};

struct HandKinematics {
  Frame3 palm;
  std::array<Vec3, kFingerCount> fingertips;
  Vec3 facing = Vec3::UnitZ();    // palm z
  Vec3 pointing = Vec3::UnitX();  // palm x
  bool clamped = false;           // a joint was outside its limits
};

/// Throws std::domain_error on non-finite input. Out-of-range joints are
/// clamped and reported through `clamped`.
HandKinematics forward_kinematics(const HandDescription& desc, const HandPose& pose);

/// Fingertip position of one finger in the palm frame.
Vec3 fingertip_in_palm(const FingerChain& chain, const double* joints);

FingerAngles clamp_to_limits(const HandDescription& desc, FingerAngles fingers);
bool within_limits(const HandDescription& desc, const FingerAngles& fingers, double tol = 0.0);

/// Palm orientation facing -z with fingers pointing along +x.
UnitQuaternion top_down_orientation();

}  // namespace isagrasp
