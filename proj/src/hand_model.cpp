#include "isagrasp/hand_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "hand_default_json.hpp"

namespace isagrasp {

namespace {

using nlohmann::json;

Vec3 vec3_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw std::invalid_argument("expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json vec3_to(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

}  // namespace

HandDescription HandDescription::from_json(const json& j) {
  HandDescription d;
  d.name = j.at("name").get<std::string>();
  d.scale_ratio = j.at("scale_ratio").get<double>();
  d.tip_radius = j.at("tip_radius").get<double>();
  const json& fingers = j.at("fingers");
  if (!fingers.is_array() || fingers.size() != kFingerCount) {
    throw std::invalid_argument("hand description: expected exactly 4 fingers");
  }
  for (int f = 0; f < kFingerCount; ++f) {
    const json& jf = fingers[f];
    FingerChain& c = d.fingers[f];
    c.name = jf.at("name").get<std::string>();
    c.base_position = vec3_from(jf.at("base_position"));
    const Vec3 bx = vec3_from(jf.at("base_x")).normalized();
    const Vec3 bz = vec3_from(jf.at("base_z")).normalized();
    c.base_axes.col(0) = bx;
    c.base_axes.col(1) = bz.cross(bx);
    c.base_axes.col(2) = bz;
    const json& links = jf.at("link_lengths");
    const json& limits = jf.at("limits");
    if (links.size() != 3 || limits.size() != kJointsPerFinger) {
      throw std::invalid_argument("hand description: finger '" + c.name + "' needs 3 links and 4 limits");
    }
    for (int k = 0; k < 3; ++k) c.link_lengths[k] = links[k].get<double>();
    for (int k = 0; k < kJointsPerFinger; ++k) {
      c.limits[k] = {limits[k].at(0).get<double>(), limits[k].at(1).get<double>()};
    }
  }
  d.validate();
  return d;
}

json HandDescription::to_json() const {
  json fj = json::array();
  for (const FingerChain& c : fingers) {
    json limits = json::array();
    for (const JointLimit& l : c.limits) limits.push_back({l.lo, l.hi});
    fj.push_back({{"name", c.name},
                  {"base_position", vec3_to(c.base_position)},
                  {"base_x", vec3_to(c.base_axes.col(0))},
                  {"base_z", vec3_to(c.base_axes.col(2))},
                  {"link_lengths", {c.link_lengths[0], c.link_lengths[1], c.link_lengths[2]}},
                  {"limits", limits}});
  }
  return {{"name", name}, {"scale_ratio", scale_ratio}, {"tip_radius", tip_radius}, {"fingers", fj}};
}

HandDescription HandDescription::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open hand description " + path.string());
  return from_json(json::parse(in));
}

const HandDescription& HandDescription::default_hand() {
  static const HandDescription d = from_json(json::parse(kDefaultHandJson));
  return d;
}

void HandDescription::validate() const {
  if (!(tip_radius > 0.0)) throw std::invalid_argument("hand description: tip_radius must be > 0");
  if (!(scale_ratio > 0.0)) throw std::invalid_argument("hand description: scale_ratio must be > 0");
  for (const FingerChain& c : fingers) {
    for (double l : c.link_lengths) {
      if (!(l > 0.0)) throw std::invalid_argument("hand description: link lengths must be > 0 (" + c.name + ")");
    }
    for (const JointLimit& l : c.limits) {
      if (!(l.lo <= l.hi)) throw std::invalid_argument("hand description: empty joint interval (" + c.name + ")");
    }
    if (!is_rotation_matrix(c.base_axes)) {
      throw std::invalid_argument("hand description: base_x and base_z must be orthogonal (" + c.name + ")");
    }
  }
}

Vec3 fingertip_in_palm(const FingerChain& chain, const double* joints) {
  // Planar chain in the abducted finger plane (x forward, z curl).
  double phi = 0.0;
  double px = 0.0;
  double pz = 0.0;
  for (int k = 0; k < 3; ++k) {
    phi += joints[k + 1];
    px += chain.link_lengths[k] * std::cos(phi);
    pz += chain.link_lengths[k] * std::sin(phi);
  }
  const double ca = std::cos(joints[0]);
  const double sa = std::sin(joints[0]);
  const Vec3 local(ca * px, sa * px, pz);
  return chain.base_position + chain.base_axes * local;
}

HandKinematics forward_kinematics(const HandDescription& desc, const HandPose& pose) {
  if (!pose.base.translation.allFinite() || !pose.base.rotation.coeffs().allFinite()) {
    throw std::domain_error("forward_kinematics: non-finite base pose");
  }
  for (double a : pose.fingers) {
    if (!std::isfinite(a)) throw std::domain_error("forward_kinematics: non-finite joint angle");
  }
  HandKinematics out;
  const FingerAngles q = clamp_to_limits(desc, pose.fingers);
  out.clamped = q != pose.fingers;
  out.palm = Frame3::from_transform(pose.base);
  for (int f = 0; f < kFingerCount; ++f) {
    out.fingertips[f] = out.palm.to_world(fingertip_in_palm(desc.fingers[f], &q[f * kJointsPerFinger]));
  }
  out.facing = out.palm.z();
  out.pointing = out.palm.x();
  return out;
}

FingerAngles clamp_to_limits(const HandDescription& desc, FingerAngles fingers) {
  for (int j = 0; j < kFingerJoints; ++j) {
    const JointLimit l = desc.limit(j);
    fingers[j] = std::clamp(fingers[j], l.lo, l.hi);
  }
  return fingers;
}

bool within_limits(const HandDescription& desc, const FingerAngles& fingers, double tol) {
  for (int j = 0; j < kFingerJoints; ++j) {
    const JointLimit l = desc.limit(j);
    if (fingers[j] < l.lo - tol || fingers[j] > l.hi + tol) return false;
  }
  return true;
}

UnitQuaternion top_down_orientation() {
  Mat3 r;
  r.col(0) = Vec3::UnitX();
  r.col(1) = -Vec3::UnitY();
  r.col(2) = -Vec3::UnitZ();
  return UnitQuaternion::from_matrix(r);
}

}  // namespace isagrasp
