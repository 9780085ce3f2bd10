#include "isagrasp/baselines.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "isagrasp/seeding.hpp"

namespace isagrasp {

void BaselineConfig::validate() const {
  if (!(translation >= 0.0) || !(rotation >= 0.0)) throw std::invalid_argument("baseline: ranges must be non-negative");
  if (!(finger_hi >= finger_lo)) throw std::invalid_argument("baseline: finger range is empty");
  if (!(top_offset > 0.0)) throw std::invalid_argument("baseline: top_offset must be positive");
  if (!std::isfinite(heuristic_flexion)) throw std::invalid_argument("baseline: heuristic_flexion must be finite");
}

nlohmann::json BaselineConfig::to_json() const {
  return {{"translation", translation}, {"rotation", rotation},
          {"fingers", {finger_lo, finger_hi}}, {"top_offset", top_offset},
          {"heuristic_flexion", heuristic_flexion}};
}

BaselineConfig BaselineConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("baseline: expected an object");
  BaselineConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "translation") c.translation = value.get<double>();
    else if (key == "rotation") c.rotation = value.get<double>();
    else if (key == "fingers") {
      const auto r = value.get<std::array<double, 2>>();
      c.finger_lo = r[0];
      c.finger_hi = r[1];
    } else if (key == "top_offset") c.top_offset = value.get<double>();
    else if (key == "heuristic_flexion") c.heuristic_flexion = value.get<double>();
    else throw std::invalid_argument("baseline: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

Grasp random_grasp(const ShapeInstance& inst, const BaselineConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> finger(cfg.finger_lo, cfg.finger_hi);
  Grasp g;
  g.pregrasp.translation = inst.center();
  for (int a = 0; a < 3; ++a) g.pregrasp.translation(a) += cfg.translation * unit(rng);
  Vec3 rv;
  for (int a = 0; a < 3; ++a) rv(a) = cfg.rotation * unit(rng);
  g.pregrasp.rotation = top_down_orientation() * UnitQuaternion::from_axis_angle(rv);
  for (double& q : g.fingers) q = cfg.finger_lo == cfg.finger_hi ? cfg.finger_lo : finger(rng);
  return g;
}

Grasp heuristic_grasp(const ShapeInstance& inst, const BaselineConfig& cfg) {
  cfg.validate();
  Grasp g;
  g.pregrasp.translation = Vec3(inst.center().x(), inst.center().y(), inst.z_max() + cfg.top_offset);
  g.pregrasp.rotation = top_down_orientation();
  for (int j = 0; j < kFingerJoints; ++j) g.fingers[j] = j % kJointsPerFinger == 0 ? 0.0 : cfg.heuristic_flexion;
  return g;
}

double ppo_reward(const std::array<Vec3, kFingerCount>& fingertips, const Vec3& object_center, int n_contacts) {
  if (n_contacts < 0 || n_contacts > kFingerCount) {
    throw std::invalid_argument("ppo_reward: contact count must be in [0, 4]");
  }
  double dist = 0.0;
  for (const Vec3& f : fingertips) {
    if (!f.allFinite()) throw std::invalid_argument("ppo_reward: non-finite fingertip");
    dist += (f - object_center).norm();
  }
  return std::exp(-dist) + static_cast<double>(n_contacts) / kFingerCount;
}

}  // namespace isagrasp
