#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "isagrasp/grasp_transfer.hpp"
#include "isagrasp/hand_model.hpp"
#include "isagrasp/shape_field.hpp"

namespace isagrasp {

struct PhysicsParams {
  double mass = 0.1;      // kg
  double friction = 0.8;  // Coulomb mu
  Vec3 gravity = Vec3(0.0, 0.0, -9.81);

  void validate() const;
};

struct Contact {
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();  // unit, pointing into the object
  int finger = 0;
};

struct OracleOptions {
  double max_normal_force = 5.0;  // N per contact
  double palm_stiffness = 60.0;   // N/m
  double perturb_sigma = 0.01;    // m
  int disturbances = 10;
  int friction_sides = 8;
  /// Soft-finger patch radius; torsional friction limit is mu * radius * f_n.
  double torsion_radius = 0.005;
  int close_steps = 10;
  /// Ferrari-Canny search: random ray directions added to the 12 axis rays.
  int quality_rays = 32;

  void validate() const;
  nlohmann::json to_json() const;
  static OracleOptions from_json(const nlohmann::json& j);
};

/// The palm as the origin plus the segments from it to each finger base,
/// sampled no further apart than `spacing`, in the palm frame.
std::vector<Vec3> palm_points(const HandDescription& desc, double spacing = 0.01);

/// Whether any palm point lies inside the instance.
bool palm_penetrates(const HandDescription& desc, const ShapeInstance& inst, const RigidTransform& pregrasp);

struct FingerClosure {
  std::vector<Contact> contacts;
  FingerAngles final_angles{};
  bool pregrasp_in_collision = false;
};

/// Closes each finger from the open hand toward `grasp.fingers` in `steps`
/// joint-space increments. A finger stops at the last step whose fingertip
/// sphere clears the surface; its contact is the first touch along the
/// path, located by bisection inside the offending step.
FingerClosure close_fingers(const HandDescription& desc, const ShapeInstance& inst, const Grasp& grasp,
                            int steps = 10);

/// Columns are unit-normal-force generators (force; torque / torque_radius)
/// of the linearized soft-finger cones. `contact_of[j]` names the contact of
/// column j. Cone edges are anchored on the tangent projection of `up`.
struct WrenchSet {
  Eigen::Matrix<double, 6, Eigen::Dynamic> w;
  std::vector<int> contact_of;
  int contacts = 0;
};

WrenchSet contact_wrenches(const std::vector<Contact>& contacts, const Vec3& center, double torque_radius,
                           double friction, const Vec3& up, int sides, double torsion_radius);

/// Origin strictly inside the convex hull of the generators.
bool force_closure(const WrenchSet& ws);

/// Ferrari-Canny epsilon of the generator hull (0 without force closure).
double hull_quality(const WrenchSet& ws, int random_rays = 32);

/// Euclidean distance from the origin to the generator hull (0 when the
/// origin lies in it), by Wolfe's minimum-norm-point method.
double hull_distance(const WrenchSet& ws);

/// epsilon under force closure, minus the hull distance otherwise.
double signed_quality(const WrenchSet& ws, int random_rays = 32);

double force_closure_quality(const std::vector<Contact>& contacts, const Vec3& center, double torque_radius,
                             const PhysicsParams& params, const OracleOptions& opts = {});

/// Whether the contacts can cancel an external force applied at the center
/// with zero net torque and at most `max_normal_force` per contact.
bool can_balance(const WrenchSet& ws, const Vec3& external_force, double max_normal_force);

enum class Failure {
  none,
  pregrasp_in_collision,
  table_collision,
  too_few_contacts,
  no_force_closure,
  gravity,
  disturbance,
};

std::string to_string(Failure f);

struct StabilityVerdict {
  bool success = false;
  Failure failure = Failure::none;
  std::vector<Contact> contacts;
  FingerAngles final_angles{};
  double epsilon_quality = 0.0;  // evaluated for successful verdicts only
  std::optional<int> failed_draw;
};

/// Contact-level test shared by lift_success: >= 2 contacts, force closure,
/// gravity balance, then balance under gravity plus each disturbance force.
StabilityVerdict judge_contacts(const std::vector<Contact>& contacts, const Vec3& center, double torque_radius,
                                const PhysicsParams& params, const std::vector<Vec3>& disturbances,
                                const OracleOptions& opts = {});

/// Palm-displacement disturbance forces k_palm * delta, delta ~ N(0, sigma^2 I).
std::vector<Vec3> draw_disturbances(std::uint64_t seed, const OracleOptions& opts);

/// The object rests on a table at the instance's lowest sample; a palm
/// origin below it is a table collision.
StabilityVerdict lift_success(const HandDescription& desc, const ShapeInstance& inst, const Grasp& grasp,
                              const PhysicsParams& params, std::uint64_t seed, const OracleOptions& opts = {});

}  // namespace isagrasp
