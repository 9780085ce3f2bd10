#include "isagrasp/stability_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "isagrasp/lp.hpp"
#include "isagrasp/seeding.hpp"

namespace isagrasp {

void PhysicsParams::validate() const {
  if (!(mass > 0.0) || !std::isfinite(mass)) throw std::invalid_argument("physics: mass must be positive");
  if (!(friction >= 0.0) || !std::isfinite(friction)) {
    throw std::invalid_argument("physics: friction must be non-negative");
  }
  if (!gravity.allFinite() || gravity.norm() == 0.0) throw std::invalid_argument("physics: gravity must be non-zero");
}

void OracleOptions::validate() const {
  if (!(max_normal_force > 0.0)) throw std::invalid_argument("oracle: max_normal_force must be positive");
  if (!(palm_stiffness >= 0.0)) throw std::invalid_argument("oracle: palm_stiffness must be non-negative");
  if (!(perturb_sigma >= 0.0)) throw std::invalid_argument("oracle: perturb_sigma must be non-negative");
  if (disturbances < 0) throw std::invalid_argument("oracle: disturbances must be non-negative");
  if (friction_sides < 3) throw std::invalid_argument("oracle: friction_sides must be at least 3");
  if (!(torsion_radius >= 0.0)) throw std::invalid_argument("oracle: torsion_radius must be non-negative");
  if (close_steps < 1) throw std::invalid_argument("oracle: close_steps must be positive");
  if (quality_rays < 0) throw std::invalid_argument("oracle: quality_rays must be non-negative");
}

nlohmann::json OracleOptions::to_json() const {
  return {{"max_normal_force", max_normal_force}, {"palm_stiffness", palm_stiffness},
          {"perturb_sigma", perturb_sigma},       {"disturbances", disturbances},
          {"friction_sides", friction_sides},     {"torsion_radius", torsion_radius},
          {"close_steps", close_steps},           {"quality_rays", quality_rays}};
}

OracleOptions OracleOptions::from_json(const nlohmann::json& j) {
  OracleOptions o;
  for (const auto& [key, value] : j.items()) {
    if (key == "max_normal_force") o.max_normal_force = value.get<double>();
    else if (key == "palm_stiffness") o.palm_stiffness = value.get<double>();
    else if (key == "perturb_sigma") o.perturb_sigma = value.get<double>();
    else if (key == "disturbances") o.disturbances = value.get<int>();
    else if (key == "friction_sides") o.friction_sides = value.get<int>();
    else if (key == "torsion_radius") o.torsion_radius = value.get<double>();
    else if (key == "close_steps") o.close_steps = value.get<int>();
    else if (key == "quality_rays") o.quality_rays = value.get<int>();
    else throw std::invalid_argument("oracle: unknown key '" + key + "'");
  }
  o.validate();
  return o;
}

std::vector<Vec3> palm_points(const HandDescription& desc, double spacing) {
  if (!(spacing > 0.0)) throw std::invalid_argument("palm_points: spacing must be positive");
  std::vector<Vec3> out{Vec3::Zero()};
  auto segment = [&](const Vec3& a, const Vec3& b) {
    const int n = std::max(1, static_cast<int>(std::ceil((b - a).norm() / spacing)));
    for (int i = 1; i <= n; ++i) out.push_back(a + (b - a) * (static_cast<double>(i) / n));
  };
  for (const FingerChain& chain : desc.fingers) {
    segment(Vec3::Zero(), chain.base_position);
  }
  return out;
}

bool palm_penetrates(const HandDescription& desc, const ShapeInstance& inst, const RigidTransform& pregrasp) {
  for (const Vec3& p : palm_points(desc)) {
    const Vec3 w = pregrasp.apply(p);
    if ((w - inst.center()).norm() > inst.bounding_radius()) continue;
    if (inst.sdf(w).distance < 0.0) return true;
  }
  return false;
}

FingerClosure close_fingers(const HandDescription& desc, const ShapeInstance& inst, const Grasp& grasp, int steps) {
  if (steps < 1) throw std::invalid_argument("close_fingers: steps must be positive");
  FingerClosure out;
  if (palm_penetrates(desc, inst, grasp.pregrasp)) {
    out.pregrasp_in_collision = true;
    return out;
  }
  const FingerAngles goal = clamp_to_limits(desc, grasp.fingers);
  const double r_tip = desc.tip_radius;
  for (int f = 0; f < kFingerCount; ++f) {
    const FingerChain& chain = desc.fingers[f];
    const double* g = &goal[f * kJointsPerFinger];
    auto tip = [&](double s) {
      double q[kJointsPerFinger];
      for (int k = 0; k < kJointsPerFinger; ++k) q[k] = s * g[k];
      return grasp.pregrasp.apply(fingertip_in_palm(chain, q));
    };
    auto touches = [&](double s) {
      const Vec3 p = tip(s);
      // every sample lies within the bounding radius of the center
      if ((p - inst.center()).norm() - inst.bounding_radius() >= r_tip) return false;
      return inst.sdf(p).distance < r_tip;
    };
    auto record = [&](double s) {
      const Vec3 p = tip(s);
      const SdfQuery q = inst.sdf(p);
      out.contacts.push_back({p - q.distance * q.normal, -q.normal, f});
    };

    double stop = 1.0;
    if (touches(0.0)) {
      stop = 0.0;
      record(0.0);
    } else {
      for (int s = 1; s <= steps; ++s) {
        const double hi_s = static_cast<double>(s) / steps;
        if (!touches(hi_s)) continue;
        double lo = static_cast<double>(s - 1) / steps;
        double hi = hi_s;
        for (int it = 0; it < 30; ++it) {
          const double mid = 0.5 * (lo + hi);
          (touches(mid) ? hi : lo) = mid;
        }
        stop = static_cast<double>(s - 1) / steps;
        record(lo);
        break;
      }
    }
    for (int k = 0; k < kJointsPerFinger; ++k) out.final_angles[f * kJointsPerFinger + k] = stop * g[k];
  }
  return out;
}

WrenchSet contact_wrenches(const std::vector<Contact>& contacts, const Vec3& center, double torque_radius,
                           double friction, const Vec3& up, int sides, double torsion_radius) {
  if (!(torque_radius > 0.0)) throw std::invalid_argument("contact_wrenches: torque radius must be positive");
  if (sides < 1) throw std::invalid_argument("contact_wrenches: sides must be positive");
  WrenchSet ws;
  ws.contacts = static_cast<int>(contacts.size());
  const int per = 2 * sides;
  ws.w.resize(6, per * ws.contacts);
  const double torsion = friction * torsion_radius;
  for (int c = 0; c < ws.contacts; ++c) {
    const Contact& ct = contacts[c];
    const Frame3 fr = build_surface_frame(ct.point, ct.normal, up);
    const Vec3 arm = ct.point - center;
    for (int j = 0; j < sides; ++j) {
      const double phi = 2.0 * std::numbers::pi * j / sides;
      const Vec3 f = ct.normal + friction * (std::cos(phi) * fr.x() + std::sin(phi) * fr.y());
      const Vec3 tau = arm.cross(f);
      for (int sgn = 0; sgn < 2; ++sgn) {
        const int col = c * per + 2 * j + sgn;
        ws.w.block<3, 1>(0, col) = f;
        ws.w.block<3, 1>(3, col) = (tau + (sgn ? -torsion : torsion) * ct.normal) / torque_radius;
        ws.contact_of.push_back(c);
      }
    }
  }
  return ws;
}

bool force_closure(const WrenchSet& ws) {
  const int k = static_cast<int>(ws.w.cols());
  if (k < 7) return false;
  Eigen::JacobiSVD<MatX> svd(ws.w);
  const auto sv = svd.singularValues();
  if (sv(5) <= 1e-9 * std::max(1.0, sv(0))) return false;
  // lambda_j = s + mu_j with mu >= 0: maximize the common floor s.
  MatX a(7, k + 1);
  a.block(0, 0, 6, 1) = ws.w.rowwise().sum();
  a.block(0, 1, 6, k) = ws.w;
  a(6, 0) = k;
  a.block(6, 1, 1, k).setOnes();
  VecX b = VecX::Zero(7);
  b(6) = 1.0;
  VecX c = VecX::Zero(k + 1);
  c(0) = 1.0;
  const LpResult r = solve_lp(a, b, c);
  return r.status == LpStatus::optimal && r.value > 1e-9;
}

double hull_quality(const WrenchSet& ws, int random_rays) {
  if (!force_closure(ws)) return 0.0;
  const int k = static_cast<int>(ws.w.cols());
  using Vec6 = Eigen::Matrix<double, 6, 1>;

  std::vector<Vec6> starts;
  for (int a = 0; a < 6; ++a) {
    starts.push_back(Vec6::Unit(a));
    starts.push_back(-Vec6::Unit(a));
  }
  Rng rng(0x9a11);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int r = 0; r < random_rays; ++r) {
    Vec6 u;
    for (int a = 0; a < 6; ++a) u(a) = normal(rng);
    starts.push_back(u.normalized());
  }

  // Ray LP: maximize t with sum lambda_j w_j = t u, sum lambda = 1. Its dual
  // (n = -y_w, h = y_1) is a supporting hyperplane n.x <= h through the exit
  // point, whose distance h / |n| bounds epsilon from above; walking along the
  // hyperplane normal descends to a nearest facet.
  MatX a(7, k + 1);
  a.block(0, 0, 6, k) = ws.w;
  a.block(6, 0, 1, k).setOnes();
  a(6, k) = 0.0;
  VecX b = VecX::Zero(7);
  b(6) = 1.0;
  VecX c = VecX::Zero(k + 1);
  c(k) = 1.0;

  double best = std::numeric_limits<double>::infinity();
  for (Vec6 u : starts) {
    double prev = std::numeric_limits<double>::infinity();
    for (int step = 0; step < 30; ++step) {
      a.block(0, k, 6, 1) = -u;
      const LpResult r = solve_lp(a, b, c);
      if (r.status != LpStatus::optimal) break;
      best = std::min(best, r.value);
      const Vec6 n = -r.dual.head<6>();
      const double nn = n.norm();
      if (!(nn > 0.0)) break;
      const double d = r.dual(6) / nn;
      best = std::min(best, d);
      if (d >= prev - 1e-13) break;
      prev = d;
      u = n / nn;
    }
  }
  return std::isfinite(best) ? std::max(best, 0.0) : 0.0;
}

double hull_distance(const WrenchSet& ws) {
  const int k = static_cast<int>(ws.w.cols());
  if (k == 0) throw std::invalid_argument("hull_distance: empty wrench set");
  using Vec6 = Eigen::Matrix<double, 6, 1>;
  const double scale = ws.w.colwise().squaredNorm().maxCoeff();
  const double tol = 1e-14 * std::max(scale, 1e-300);

  int first = 0;
  ws.w.colwise().squaredNorm().minCoeff(&first);
  std::vector<int> set{first};
  std::vector<double> lambda{1.0};
  Vec6 x = ws.w.col(first);

  for (int major = 0; major < 10 * k + 100; ++major) {
    int j = 0;
    (x.transpose() * ws.w).minCoeff(&j);
    if (x.squaredNorm() - x.dot(ws.w.col(j)) <= tol) break;
    if (std::find(set.begin(), set.end(), j) != set.end()) break;
    set.push_back(j);
    lambda.push_back(0.0);
    while (true) {
      // Minimum-norm point of the affine hull of the current set.
      const int n = static_cast<int>(set.size());
      MatX kkt = MatX::Zero(n + 1, n + 1);
      for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) kkt(a, b) = ws.w.col(set[a]).dot(ws.w.col(set[b]));
        kkt(a, n) = kkt(n, a) = 1.0;
      }
      VecX rhs = VecX::Zero(n + 1);
      rhs(n) = 1.0;
      const VecX alpha = kkt.fullPivLu().solve(rhs).head(n);
      if ((alpha.array() > 1e-15).all()) {
        for (int a = 0; a < n; ++a) lambda[a] = alpha(a);
        break;
      }
      double theta = 1.0;
      for (int a = 0; a < n; ++a) {
        if (alpha(a) <= 1e-15) theta = std::min(theta, lambda[a] / (lambda[a] - alpha(a)));
      }
      std::vector<int> keep_set;
      std::vector<double> keep_lambda;
      for (int a = 0; a < n; ++a) {
        const double l = lambda[a] + theta * (alpha(a) - lambda[a]);
        if (l > 1e-15) {
          keep_set.push_back(set[a]);
          keep_lambda.push_back(l);
        }
      }
      set = std::move(keep_set);
      lambda = std::move(keep_lambda);
      if (set.size() <= 1) {
        if (set.empty()) return 0.0;
        lambda = {1.0};
        break;
      }
    }
    x.setZero();
    for (std::size_t a = 0; a < set.size(); ++a) x += lambda[a] * ws.w.col(set[a]);
  }
  return x.norm();
}

double signed_quality(const WrenchSet& ws, int random_rays) {
  if (force_closure(ws)) return hull_quality(ws, random_rays);
  return -hull_distance(ws);
}

double force_closure_quality(const std::vector<Contact>& contacts, const Vec3& center, double torque_radius,
                             const PhysicsParams& params, const OracleOptions& opts) {
  params.validate();
  if (contacts.size() < 2) return 0.0;
  const WrenchSet ws = contact_wrenches(contacts, center, torque_radius, params.friction,
                                        -params.gravity.normalized(), opts.friction_sides, opts.torsion_radius);
  return hull_quality(ws, opts.quality_rays);
}

bool can_balance(const WrenchSet& ws, const Vec3& external_force, double max_normal_force) {
  const int k = static_cast<int>(ws.w.cols());
  const int nc = ws.contacts;
  MatX a = MatX::Zero(6 + nc, k + nc);
  a.block(0, 0, 6, k) = ws.w;
  for (int j = 0; j < k; ++j) a(6 + ws.contact_of[j], j) = 1.0;
  a.block(6, k, nc, nc).setIdentity();
  VecX b = VecX::Zero(6 + nc);
  b.head<3>() = -external_force;
  b.tail(nc).setConstant(max_normal_force);
  const LpResult r = solve_lp(a, b, VecX::Zero(k + nc));
  return r.status == LpStatus::optimal;
}

std::string to_string(Failure f) {
  switch (f) {
    case Failure::none: return "none";
    case Failure::pregrasp_in_collision: return "pregrasp_in_collision";
    case Failure::table_collision: return "table_collision";
    case Failure::too_few_contacts: return "too_few_contacts";
    case Failure::no_force_closure: return "no_force_closure";
    case Failure::gravity: return "gravity";
    case Failure::disturbance: return "disturbance";
  }
  return "unknown";
}

StabilityVerdict judge_contacts(const std::vector<Contact>& contacts, const Vec3& center, double torque_radius,
                                const PhysicsParams& params, const std::vector<Vec3>& disturbances,
                                const OracleOptions& opts) {
  params.validate();
  StabilityVerdict v;
  v.contacts = contacts;
  if (contacts.size() < 2) {
    v.failure = Failure::too_few_contacts;
    return v;
  }
  const WrenchSet ws = contact_wrenches(contacts, center, torque_radius, params.friction,
                                        -params.gravity.normalized(), opts.friction_sides, opts.torsion_radius);
  if (!force_closure(ws)) {
    v.failure = Failure::no_force_closure;
    return v;
  }
  const Vec3 weight = params.mass * params.gravity;
  if (!can_balance(ws, weight, opts.max_normal_force)) {
    v.failure = Failure::gravity;
    return v;
  }
  for (std::size_t i = 0; i < disturbances.size(); ++i) {
    if (!can_balance(ws, weight + disturbances[i], opts.max_normal_force)) {
      v.failure = Failure::disturbance;
      v.failed_draw = static_cast<int>(i);
      return v;
    }
  }
  v.epsilon_quality = hull_quality(ws, opts.quality_rays);
  v.success = v.epsilon_quality > 0.0;
  if (!v.success) v.failure = Failure::no_force_closure;
  return v;
}

std::vector<Vec3> draw_disturbances(std::uint64_t seed, const OracleOptions& opts) {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Vec3> out;
  for (int i = 0; i < opts.disturbances; ++i) {
    Vec3 delta;
    for (int a = 0; a < 3; ++a) delta(a) = opts.perturb_sigma * normal(rng);
    out.push_back(opts.palm_stiffness * delta);
  }
  return out;
}

StabilityVerdict lift_success(const HandDescription& desc, const ShapeInstance& inst, const Grasp& grasp,
                              const PhysicsParams& params, std::uint64_t seed, const OracleOptions& opts) {
  StabilityVerdict v;
  if (grasp.pregrasp.translation.z() < inst.z_min()) {
    v.failure = Failure::table_collision;
    return v;
  }
  const FingerClosure closed = close_fingers(desc, inst, grasp, opts.close_steps);
  if (closed.pregrasp_in_collision) {
    v.failure = Failure::pregrasp_in_collision;
    return v;
  }
  v = judge_contacts(closed.contacts, inst.center(), inst.bounding_radius(), params, draw_disturbances(seed, opts),
                     opts);
  v.final_angles = closed.final_angles;
  return v;
}

}  // namespace isagrasp
