#include "isagrasp/retargeting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "isagrasp/seeding.hpp"

namespace isagrasp {

void DemoRecord::validate() const {
  for (const Vec3& p : human_fingertips) {
    if (!p.allFinite()) throw std::invalid_argument("DemoRecord: non-finite fingertip");
  }
  if (!object_center.allFinite() || !object_pose.translation.allFinite()) {
    throw std::invalid_argument("DemoRecord: non-finite object pose");
  }
  if (!human_palm.origin.allFinite() || !is_rotation_matrix(human_palm.axes)) {
    throw std::invalid_argument("DemoRecord: palm frame is not orthonormal");
  }
}

DemoRecord DemoRecord::transformed(const RigidTransform& t) const {
  DemoRecord d = *this;
  for (Vec3& p : d.human_fingertips) p = t.apply(p);
  d.human_palm.origin = t.apply(human_palm.origin);
  d.human_palm.axes = t.rotation.matrix() * human_palm.axes;
  d.object_pose = t * object_pose;
  d.object_center = t.apply(object_center);
  return d;
}

namespace {

nlohmann::json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

Vec3 vec_from(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 3) throw std::invalid_argument("DemoRecord: expected a 3-vector");
  return {v[0], v[1], v[2]};
}

}  // namespace

nlohmann::json DemoRecord::to_json() const {
  nlohmann::json tips = nlohmann::json::array();
  for (const Vec3& p : human_fingertips) tips.push_back(vec_json(p));
  const auto q = object_pose.rotation.coeffs();
  return {{"fingertips", tips},
          {"palm_origin", vec_json(human_palm.origin)},
          {"palm_x", vec_json(human_palm.x())},
          {"palm_z", vec_json(human_palm.z())},
          {"object_translation", vec_json(object_pose.translation)},
          {"object_rotation", {q[0], q[1], q[2], q[3]}},
          {"object_center", vec_json(object_center)}};
}

DemoRecord DemoRecord::from_json(const nlohmann::json& j) {
  DemoRecord d;
  const auto& tips = j.at("fingertips");
  if (!tips.is_array() || tips.size() != static_cast<std::size_t>(kFingerCount)) {
    throw std::invalid_argument("DemoRecord: expected four fingertips");
  }
  for (int f = 0; f < kFingerCount; ++f) d.human_fingertips[f] = vec_from(tips[f]);
  const Vec3 x = vec_from(j.at("palm_x"));
  const Vec3 z = vec_from(j.at("palm_z"));
  d.human_palm.origin = vec_from(j.at("palm_origin"));
  d.human_palm.axes << x, z.cross(x), z;
  const auto q = j.at("object_rotation").get<std::vector<double>>();
  if (q.size() != 4) throw std::invalid_argument("DemoRecord: expected a quaternion");
  d.object_pose.translation = vec_from(j.at("object_translation"));
  d.object_pose.rotation = UnitQuaternion(q[0], q[1], q[2], q[3]);
  d.object_center = vec_from(j.at("object_center"));
  d.validate();
  return d;
}

void RetargetWeights::validate() const {
  if (w_g < 0.0 || w_c < 0.0 || w_r < 0.0) throw std::invalid_argument("RetargetWeights: negative weight");
  if (!(w_g > 0.0 || w_c > 0.0 || w_r > 0.0)) throw std::invalid_argument("RetargetWeights: all weights zero");
}

namespace {

double dg_from(const HandDescription& desc, const HandKinematics& k, const DemoRecord& demo) {
  double sum = 0.0;
  for (int i = 0; i < kFingerCount; ++i) {
    const Vec3 a_r = k.fingertips[i] - k.palm.origin;
    const Vec3 a_h = demo.human_fingertips[i] - demo.human_palm.origin;
    sum += (a_r - desc.scale_ratio * a_h).squaredNorm();
  }
  return sum;
}

double dc_from(const HandKinematics& k, const DemoRecord& demo) {
  double sum = 0.0;
  for (int i = 0; i < kFingerCount; ++i) {
    const Vec3 c_r = k.fingertips[i] - demo.object_center;
    const Vec3 c_h = demo.human_fingertips[i] - demo.object_center;
    sum += (c_r - c_h).squaredNorm();
  }
  return sum;
}

double dr_from(const HandKinematics& k, const DemoRecord& demo) {
  return geodesic_distance(k.palm.axes, demo.human_palm.axes);
}

constexpr int kDof = 22;
using Coords = Eigen::Matrix<double, kDof, 1>;

struct SearchPoint {
  Vec3 t;
  UnitQuaternion q;
  FingerAngles f;
};

HandPose to_pose(const SearchPoint& s) { return {{s.t, s.q}, s.f}; }

/// Moves `s` by coordinate increment `d` (translation in scaled units,
/// rotation as a world-frame axis-angle, fingers in radians).
SearchPoint displaced(const SearchPoint& s, const Coords& d, double tscale, bool clamp,
                      const HandDescription& desc) {
  SearchPoint out = s;
  out.t = s.t + tscale * d.segment<3>(0);
  out.q = UnitQuaternion::from_axis_angle(d.segment<3>(3)) * s.q;
  for (int j = 0; j < kFingerJoints; ++j) out.f[j] = s.f[j] + d(6 + j);
  if (clamp) out.f = clamp_to_limits(desc, out.f);
  return out;
}

/// The objective splits into a smooth part (w_g d_g + w_c d_c) handled by
/// gradient steps and w_r times the palm rotation distance, which has a kink
/// at zero and is handled by its proximal map (shrinking the palm rotation
/// toward the human palm along the geodesic).
struct Problem {
  const HandDescription& desc;
  const DemoRecord& demo;
  const RetargetWeights& w;
  const RetargetOptions& opts;
  UnitQuaternion human_q;

  double smooth(const SearchPoint& s) const {
    return retarget_objective(desc, to_pose(s), demo, RetargetWeights{w.w_g, w.w_c, 0.0});
  }
  double rotation_term(const SearchPoint& s) const {
    return w.w_r * geodesic_distance(s.q, human_q);
  }
  double value(const SearchPoint& s) const { return retarget_objective(desc, to_pose(s), demo, w); }

  Coords gradient(const SearchPoint& s) const {
    Coords g;
    const double h = opts.fd_step;
    for (int k = 0; k < kDof; ++k) {
      Coords d = Coords::Zero();
      d(k) = h;
      // Finger coordinates are evaluated unclamped so that one-sided limits do
      // not bias the difference; FK clamps internally, which is the same map.
      const double fp = smooth(displaced(s, d, opts.translation_scale, false, desc));
      const double fm = smooth(displaced(s, -d, opts.translation_scale, false, desc));
      g(k) = (fp - fm) / (2.0 * h);
    }
    return g;
  }

  /// Proximal gradient step of length `alpha`; `step` receives the realized
  /// coordinate increment.
  SearchPoint prox_step(const SearchPoint& s, const Coords& g, double alpha, Coords& step) const {
    SearchPoint out = displaced(s, -alpha * g, opts.translation_scale, true, desc);
    const Vec3 omega = (out.q * human_q.inverse()).to_axis_angle();
    const double angle = omega.norm();
    const double shrink = alpha * w.w_r;
    out.q = angle > shrink ? UnitQuaternion::from_axis_angle((1.0 - shrink / angle) * omega) * human_q : human_q;
    step.segment<3>(0) = (out.t - s.t) / opts.translation_scale;
    step.segment<3>(3) = (out.q * s.q.inverse()).to_axis_angle();
    for (int j = 0; j < kFingerJoints; ++j) step(6 + j) = out.f[j] - s.f[j];
    return out;
  }
};

struct RestartOutcome {
  SearchPoint best;
  double value = std::numeric_limits<double>::infinity();
  double start_value = 0.0;
  bool converged = false;
  std::vector<double> trace;
};

RestartOutcome descend(const Problem& prob, SearchPoint s) {
  RestartOutcome out;
  double phi = prob.smooth(s);
  double f = phi + prob.rotation_term(s);
  out.start_value = f;
  if (prob.opts.record_trace) out.trace.push_back(f);
  Coords g = prob.gradient(s);
  double alpha = 1.0;
  for (int it = 0; it < prob.opts.max_iters; ++it) {
    bool accepted = false;
    SearchPoint next;
    Coords step;
    double phi_next = phi;
    double f_next = f;
    for (int bt = 0; bt < 80; ++bt) {
      next = prob.prox_step(s, g, alpha, step);
      phi_next = prob.smooth(next);
      f_next = phi_next + prob.rotation_term(next);
      // Sufficient decrease of the quadratic upper model.
      if (phi_next <= phi + g.dot(step) + step.squaredNorm() / (2.0 * alpha) + 1e-15 && f_next <= f) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) break;
    const bool stationary = step.norm() / alpha < prob.opts.grad_tol;
    const Coords g_next = prob.gradient(next);
    // Barzilai-Borwein length for the next trial step.
    const Coords y = g_next - g;
    const double sy = step.dot(y);
    alpha = sy > 1e-300 ? std::clamp(step.squaredNorm() / sy, 1e-10, 1e4) : std::min(alpha * 4.0, 1e4);
    s = next;
    phi = phi_next;
    f = f_next;
    g = g_next;
    if (prob.opts.record_trace) out.trace.push_back(f);
    if (stationary) {
      out.converged = true;
      break;
    }
  }
  out.best = s;
  out.value = f;
  return out;
}

}  // namespace

double cost_dg(const HandDescription& desc, const HandPose& pose, const DemoRecord& demo) {
  return dg_from(desc, forward_kinematics(desc, pose), demo);
}

double cost_dc(const HandDescription& desc, const HandPose& pose, const DemoRecord& demo) {
  return dc_from(forward_kinematics(desc, pose), demo);
}

double cost_dr(const HandDescription& desc, const HandPose& pose, const DemoRecord& demo) {
  return dr_from(forward_kinematics(desc, pose), demo);
}

double retarget_objective(const HandDescription& desc, const HandPose& pose, const DemoRecord& demo,
                          const RetargetWeights& w, std::array<double, 3>* terms) {
  const HandKinematics k = forward_kinematics(desc, pose);
  const double dg = dg_from(desc, k, demo);
  const double dc = dc_from(k, demo);
  const double dr = dr_from(k, demo);
  if (terms) *terms = {dg, dc, dr};
  return w.w_g * dg + w.w_c * dc + w.w_r * dr;
}

HandPose initial_pose(const HandDescription& desc, const DemoRecord& demo) {
  HandPose p;
  p.base = demo.human_palm.transform();
  for (int j = 0; j < kFingerJoints; ++j) {
    const JointLimit l = desc.limit(j);
    p.fingers[j] = 0.5 * (l.lo + l.hi);
  }
  return p;
}

RetargetResult retarget(const HandDescription& desc, const DemoRecord& demo, const RetargetWeights& weights,
                        const RetargetOptions& opts) {
  weights.validate();
  demo.validate();
  if (opts.restarts < 1) throw std::invalid_argument("retarget: restarts must be >= 1");
  const Problem prob{desc, demo, weights, opts, UnitQuaternion::from_matrix(demo.human_palm.axes)};
  const HandPose start0 = initial_pose(desc, demo);

  std::vector<RestartOutcome> outcomes(opts.restarts);
#pragma omp parallel for schedule(dynamic)
  for (int r = 0; r < opts.restarts; ++r) {
    SearchPoint s{start0.base.translation, start0.base.rotation, start0.fingers};
    if (r > 0) {
      Rng rng = make_rng(opts.seed, {stage_id(Stage::retarget), static_cast<std::uint64_t>(r)});
      std::uniform_real_distribution<double> unit(-1.0, 1.0);
      Vec3 dt(unit(rng), unit(rng), unit(rng));
      Vec3 dr(unit(rng), unit(rng), unit(rng));
      s.t += opts.init_translation_jitter * dt;
      s.q = UnitQuaternion::from_axis_angle(opts.init_rotation_jitter * dr) * s.q;
      for (int j = 0; j < kFingerJoints; ++j) {
        const JointLimit l = desc.limit(j);
        s.f[j] = std::uniform_real_distribution<double>(l.lo, l.hi)(rng);
      }
    }
    outcomes[r] = descend(prob, s);
  }

  int best = 0;
  for (int r = 1; r < opts.restarts; ++r) {
    if (outcomes[r].value < outcomes[best].value) best = r;
  }
  RetargetResult res;
  res.pose = to_pose(outcomes[best].best);
  res.objective = retarget_objective(desc, res.pose, demo, weights, &res.terms);
  res.converged = outcomes[best].converged;
  res.best_restart = best;
  res.initial_objective = outcomes[0].start_value;
  res.trace = std::move(outcomes[best].trace);
  return res;
}

}  // namespace isagrasp
