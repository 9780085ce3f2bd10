#include "isagrasp/demo_synth.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include "isagrasp/seeding.hpp"

namespace isagrasp {

namespace {

constexpr double kMinThickness = 0.008;  // m, half extent
constexpr double kMinWrapHeight = 0.02;  // m, half extent along z
constexpr double kMaxAperture = 0.13;    // m, thumb to finger keypoint

/// Keypoint directions in the style frame: x pointing, y palm side axis,
/// z facing (palm toward object). Order: thumb, index, middle, ring.
std::array<Vec3, kFingerCount> style_directions(GraspStyle style) {
  auto around = [](double elevation, double azimuth) {
    return Vec3(std::cos(elevation) * std::cos(azimuth), std::cos(elevation) * std::sin(azimuth),
                -std::sin(elevation));
  };
  switch (style) {
    case GraspStyle::pinch_top: {
      const double e = 0.35;
      return {around(e, std::numbers::pi), around(e, 0.0), around(e, -0.5), around(e, -1.0)};
    }
    case GraspStyle::tripod: {
      const double e = 0.3;
      return {around(e, std::numbers::pi), around(e, 0.6), around(e, -0.6), around(e, -1.2)};
    }
    case GraspStyle::wrap_side: {
      const double e = 0.2;
      return {around(e, std::numbers::pi), Vec3(std::cos(e), 0.35, -std::sin(e)).normalized(),
              around(e, 0.0), Vec3(std::cos(e), -0.35, -std::sin(e)).normalized()};
    }
  }
  throw std::invalid_argument("unknown grasp style");
}

/// Columns x, y, z of the style frame in the world.
Mat3 style_frame(GraspStyle style, double yaw) {
  const Vec3 h(std::cos(yaw), std::sin(yaw), 0.0);
  Mat3 m;
  if (style == GraspStyle::wrap_side) {
    const Vec3 z = h;
    const Vec3 y = Vec3::UnitZ();
    m << y.cross(z), y, z;
  } else {
    const Vec3 z = -Vec3::UnitZ();
    const Vec3 x = h;
    m << x, z.cross(x), z;
  }
  return m;
}

}  // namespace

std::string to_string(GraspStyle s) {
  switch (s) {
    case GraspStyle::pinch_top: return "pinch-top";
    case GraspStyle::wrap_side: return "wrap-side";
    case GraspStyle::tripod: return "tripod";
  }
  return "unknown";
}

GraspStyle grasp_style_from_string(const std::string& s) {
  if (s == "pinch-top") return GraspStyle::pinch_top;
  if (s == "wrap-side") return GraspStyle::wrap_side;
  if (s == "tripod") return GraspStyle::tripod;
  throw std::invalid_argument("unknown grasp style '" + s + "'");
}

void DemoSpec::validate() const {
  shape.validate();
  if (!(jitter >= 0.0)) throw std::invalid_argument("DemoSpec: jitter must be non-negative");
  if (!(palm_offset > 0.0)) throw std::invalid_argument("DemoSpec: palm_offset must be positive");
  if (yaw && !std::isfinite(*yaw)) throw std::invalid_argument("DemoSpec: yaw must be finite");
}

Vec3 template_ray_hit(const TemplateShape& shape, const Vec3& dir) {
  const Vec3 d = dir.normalized();
  double lo = 0.0;
  double hi = 2.0 * shape.bounds().norm() + 1e-3;
  if (template_sdf(shape, Vec3::Zero()) >= 0.0) throw std::invalid_argument("template center is not inside");
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    (template_sdf(shape, mid * d) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi) * d;
}

HandDescription human_hand(const HandDescription& robot) {
  HandDescription h = robot;
  const double k = 1.0 / robot.scale_ratio;
  h.name = robot.name + "_human";
  for (auto& f : h.fingers) {
    f.base_position *= k;
    for (double& l : f.link_lengths) l *= k;
  }
  h.tip_radius *= k;
  h.scale_ratio = 1.0;
  return h;
}

SyntheticDemo synth_demo(const DemoSpec& spec, std::uint64_t seed, const HandDescription& robot) {
  spec.validate();
  const Vec3 half = spec.shape.bounds();
  const std::string style = to_string(spec.style);
  for (int a = 0; a < 3; ++a) {
    if (half(a) < kMinThickness) {
      std::ostringstream msg;
      msg << style << " on '" << spec.shape.name << "': half extent " << half(a) << " m along axis " << a
          << " is below the " << kMinThickness << " m minimum thickness";
      throw std::invalid_argument(msg.str());
    }
  }
  if (spec.style == GraspStyle::wrap_side && half.z() < kMinWrapHeight) {
    std::ostringstream msg;
    msg << "wrap-side on '" << spec.shape.name << "': half height " << half.z() << " m is below the "
        << kMinWrapHeight << " m needed to stack three fingers";
    throw std::invalid_argument(msg.str());
  }

  SyntheticDemo out;
  Rng yaw_rng(derive_seed(seed, {0}));
  out.yaw = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(yaw_rng);
  if (spec.yaw) out.yaw = *spec.yaw;
  const Mat3 frame = style_frame(spec.style, out.yaw);
  const auto dirs = style_directions(spec.style);

  Rng jitter_rng(derive_seed(seed, {1}));
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec3 centroid = Vec3::Zero();
  Vec3 mean_normal = Vec3::Zero();
  for (int f = 0; f < kFingerCount; ++f) {
    const Vec3 p = template_ray_hit(spec.shape, frame * dirs[f]);
    const Vec3 n = template_normal(spec.shape, p);
    out.clean_keypoints[f] = p;
    out.normals[f] = n;
    const Frame3 tangent = build_surface_frame(p, n, Vec3::UnitZ());
    const double u = normal(jitter_rng);
    const double v = normal(jitter_rng);
    out.record.human_fingertips[f] = p + spec.jitter * (u * tangent.x() + v * tangent.y());
    centroid += out.record.human_fingertips[f];
    mean_normal += n;
  }
  for (int f = 1; f < kFingerCount; ++f) {
    const double span = (out.clean_keypoints[f] - out.clean_keypoints[0]).norm();
    if (span > kMaxAperture) {
      std::ostringstream msg;
      msg << style << " on '" << spec.shape.name << "': thumb-to-finger span " << span << " m exceeds the "
          << kMaxAperture << " m hand aperture";
      throw std::invalid_argument(msg.str());
    }
  }
  centroid /= kFingerCount;
  // The palm origin is the thumb base; start it behind the keypoint
  // centroid by the human finger-base offset.
  const HandDescription human = human_hand(robot);
  const double base_offset = human.fingers[1].base_position.x();
  out.initial_palm.origin = centroid + spec.palm_offset * mean_normal.normalized() - base_offset * frame.col(0);
  out.initial_palm.axes = frame;
  out.record.human_palm = out.initial_palm;
  out.record.object_center = Vec3::Zero();

  RetargetOptions fit;
  fit.restarts = 4;
  fit.seed = derive_seed(seed, {2});
  const RetargetResult r = retarget(human, out.record, RetargetWeights{0.0, 1.0, 0.02}, fit);
  out.fit_residual = r.terms[1];
  out.record.human_palm = Frame3::from_transform(r.pose.base);
  out.record.validate();
  return out;
}

}  // namespace isagrasp
