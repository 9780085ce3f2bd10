#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "isagrasp/retargeting.hpp"
#include "isagrasp/shape_field.hpp"

namespace isagrasp {

enum class GraspStyle { pinch_top, wrap_side, tripod };

std::string to_string(GraspStyle s);  // "pinch-top", "wrap-side", "tripod"
GraspStyle grasp_style_from_string(const std::string& s);

struct DemoSpec {
  TemplateShape shape;
  GraspStyle style = GraspStyle::pinch_top;
  double jitter = 0.0;        // m, tangential keypoint noise
  double palm_offset = 0.05;  // m, keypoint centroid to palm along the mean normal
  std::optional<double> yaw = std::nullopt;  // rad about +z; seeded U[0, 2 pi) when unset

  void validate() const;
};

/// A synthetic "human" demonstration on a template at the origin.
struct SyntheticDemo {
  DemoRecord record;
  std::array<Vec3, kFingerCount> clean_keypoints;  // before jitter
  std::array<Vec3, kFingerCount> normals;          // outward, at the clean keypoints
  double yaw = 0.0;
  Frame3 initial_palm;     // before fitting
  double fit_residual = 0.0;  // summed squared fingertip error of the fit
};

/// The robot hand shrunk by its scale ratio; stands in for the human hand.
HandDescription human_hand(const HandDescription& robot);

/// Fingertip keypoints are placed where rays from the template center meet
/// the surface, in a style-specific pattern around a seeded yaw; jitter is
/// Gaussian in each keypoint's tangent plane. The palm starts `palm_offset`
/// out from the keypoint centroid along the mean outward normal, facing the
/// object with the pointing axis from the thumb side to the finger side,
/// and is then fitted so that the human hand reaches the keypoints.
///
/// Throws std::invalid_argument when the template is too thin for the
/// style or the keypoints span more than a human hand can.
SyntheticDemo synth_demo(const DemoSpec& spec, std::uint64_t seed,
                         const HandDescription& robot = HandDescription::default_hand());

/// Point where the ray from the origin along `dir` leaves the template.
Vec3 template_ray_hit(const TemplateShape& shape, const Vec3& dir);

}  // namespace isagrasp
