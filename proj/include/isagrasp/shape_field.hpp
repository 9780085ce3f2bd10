#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "isagrasp/geometry.hpp"

namespace isagrasp {

enum class TemplateKind { sphere, capsule, cylinder, rounded_box, superellipsoid };

std::string to_string(TemplateKind k);
TemplateKind template_kind_from_string(const std::string& s);

/// Analytic template centered at the origin, long axis along z.
///   sphere:         radius
///   capsule:        radius, half_extents.z = half length of the segment
///   cylinder:       radius, half_extents.z = half height
///   rounded_box:    half_extents, radius = edge rounding
///   superellipsoid: half_extents = semi-axes, e1 (vertical) / e2 (horizontal) exponents
struct TemplateShape {
  std::string name;
  TemplateKind kind = TemplateKind::sphere;
  Vec3 half_extents = Vec3::Zero();
  double radius = 0.0;
  double e1 = 1.0;
  double e2 = 1.0;

  static TemplateShape sphere(double r);
  static TemplateShape capsule(double r, double half_length);
  static TemplateShape cylinder(double r, double half_height);
  static TemplateShape rounded_box(const Vec3& half, double rounding);
  static TemplateShape superellipsoid(const Vec3& semi_axes, double e1, double e2);

  void validate() const;
  /// Half extents of the axis-aligned bounding box.
  Vec3 bounds() const;

  nlohmann::json to_json() const;
  static TemplateShape from_json(const nlohmann::json& j);
};

bool operator==(const TemplateShape& a, const TemplateShape& b);

/// The four templates of the default synthetic suite.
std::vector<TemplateShape> default_templates();

double template_sdf(const TemplateShape& shape, const Vec3& p);
/// Unit outward gradient of the template SDF (central differences).
Vec3 template_normal(const TemplateShape& shape, const Vec3& p);

inline constexpr int kLatentDim = 128;
inline constexpr int kLatticeSide = 4;
inline constexpr int kCenters = kLatticeSide * kLatticeSide * kLatticeSide;

using Latent = Eigen::Matrix<double, kLatentDim, 1>;

/// Displacement field D(p) = g * sum_k w_k exp(-|p - c_k|^2 / sigma^2) with
/// w = W * latent reshaped to kCenters x 3.
struct DeformationField {
  std::vector<Vec3> centers;
  double sigma = 0.0;
  Eigen::MatrixXd mix;  // (3 * kCenters) x kLatentDim, row 3k + a -> w_k[a]
  double gain = 1.0;

  /// Lattice over the template bounding box, sigma = sigma_frac * box
  /// diagonal, mixing matrix drawn N(0, 1) from `mix_seed`.
  static DeformationField for_template(const TemplateShape& shape, double gain, std::uint64_t mix_seed,
                                       double sigma_frac = 0.4);

  Eigen::Matrix<double, kCenters, 3> weights(const Latent& latent) const;
  Vec3 displacement(const Eigen::Matrix<double, kCenters, 3>& w, const Vec3& p) const;
  /// d deform / dp.
  Mat3 jacobian(const Eigen::Matrix<double, kCenters, 3>& w, const Vec3& p) const;
};

Vec3 deform(const DeformationField& field, const Latent& latent, const Vec3& p);

struct SurfaceSamples {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;
};

/// Rejection sampling in a shell around the zero level set followed by five
/// projection steps p <- p - sdf(p) grad sdf(p).
SurfaceSamples sample_template_surface(const TemplateShape& shape, int count, std::uint64_t seed);

struct InstanceOptions {
  double sigma = 0.002;
  int samples = 4096;
  /// Template samples are drawn from this seed so that every instance of a
  /// template shares them; index i corresponds across instances.
  std::uint64_t sample_seed = 0x5eed;
  std::uint64_t mix_seed = 0xf1e1d;
  /// Field gain calibrated so that the default sigma gives surface
  /// displacements of roughly a centimeter.
  double gain = 0.07;
  double sigma_frac = 0.4;

  nlohmann::json to_json() const;
  static InstanceOptions from_json(const nlohmann::json& j);
};

/// kd-tree nearest-neighbor index over a fixed point set.
class PointIndex {
 public:
  PointIndex() = default;
  explicit PointIndex(std::vector<Vec3> points, int leaf_size = 8);
  /// Index of the nearest point (lowest index on ties).
  int nearest(const Vec3& q) const;
  bool empty() const { return points_.empty(); }

 private:
  struct Node {
    int begin, end;  // range into order_
    int axis;        // -1 for leaves
    double split;
    int left, right;
  };
  std::vector<Vec3> points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
  int build(int begin, int end, int leaf_size);
};

/// Brute-force nearest sample, the serial reference for PointIndex.
int nearest_brute_force(const std::vector<Vec3>& points, const Vec3& q);

struct SdfQuery {
  double distance = 0.0;
  Vec3 normal = Vec3::UnitZ();
  int index = -1;
};

class ShapeInstance {
 public:
  ShapeInstance(TemplateShape shape, const Latent& latent, const InstanceOptions& opts);

  const TemplateShape& shape() const { return shape_; }
  const Latent& latent() const { return latent_; }
  const InstanceOptions& options() const { return opts_; }
  const DeformationField& field() const { return field_; }

  const std::vector<Vec3>& template_points() const { return template_->points; }
  const std::vector<Vec3>& template_normals() const { return template_->normals; }
  /// Deformed samples; index i corresponds to template sample i.
  const SurfaceSamples& surface() const { return surface_; }
  const std::vector<Vec3>& points() const { return surface_.points; }
  const std::vector<Vec3>& normals() const { return surface_.normals; }
  std::size_t size() const { return surface_.points.size(); }
  int resampled() const { return resampled_; }

  Vec3 center() const { return center_; }
  double bounding_radius() const { return radius_; }
  double z_min() const { return z_min_; }
  double z_max() const { return z_max_; }

  SdfQuery sdf(const Vec3& p) const;

  /// x y z nx ny nz per line, deformed frame.
  void export_ascii(const std::string& path) const;

 private:
  TemplateShape shape_;
  Latent latent_;
  InstanceOptions opts_;
  DeformationField field_;
  std::shared_ptr<const SurfaceSamples> template_;
  SurfaceSamples surface_;
  int resampled_ = 0;
  Vec3 center_ = Vec3::Zero();
  double radius_ = 0.0;
  double z_min_ = 0.0;
  double z_max_ = 0.0;
  PointIndex index_;
};

/// Latent with i.i.d. N(0, sigma^2) entries.
Latent sample_latent(std::uint64_t seed, double sigma);

ShapeInstance sample_instance(const TemplateShape& shape, std::uint64_t seed, const InstanceOptions& opts = {});

}  // namespace isagrasp
