#include "isagrasp/shape_field.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <tuple>

#include <nlohmann/json.hpp>

#include "isagrasp/seeding.hpp"

namespace isagrasp {

std::string to_string(TemplateKind k) {
  switch (k) {
    case TemplateKind::sphere: return "sphere";
    case TemplateKind::capsule: return "capsule";
    case TemplateKind::cylinder: return "cylinder";
    case TemplateKind::rounded_box: return "rounded_box";
    case TemplateKind::superellipsoid: return "superellipsoid";
  }
  return "unknown";
}

TemplateKind template_kind_from_string(const std::string& s) {
  for (TemplateKind k : {TemplateKind::sphere, TemplateKind::capsule, TemplateKind::cylinder,
                         TemplateKind::rounded_box, TemplateKind::superellipsoid}) {
    if (to_string(k) == s) return k;
  }
  throw std::invalid_argument("unknown template kind '" + s + "'");
}

TemplateShape TemplateShape::sphere(double r) {
  TemplateShape t;
  t.name = "sphere";
  t.kind = TemplateKind::sphere;
  t.radius = r;
  t.half_extents = Vec3::Constant(r);
  return t;
}

TemplateShape TemplateShape::capsule(double r, double half_length) {
  TemplateShape t;
  t.name = "capsule";
  t.kind = TemplateKind::capsule;
  t.radius = r;
  t.half_extents = Vec3(r, r, half_length);
  return t;
}

TemplateShape TemplateShape::cylinder(double r, double half_height) {
  TemplateShape t;
  t.name = "cylinder";
  t.kind = TemplateKind::cylinder;
  t.radius = r;
  t.half_extents = Vec3(r, r, half_height);
  return t;
}

TemplateShape TemplateShape::rounded_box(const Vec3& half, double rounding) {
  TemplateShape t;
  t.name = "rounded_box";
  t.kind = TemplateKind::rounded_box;
  t.half_extents = half;
  t.radius = rounding;
  return t;
}

TemplateShape TemplateShape::superellipsoid(const Vec3& semi_axes, double e1, double e2) {
  TemplateShape t;
  t.name = "superellipsoid";
  t.kind = TemplateKind::superellipsoid;
  t.half_extents = semi_axes;
  t.e1 = e1;
  t.e2 = e2;
  return t;
}

void TemplateShape::validate() const {
  auto fail = [&](const std::string& what) { throw std::invalid_argument("template '" + name + "': " + what); };
  if (!half_extents.allFinite() || !std::isfinite(radius)) fail("non-finite parameter");
  switch (kind) {
    case TemplateKind::sphere:
    case TemplateKind::capsule:
    case TemplateKind::cylinder:
      if (!(radius > 0.0)) fail("radius must be > 0");
      if (kind != TemplateKind::sphere && !(half_extents.z() > 0.0)) fail("half length must be > 0");
      break;
    case TemplateKind::rounded_box:
      if (!(half_extents.minCoeff() > 0.0)) fail("half extents must be > 0");
      if (radius < 0.0 || radius >= half_extents.minCoeff()) fail("rounding must be in [0, min half extent)");
      break;
    case TemplateKind::superellipsoid:
      if (!(half_extents.minCoeff() > 0.0)) fail("semi-axes must be > 0");
      if (!(e1 >= 0.2 && e1 <= 1.0 && e2 >= 0.2 && e2 <= 1.0)) fail("exponents must lie in [0.2, 1]");
      break;
  }
}

Vec3 TemplateShape::bounds() const {
  switch (kind) {
    case TemplateKind::sphere: return Vec3::Constant(radius);
    case TemplateKind::capsule: return Vec3(radius, radius, half_extents.z() + radius);
    case TemplateKind::cylinder: return Vec3(radius, radius, half_extents.z());
    case TemplateKind::rounded_box:
    case TemplateKind::superellipsoid: return half_extents;
  }
  return half_extents;
}

nlohmann::json TemplateShape::to_json() const {
  return {{"name", name},
          {"kind", to_string(kind)},
          {"half_extents", {half_extents.x(), half_extents.y(), half_extents.z()}},
          {"radius", radius},
          {"e1", e1},
          {"e2", e2}};
}

TemplateShape TemplateShape::from_json(const nlohmann::json& j) {
  for (const auto& [key, value] : j.items()) {
    if (key != "name" && key != "kind" && key != "half_extents" && key != "radius" && key != "e1" && key != "e2") {
      throw std::invalid_argument("template: unknown key '" + key + "'");
    }
  }
  TemplateShape t;
  t.kind = template_kind_from_string(j.at("kind").get<std::string>());
  t.name = j.value("name", to_string(t.kind));
  if (j.contains("half_extents")) {
    const auto h = j.at("half_extents").get<std::vector<double>>();
    if (h.size() != 3) throw std::invalid_argument("template: half_extents needs 3 values");
    t.half_extents = Vec3(h[0], h[1], h[2]);
  }
  t.radius = j.value("radius", 0.0);
  t.e1 = j.value("e1", 1.0);
  t.e2 = j.value("e2", 1.0);
  if (t.kind == TemplateKind::sphere) t.half_extents = Vec3::Constant(t.radius);
  if (t.kind == TemplateKind::capsule || t.kind == TemplateKind::cylinder) {
    t.half_extents.x() = t.half_extents.y() = t.radius;
  }
  t.validate();
  return t;
}

bool operator==(const TemplateShape& a, const TemplateShape& b) {
  return a.name == b.name && a.kind == b.kind && a.half_extents == b.half_extents && a.radius == b.radius &&
         a.e1 == b.e1 && a.e2 == b.e2;
}

std::vector<TemplateShape> default_templates() {
  TemplateShape ball = TemplateShape::sphere(0.045);
  ball.name = "ball";
  TemplateShape can = TemplateShape::cylinder(0.035, 0.055);
  can.name = "can";
  TemplateShape box = TemplateShape::rounded_box(Vec3(0.03, 0.04, 0.05), 0.008);
  box.name = "box";
  TemplateShape soap = TemplateShape::superellipsoid(Vec3(0.045, 0.035, 0.035), 0.6, 0.6);
  soap.name = "soap";
  return {ball, can, box, soap};
}

namespace {

double superellipsoid_f(const TemplateShape& s, const Vec3& p) {
  const Vec3& a = s.half_extents;
  const double u = std::pow(std::abs(p.x() / a.x()), 2.0 / s.e2) + std::pow(std::abs(p.y() / a.y()), 2.0 / s.e2);
  return std::pow(u, s.e2 / s.e1) + std::pow(std::abs(p.z() / a.z()), 2.0 / s.e1);
}

Vec3 superellipsoid_grad(const TemplateShape& s, const Vec3& p) {
  const Vec3& a = s.half_extents;
  const double ax = std::abs(p.x() / a.x());
  const double ay = std::abs(p.y() / a.y());
  const double az = std::abs(p.z() / a.z());
  const double u = std::pow(ax, 2.0 / s.e2) + std::pow(ay, 2.0 / s.e2);
  const double outer = u > 0.0 ? (s.e2 / s.e1) * std::pow(u, s.e2 / s.e1 - 1.0) : 0.0;
  const double k = 2.0 / s.e2;
  auto sgn = [](double v) { return v < 0.0 ? -1.0 : 1.0; };
  return {outer * k * std::pow(ax, k - 1.0) * sgn(p.x()) / a.x(),
          outer * k * std::pow(ay, k - 1.0) * sgn(p.y()) / a.y(),
          (2.0 / s.e1) * std::pow(az, 2.0 / s.e1 - 1.0) * sgn(p.z()) / a.z()};
}

/// Scales p along the ray from the origin onto the surface F = 1.
Vec3 radial_projection(const TemplateShape& s, const Vec3& p) {
  return std::pow(superellipsoid_f(s, p), -s.e1 / 2.0) * p;
}

/// Closest-point descent from a surface point q: move along the tangential
/// part of p - q, return to the surface radially, and shorten the step
/// whenever the distance does not drop.
Vec3 foot_point(const TemplateShape& s, const Vec3& p, Vec3 q) {
  const double scale = s.half_extents.minCoeff();
  double dist = (p - q).squaredNorm();
  double beta = 1.0;
  for (int it = 0; it < 500 && beta > 1e-6; ++it) {
    const Vec3 g = superellipsoid_grad(s, q);
    const double gn = g.norm();
    if (!(gn > 0.0)) break;
    const Vec3 n = g / gn;
    const Vec3 r = p - q;
    const Vec3 t = r - r.dot(n) * n;
    if (t.norm() < 1e-10 * scale) break;
    const Vec3 cand = q + beta * t;
    if (cand.norm() < 1e-12 * scale) {
      beta *= 0.5;
      continue;
    }
    const Vec3 next = radial_projection(s, cand);
    const double d = (p - next).squaredNorm();
    if (d < dist) {
      q = next;
      dist = d;
      beta = std::min(1.0, 1.5 * beta);
    } else {
      beta *= 0.5;
    }
  }
  return q;
}

struct Foot {
  double distance;  // signed
  Vec3 point;
};

Foot superellipsoid_foot(const TemplateShape& s, const Vec3& p) {
  const double scale = s.half_extents.minCoeff();
  if (p.norm() < 1e-12 * scale) {
    Vec3 q = Vec3::Zero();
    int axis = 0;
    s.half_extents.minCoeff(&axis);
    q(axis) = s.half_extents(axis);
    return {-scale, q};
  }
  const Vec3 q0 = foot_point(s, p, radial_projection(s, p));
  const double d0 = (p - q0).norm();
  if (superellipsoid_f(s, p) >= 1.0) return {d0, q0};
  // Deeper inside, the descent can stop at a foot point on the far side of
  // the medial axis, so also start from the six axis-ray exits.
  Foot best{-d0, q0};
  if (d0 < 0.1 * scale) return best;
  const double reach = 2.0 * s.half_extents.maxCoeff();
  for (int a = 0; a < 3; ++a) {
    for (double sign : {-1.0, 1.0}) {
      Vec3 dir = Vec3::Zero();
      dir(a) = sign;
      double lo = 0.0;
      double hi = reach;
      for (int k = 0; k < 50; ++k) {
        const double mid = 0.5 * (lo + hi);
        (superellipsoid_f(s, p + mid * dir) < 1.0 ? lo : hi) = mid;
      }
      const Vec3 q = foot_point(s, p, p + hi * dir);
      const double d = (p - q).norm();
      if (d < -best.distance) best = {-d, q};
    }
  }
  return best;
}

}  // namespace

double template_sdf(const TemplateShape& shape, const Vec3& p) {
  switch (shape.kind) {
    case TemplateKind::sphere: return p.norm() - shape.radius;
    case TemplateKind::capsule: {
      const double h = shape.half_extents.z();
      const Vec3 nearest(0.0, 0.0, std::clamp(p.z(), -h, h));
      return (p - nearest).norm() - shape.radius;
    }
    case TemplateKind::cylinder: {
      const Eigen::Vector2d d(std::hypot(p.x(), p.y()) - shape.radius, std::abs(p.z()) - shape.half_extents.z());
      return std::min(std::max(d.x(), d.y()), 0.0) + d.cwiseMax(0.0).norm();
    }
    case TemplateKind::rounded_box: {
      const Vec3 q = p.cwiseAbs() - (shape.half_extents - Vec3::Constant(shape.radius));
      return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0) - shape.radius;
    }
    case TemplateKind::superellipsoid: return superellipsoid_foot(shape, p).distance;
  }
  return 0.0;
}

Vec3 template_normal(const TemplateShape& shape, const Vec3& p) {
  if (shape.kind == TemplateKind::superellipsoid) {
    // The SDF gradient is the surface normal at the foot point.
    const Vec3 g = superellipsoid_grad(shape, superellipsoid_foot(shape, p).point);
    return g.normalized();
  }
  const double h = 1e-6 * shape.bounds().maxCoeff();
  Vec3 g;
  for (int a = 0; a < 3; ++a) {
    Vec3 d = Vec3::Zero();
    d(a) = h;
    g(a) = template_sdf(shape, p + d) - template_sdf(shape, p - d);
  }
  const double n = g.norm();
  if (!(n > 0.0)) throw std::domain_error("template_normal: vanishing gradient");
  return g / n;
}

DeformationField DeformationField::for_template(const TemplateShape& shape, double gain, std::uint64_t mix_seed,
                                                double sigma_frac) {
  DeformationField f;
  const Vec3 h = shape.bounds();
  f.centers.reserve(kCenters);
  for (int i = 0; i < kLatticeSide; ++i) {
    for (int j = 0; j < kLatticeSide; ++j) {
      for (int k = 0; k < kLatticeSide; ++k) {
        const Vec3 t(i, j, k);
        f.centers.push_back(-h + (2.0 / (kLatticeSide - 1)) * t.cwiseProduct(h));
      }
    }
  }
  f.sigma = sigma_frac * (2.0 * h).norm();
  f.gain = gain;
  Rng rng(mix_seed);
  std::normal_distribution<double> n(0.0, 1.0);
  f.mix.resize(3 * kCenters, kLatentDim);
  for (int r = 0; r < f.mix.rows(); ++r)
    for (int c = 0; c < f.mix.cols(); ++c) f.mix(r, c) = n(rng);
  return f;
}

Eigen::Matrix<double, kCenters, 3> DeformationField::weights(const Latent& latent) const {
  const Eigen::VectorXd flat = mix * latent;
  Eigen::Matrix<double, kCenters, 3> w;
  for (int k = 0; k < kCenters; ++k) w.row(k) = flat.segment<3>(3 * k).transpose();
  return w;
}

Vec3 DeformationField::displacement(const Eigen::Matrix<double, kCenters, 3>& w, const Vec3& p) const {
  const double inv = 1.0 / (sigma * sigma);
  Vec3 d = Vec3::Zero();
  for (int k = 0; k < kCenters; ++k) d += std::exp(-(p - centers[k]).squaredNorm() * inv) * w.row(k).transpose();
  return gain * d;
}

Mat3 DeformationField::jacobian(const Eigen::Matrix<double, kCenters, 3>& w, const Vec3& p) const {
  const double inv = 1.0 / (sigma * sigma);
  Mat3 j = Mat3::Zero();
  for (int k = 0; k < kCenters; ++k) {
    const Vec3 r = p - centers[k];
    const double phi = std::exp(-r.squaredNorm() * inv);
    j += w.row(k).transpose() * (-2.0 * inv * phi * r).transpose();
  }
  return Mat3::Identity() + gain * j;
}

Vec3 deform(const DeformationField& field, const Latent& latent, const Vec3& p) {
  return p + field.displacement(field.weights(latent), p);
}

SurfaceSamples sample_template_surface(const TemplateShape& shape, int count, std::uint64_t seed) {
  shape.validate();
  if (count < 1) throw std::invalid_argument("sample_template_surface: count must be >= 1");
  const Vec3 box = 1.15 * shape.bounds();
  const double shell = 0.1 * shape.bounds().minCoeff();
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  SurfaceSamples out;
  out.points.reserve(count);
  out.normals.reserve(count);
  while (static_cast<int>(out.points.size()) < count) {
    Vec3 p(box.x() * u(rng), box.y() * u(rng), box.z() * u(rng));
    if (std::abs(template_sdf(shape, p)) >= shell) continue;
    for (int step = 0; step < 5; ++step) p -= template_sdf(shape, p) * template_normal(shape, p);
    out.points.push_back(p);
    out.normals.push_back(template_normal(shape, p));
  }
  return out;
}

nlohmann::json InstanceOptions::to_json() const {
  return {{"sigma", sigma},           {"samples", samples}, {"sample_seed", sample_seed},
          {"mix_seed", mix_seed},     {"gain", gain},       {"sigma_frac", sigma_frac}};
}

InstanceOptions InstanceOptions::from_json(const nlohmann::json& j) {
  InstanceOptions o;
  for (const auto& [key, value] : j.items()) {
    if (key == "sigma") o.sigma = value.get<double>();
    else if (key == "samples") o.samples = value.get<int>();
    else if (key == "sample_seed") o.sample_seed = value.get<std::uint64_t>();
    else if (key == "mix_seed") o.mix_seed = value.get<std::uint64_t>();
    else if (key == "gain") o.gain = value.get<double>();
    else if (key == "sigma_frac") o.sigma_frac = value.get<double>();
    else throw std::invalid_argument("instance options: unknown key '" + key + "'");
  }
  if (o.sigma < 0.0 || o.samples < 2048 || !(o.gain >= 0.0) || !(o.sigma_frac > 0.0)) {
    throw std::invalid_argument("instance options: sigma >= 0, samples >= 2048, gain >= 0, sigma_frac > 0");
  }
  return o;
}

PointIndex::PointIndex(std::vector<Vec3> points, int leaf_size) : points_(std::move(points)) {
  if (points_.empty()) return;
  if (leaf_size < 1) throw std::invalid_argument("PointIndex: leaf size must be positive");
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0);
  build(0, static_cast<int>(points_.size()), leaf_size);
}

int PointIndex::build(int begin, int end, int leaf_size) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({begin, end, -1, 0.0, -1, -1});
  if (end - begin <= leaf_size) return id;
  Vec3 lo = points_[order_[begin]];
  Vec3 hi = lo;
  for (int k = begin; k < end; ++k) {
    lo = lo.cwiseMin(points_[order_[k]]);
    hi = hi.cwiseMax(points_[order_[k]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  const int mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](int x, int y) { return points_[x](axis) < points_[y](axis); });
  const double split = points_[order_[mid]](axis);
  const int left = build(begin, mid, leaf_size);
  const int right = build(mid, end, leaf_size);
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

int PointIndex::nearest(const Vec3& q) const {
  if (points_.empty()) throw std::logic_error("PointIndex::nearest on an empty set");
  double best = std::numeric_limits<double>::infinity();
  int best_i = -1;
  // Left holds coordinates <= split, right >= split. `box2` is the squared
  // distance from q to the node's cell, updated incrementally through the
  // per-axis offsets; a cell no farther than the best is still visited so
  // that exact ties resolve to the lowest index.
  Vec3 off = Vec3::Zero();
  auto visit = [&](auto&& self, int id, double box2) -> void {
    if (box2 > best) return;
    const Node& n = nodes_[id];
    if (n.axis < 0) {
      for (int k = n.begin; k < n.end; ++k) {
        const int i = order_[k];
        const double d = (points_[i] - q).squaredNorm();
        if (d < best || (d == best && i < best_i)) {
          best = d;
          best_i = i;
        }
      }
      return;
    }
    const double diff = q(n.axis) - n.split;
    const int near = diff <= 0.0 ? n.left : n.right;
    const int far = diff <= 0.0 ? n.right : n.left;
    self(self, near, box2);
    const double saved = off(n.axis);
    const double far2 = box2 - saved * saved + diff * diff;
    off(n.axis) = diff;
    self(self, far, far2);
    off(n.axis) = saved;
  };
  visit(visit, 0, 0.0);
  return best_i;
}

int nearest_brute_force(const std::vector<Vec3>& points, const Vec3& q) {
  if (points.empty()) throw std::logic_error("nearest_brute_force on an empty set");
  int best_i = 0;
  double best = (points[0] - q).squaredNorm();
  for (std::size_t i = 1; i < points.size(); ++i) {
    const double d = (points[i] - q).squaredNorm();
    if (d < best) {
      best = d;
      best_i = static_cast<int>(i);
    }
  }
  return best_i;
}

namespace {

std::shared_ptr<const SurfaceSamples> cached_template_samples(const TemplateShape& shape, int count,
                                                              std::uint64_t seed) {
  static std::mutex mu;
  static std::map<std::tuple<std::string, int, std::uint64_t>, std::shared_ptr<const SurfaceSamples>> cache;
  const auto key = std::make_tuple(shape.to_json().dump(), count, seed);
  {
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
  }
  auto samples = std::make_shared<const SurfaceSamples>(sample_template_surface(shape, count, seed));
  std::lock_guard<std::mutex> lock(mu);
  return cache.emplace(key, samples).first->second;
}

}  // namespace

ShapeInstance::ShapeInstance(TemplateShape shape, const Latent& latent, const InstanceOptions& opts)
    : shape_(std::move(shape)), latent_(latent), opts_(opts) {
  shape_.validate();
  if (!latent_.allFinite()) throw std::invalid_argument("ShapeInstance: non-finite latent");
  field_ = DeformationField::for_template(shape_, opts_.gain, opts_.mix_seed, opts_.sigma_frac);
  template_ = cached_template_samples(shape_, opts_.samples, opts_.sample_seed);

  const auto w = field_.weights(latent_);
  const bool identity = (w.array() == 0.0).all() || opts_.gain == 0.0;
  const std::size_t m = template_->points.size();
  surface_.points.resize(m);
  surface_.normals.resize(m);

  std::shared_ptr<SurfaceSamples> own;  // private template copy if a point is resampled
  Rng resample_rng(derive_seed(opts_.sample_seed, {0xdead, static_cast<std::uint64_t>(m)}));
  for (std::size_t i = 0; i < m; ++i) {
    Vec3 tp = template_->points[i];
    Vec3 tn = template_->normals[i];
    if (identity) {
      surface_.points[i] = tp + field_.displacement(w, tp);
      surface_.normals[i] = tn;
      continue;
    }
    Mat3 j = field_.jacobian(w, tp);
    int attempts = 0;
    while (j.determinant() < 1e-8) {
      if (++attempts > 100) throw std::runtime_error("ShapeInstance: deformation Jacobian singular everywhere tried");
      if (!own) own = std::make_shared<SurfaceSamples>(*template_);
      const SurfaceSamples fresh = sample_template_surface(shape_, 1, resample_rng());
      tp = fresh.points[0];
      tn = fresh.normals[0];
      own->points[i] = tp;
      own->normals[i] = tn;
      j = field_.jacobian(w, tp);
    }
    if (attempts > 0) ++resampled_;
    surface_.points[i] = tp + field_.displacement(w, tp);
    surface_.normals[i] = j.transpose().inverse() * tn;
    surface_.normals[i].normalize();
  }
  if (own) template_ = own;

  center_ = Vec3::Zero();
  for (const Vec3& p : surface_.points) center_ += p;
  center_ /= static_cast<double>(m);
  z_min_ = std::numeric_limits<double>::infinity();
  z_max_ = -z_min_;
  for (const Vec3& p : surface_.points) {
    radius_ = std::max(radius_, (p - center_).norm());
    z_min_ = std::min(z_min_, p.z());
    z_max_ = std::max(z_max_, p.z());
  }
  index_ = PointIndex(surface_.points);
}

SdfQuery ShapeInstance::sdf(const Vec3& p) const {
  if (index_.empty()) throw std::logic_error("ShapeInstance::sdf: empty sample set");
  SdfQuery q;
  q.index = index_.nearest(p);
  const Vec3 d = p - surface_.points[q.index];
  q.normal = surface_.normals[q.index];
  q.distance = d.dot(q.normal) < 0.0 ? -d.norm() : d.norm();
  return q;
}

void ShapeInstance::export_ascii(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.precision(17);
  for (std::size_t i = 0; i < size(); ++i) {
    const Vec3& p = surface_.points[i];
    const Vec3& n = surface_.normals[i];
    out << p.x() << ' ' << p.y() << ' ' << p.z() << ' ' << n.x() << ' ' << n.y() << ' ' << n.z() << '\n';
  }
}

Latent sample_latent(std::uint64_t seed, double sigma) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("sample_latent: sigma must be >= 0");
  Rng rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Latent z;
  for (int i = 0; i < kLatentDim; ++i) z(i) = sigma * n(rng);
  return z;
}

ShapeInstance sample_instance(const TemplateShape& shape, std::uint64_t seed, const InstanceOptions& opts) {
  return ShapeInstance(shape, sample_latent(seed, opts.sigma), opts);
}

}  // namespace isagrasp
