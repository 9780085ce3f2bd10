#include "isagrasp/policy.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "isagrasp/seeding.hpp"

namespace isagrasp {

namespace {

bool is_unit(const Vec3& v) { return v.allFinite() && std::abs(v.norm() - 1.0) < 1e-6; }

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void silu_inplace(MatX& z, MatX& h) {
  h.resizeLike(z);
  for (Eigen::Index i = 0; i < z.size(); ++i) h.data()[i] = z.data()[i] * sigmoid(z.data()[i]);
}

double silu_grad(double x) {
  const double s = sigmoid(x);
  return s * (1.0 + x * (1.0 - s));
}

/// Rows are padded to a multiple of this so that every point goes through the
/// same GEMM micro-kernel and point order cannot change rounding.
constexpr Eigen::Index kRowBlock = 48;

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

Eigen::Vector4d wxyz(const UnitQuaternion& q) { return {q.w(), q.x(), q.y(), q.z()}; }

UnitQuaternion quaternion_from_raw(const Eigen::Vector4d& q) {
  if (!(q.norm() > 1e-12)) return UnitQuaternion::identity();
  return UnitQuaternion(q(0), q(1), q(2), q(3));
}

}  // namespace

// ---------------------------------------------------------------------------
// features

void FeatureFrame::validate() const {
  if (!is_unit(facing) || !is_unit(pointing) || !is_unit(table_normal)) {
    throw std::invalid_argument("features: facing, pointing and table normal must be unit vectors");
  }
}

namespace {

std::vector<int> fps_impl(const std::vector<Vec3>& points, int count, std::uint64_t seed, bool parallel) {
  const int n = static_cast<int>(points.size());
  if (count < 1 || count > n) throw std::invalid_argument("farthest_point_sample: count must be in [1, points]");
  std::vector<int> out;
  out.reserve(count);
  Rng rng(seed);
  int current = std::uniform_int_distribution<int>(0, n - 1)(rng);
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  for (int k = 0; k < count; ++k) {
    out.push_back(current);
    const Vec3 c = points[current];
    double best = -1.0;
    int best_i = -1;
    if (parallel) {
#pragma omp parallel
      {
        double lb = -1.0;
        int li = -1;
#pragma omp for schedule(static) nowait
        for (int i = 0; i < n; ++i) {
          dist[i] = std::min(dist[i], (points[i] - c).squaredNorm());
          if (dist[i] > lb) {
            lb = dist[i];
            li = i;
          }
        }
#pragma omp critical
        {
          if (li >= 0 && (lb > best || (lb == best && li < best_i))) {
            best = lb;
            best_i = li;
          }
        }
      }
    } else {
      for (int i = 0; i < n; ++i) {
        dist[i] = std::min(dist[i], (points[i] - c).squaredNorm());
        if (dist[i] > best) {
          best = dist[i];
          best_i = i;
        }
      }
    }
    current = best_i;
  }
  return out;
}

}  // namespace

std::vector<int> farthest_point_sample(const std::vector<Vec3>& points, int count, std::uint64_t seed) {
  return fps_impl(points, count, seed, true);
}

std::vector<int> farthest_point_sample_serial(const std::vector<Vec3>& points, int count, std::uint64_t seed) {
  return fps_impl(points, count, seed, false);
}

PointFeatures features_from_samples(const SurfaceSamples& samples, const std::vector<int>& rows,
                                    const FeatureFrame& frame) {
  frame.validate();
  if (rows.empty()) throw std::invalid_argument("features: no rows");
  PointFeatures f;
  f.frame = frame;
  f.source_index = rows;
  f.values.resize(static_cast<Eigen::Index>(rows.size()), kFeatureDim);
  Vec3 mean = Vec3::Zero();
  for (int r : rows) {
    if (r < 0 || r >= static_cast<int>(samples.points.size())) throw std::out_of_range("features: row out of range");
    mean += samples.points[r];
  }
  f.center = mean / static_cast<double>(rows.size());
  const double ft = frame.facing.dot(frame.table_normal);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const Vec3 p = samples.points[rows[k]] - f.center;
    const Vec3& n = samples.normals[rows[k]];
    f.values.row(static_cast<Eigen::Index>(k)) << p.x(), p.y(), p.z(), n.dot(frame.table_normal),
        n.dot(frame.facing), n.dot(frame.pointing), ft;
  }
  return f;
}

PointFeatures build_features(const SurfaceSamples& samples, const FeatureFrame& frame, int count,
                             std::uint64_t seed) {
  return features_from_samples(samples, farthest_point_sample(samples.points, count, seed), frame);
}

// ---------------------------------------------------------------------------
// network

void NetShape::validate() const {
  for (int w : encoder) {
    if (w < 1) throw std::invalid_argument("net shape: widths must be positive");
  }
  if (head_hidden < 1) throw std::invalid_argument("net shape: widths must be positive");
}

PolicyNet::PolicyNet(const NetShape& shape) : shape_(shape) {
  shape_.validate();
  static const char* names[kLayers] = {"enc0", "enc1", "enc2", "trans0", "trans1", "rot0", "rot1", "fing0", "fing1"};
  Eigen::Index offset = 0;
  for (int l = 0; l < kLayers; ++l) {
    slices_.push_back({std::string(names[l]) + ".weight", offset, in_width(l), out_width(l)});
    offset += static_cast<Eigen::Index>(in_width(l)) * out_width(l);
    slices_.push_back({std::string(names[l]) + ".bias", offset, 1, out_width(l)});
    offset += out_width(l);
  }
  params_ = VecX::Zero(offset);
}

int PolicyNet::in_width(int layer) const {
  switch (layer) {
    case enc0: return kFeatureDim;
    case enc1: return shape_.encoder[0];
    case enc2: return shape_.encoder[1];
    case trans0:
    case rot0:
    case fing0: return shape_.encoder[2];
    default: return shape_.head_hidden;
  }
}

int PolicyNet::out_width(int layer) const {
  switch (layer) {
    case enc0: return shape_.encoder[0];
    case enc1: return shape_.encoder[1];
    case enc2: return shape_.encoder[2];
    case trans1: return 3;
    case rot1: return 4;
    case fing1: return kFingerJoints;
    default: return shape_.head_hidden;
  }
}

Eigen::Map<const MatX> PolicyNet::weight(int layer) const {
  const Slice& s = slices_[2 * layer];
  return {params_.data() + s.offset, s.rows, s.cols};
}

Eigen::Map<const VecX> PolicyNet::bias(int layer) const {
  const Slice& s = slices_[2 * layer + 1];
  return {params_.data() + s.offset, s.cols};
}

Eigen::Map<VecX> PolicyNet::bias(int layer) {
  const Slice& s = slices_[2 * layer + 1];
  return {params_.data() + s.offset, s.cols};
}

PolicyNet PolicyNet::initialized(const NetShape& shape, std::uint64_t seed) {
  PolicyNet net(shape);
  Rng rng(seed);
  for (int l = 0; l < kLayers; ++l) {
    const Slice& w = net.slices_[2 * l];
    const double a = std::sqrt(6.0 / (w.rows + w.cols));
    std::uniform_real_distribution<double> u(-a, a);
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(w.rows) * w.cols; ++i) net.params_(w.offset + i) = u(rng);
  }
  net.bias(rot1)(0) = 1.0;
  return net;
}

namespace {

constexpr char kMagic[8] = {'I', 'S', 'A', 'G', 'P', 'N', 'E', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

struct Reader {
  const std::string& s;
  std::size_t pos = 0;
  std::uint64_t get(int bytes) {
    if (pos + bytes > s.size()) throw std::runtime_error("checkpoint: truncated");
    std::uint64_t v = 0;
    for (int b = 0; b < bytes; ++b) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[pos + b])) << (8 * b);
    pos += bytes;
    return v;
  }
};

}  // namespace

std::string PolicyNet::serialize() const {
  std::string out(kMagic, sizeof kMagic);
  put_u32(out, kVersion);
  put_u32(out, kLayers);
  for (int l = 0; l < kLayers; ++l) {
    put_u32(out, static_cast<std::uint32_t>(in_width(l)));
    put_u32(out, static_cast<std::uint32_t>(out_width(l)));
  }
  put_u64(out, static_cast<std::uint64_t>(params_.size()));
  for (Eigen::Index i = 0; i < params_.size(); ++i) put_u64(out, std::bit_cast<std::uint64_t>(params_(i)));
  return out;
}

PolicyNet PolicyNet::deserialize(const std::string& blob) {
  if (blob.size() < sizeof kMagic || blob.compare(0, sizeof kMagic, kMagic, sizeof kMagic) != 0) {
    throw std::runtime_error("checkpoint: bad magic");
  }
  Reader r{blob, sizeof kMagic};
  const auto version = r.get(4);
  if (version != kVersion) throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  if (r.get(4) != kLayers) throw std::runtime_error("checkpoint: unexpected layer count");
  std::array<std::uint64_t, 2 * kLayers> dims{};
  for (auto& d : dims) d = r.get(4);
  NetShape shape;
  shape.encoder = {static_cast<int>(dims[1]), static_cast<int>(dims[3]), static_cast<int>(dims[5])};
  shape.head_hidden = static_cast<int>(dims[7]);
  PolicyNet net(shape);
  for (int l = 0; l < kLayers; ++l) {
    if (dims[2 * l] != static_cast<std::uint64_t>(net.in_width(l)) ||
        dims[2 * l + 1] != static_cast<std::uint64_t>(net.out_width(l))) {
      throw std::runtime_error("checkpoint: inconsistent layer shapes");
    }
  }
  if (r.get(8) != static_cast<std::uint64_t>(net.params_.size())) {
    throw std::runtime_error("checkpoint: parameter count does not match the layer shapes");
  }
  for (Eigen::Index i = 0; i < net.params_.size(); ++i) net.params_(i) = std::bit_cast<double>(r.get(8));
  if (r.pos != blob.size()) throw std::runtime_error("checkpoint: trailing bytes");
  return net;
}

void PolicyNet::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  const std::string blob = serialize();
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
}

PolicyNet PolicyNet::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str());
}

// ---------------------------------------------------------------------------
// forward / backward

namespace {

struct Cache {
  Eigen::Index points = 0;
  MatX x;                // padded input
  std::array<MatX, 3> z;  // pre-activations
  std::array<MatX, 3> h;  // activations
  VecX g;
  std::vector<int> argmax;
  std::array<VecX, 3> head_z;
  std::array<VecX, 3> head_h;
  RawOutput out;
};

void forward_cached(const PolicyNet& net, const MatX& features, Cache& c) {
  if (features.cols() != kFeatureDim || features.rows() < 1) {
    throw std::invalid_argument("policy: features must be a non-empty count x 7 matrix");
  }
  if (!features.allFinite()) throw std::invalid_argument("policy: non-finite feature value");
  c.points = features.rows();
  const Eigen::Index padded = (c.points + kRowBlock - 1) / kRowBlock * kRowBlock;
  c.x = MatX::Zero(padded, kFeatureDim);
  c.x.topRows(c.points) = features;
  const MatX* in = &c.x;
  for (int l = 0; l < 3; ++l) {
    c.z[l].noalias() = *in * net.weight(l);
    c.z[l].rowwise() += net.bias(l).transpose();
    silu_inplace(c.z[l], c.h[l]);
    in = &c.h[l];
  }
  const MatX& top = c.h[2];
  const Eigen::Index width = top.cols();
  c.g.resize(width);
  c.argmax.assign(width, 0);
  for (Eigen::Index k = 0; k < width; ++k) {
    double best = top(0, k);
    int arg = 0;
    for (Eigen::Index p = 1; p < c.points; ++p) {
      if (top(p, k) > best) {
        best = top(p, k);
        arg = static_cast<int>(p);
      }
    }
    c.g(k) = best;
    c.argmax[k] = arg;
  }
  for (int h = 0; h < 3; ++h) {
    const int hidden = PolicyNet::trans0 + 2 * h;
    c.head_z[h] = net.weight(hidden).transpose() * c.g + net.bias(hidden);
    c.head_h[h] = c.head_z[h].unaryExpr([](double v) { return v * sigmoid(v); });
    const VecX o = net.weight(hidden + 1).transpose() * c.head_h[h] + net.bias(hidden + 1);
    if (h == 0) c.out.translation = o;
    if (h == 1) c.out.quaternion = o;
    if (h == 2) c.out.fingers = o;
  }
}

/// Slice views into a flat gradient vector.
Eigen::Map<MatX> grad_weight(const PolicyNet& net, VecX& grad, int layer) {
  const auto& s = net.slices()[2 * layer];
  return {grad.data() + s.offset, s.rows, s.cols};
}

Eigen::Map<VecX> grad_bias(const PolicyNet& net, VecX& grad, int layer) {
  const auto& s = net.slices()[2 * layer + 1];
  return {grad.data() + s.offset, s.cols};
}

struct OutputGrad {
  LossTerms loss;
  Vec3 dt;
  Eigen::Vector4d dq;
  Eigen::Matrix<double, kFingerJoints, 1> df;
};

OutputGrad output_loss(const RawOutput& o, const Grasp& label) {
  OutputGrad g;
  const Vec3 et = o.translation - label.pregrasp.translation;
  g.loss.translation_l1 = et.cwiseAbs().sum() / 3.0;
  for (int a = 0; a < 3; ++a) g.dt(a) = sign(et(a)) / 3.0;

  double fsum = 0.0;
  for (int j = 0; j < kFingerJoints; ++j) {
    const double e = o.fingers(j) - label.fingers[j];
    fsum += std::abs(e);
    g.df(j) = sign(e) / kFingerJoints;
  }
  g.loss.finger_l1 = fsum / kFingerJoints;

  const double norm = o.quaternion.norm();
  g.dq.setZero();
  if (norm > 1e-12) {
    const Eigen::Vector4d qh = o.quaternion / norm;
    const Eigen::Vector4d l = wxyz(label.pregrasp.rotation);
    const double d = qh.dot(l);
    const double ad = std::min(std::abs(d), 1.0);
    g.loss.rotation_geodesic = 2.0 * std::acos(ad);
    if (ad < 1.0) {
      // d/dd 2 acos|d|, with the slope capped near |d| = 1
      const double slope = -2.0 * sign(d) / std::sqrt(std::max(1.0 - d * d, 1e-12));
      const Eigen::Vector4d dqh = slope * l;
      g.dq = (dqh - qh * qh.dot(dqh)) / norm;
    }
  } else {
    g.loss.rotation_geodesic = std::numbers::pi;
  }
  g.loss.total = g.loss.translation_l1 + g.loss.rotation_geodesic + g.loss.finger_l1;
  return g;
}

void backward(const PolicyNet& net, const Cache& c, const OutputGrad& og, VecX& grad) {
  VecX dg = VecX::Zero(c.g.size());
  for (int h = 0; h < 3; ++h) {
    const int hidden = PolicyNet::trans0 + 2 * h;
    VecX dout;
    if (h == 0) dout = og.dt;
    if (h == 1) dout = og.dq;
    if (h == 2) dout = og.df;
    grad_weight(net, grad, hidden + 1).noalias() += c.head_h[h] * dout.transpose();
    grad_bias(net, grad, hidden + 1) += dout;
    VecX dz = net.weight(hidden + 1) * dout;
    for (Eigen::Index k = 0; k < dz.size(); ++k) dz(k) *= silu_grad(c.head_z[h](k));
    grad_weight(net, grad, hidden).noalias() += c.g * dz.transpose();
    grad_bias(net, grad, hidden) += dz;
    dg.noalias() += net.weight(hidden) * dz;
  }

  // Only the argmax rows receive gradient through the max pool.
  std::vector<int> rows(c.argmax);
  std::sort(rows.begin(), rows.end());
  rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
  const Eigen::Index s = static_cast<Eigen::Index>(rows.size());
  std::vector<Eigen::Index> slot(c.points, -1);
  for (Eigen::Index r = 0; r < s; ++r) slot[rows[r]] = r;

  MatX dz = MatX::Zero(s, c.h[2].cols());
  for (Eigen::Index k = 0; k < dz.cols(); ++k) dz(slot[c.argmax[k]], k) += dg(k);
  for (int l = 2; l >= 0; --l) {
    for (Eigen::Index r = 0; r < s; ++r) {
      for (Eigen::Index k = 0; k < dz.cols(); ++k) dz(r, k) *= silu_grad(c.z[l](rows[r], k));
    }
    const MatX& in = l == 0 ? c.x : c.h[l - 1];
    MatX in_rows(s, in.cols());
    for (Eigen::Index r = 0; r < s; ++r) in_rows.row(r) = in.row(rows[r]);
    grad_weight(net, grad, l).noalias() += in_rows.transpose() * dz;
    grad_bias(net, grad, l) += dz.colwise().sum().transpose();
    if (l > 0) dz = dz * net.weight(l).transpose();
  }
}

}  // namespace

RawOutput forward(const PolicyNet& net, const MatX& features) {
  Cache c;
  forward_cached(net, features, c);
  return c.out;
}

Grasp PolicyOutput::grasp() const {
  Grasp g;
  g.pregrasp = {translation, rotation};
  g.fingers = fingers;
  return g;
}

PolicyOutput predict(const PolicyNet& net, const PointFeatures& features) {
  const RawOutput r = forward(net, features.values);
  PolicyOutput out;
  out.translation = r.translation + features.center;
  out.rotation = quaternion_from_raw(r.quaternion);
  for (int j = 0; j < kFingerJoints; ++j) out.fingers[j] = r.fingers(j);
  return out;
}

LossTerms policy_loss(const Grasp& predicted, const Grasp& label) {
  RawOutput o;
  o.translation = predicted.pregrasp.translation;
  o.quaternion = wxyz(predicted.pregrasp.rotation);
  for (int j = 0; j < kFingerJoints; ++j) o.fingers(j) = predicted.fingers[j];
  return output_loss(o, label).loss;
}

LossTerms loss_and_gradient(const PolicyNet& net, const MatX& features, const Grasp& centered_label, VecX& grad) {
  if (grad.size() != net.params().size()) throw std::invalid_argument("loss_and_gradient: gradient size mismatch");
  Cache c;
  forward_cached(net, features, c);
  const OutputGrad og = output_loss(c.out, centered_label);
  backward(net, c, og, grad);
  return og.loss;
}

// ---------------------------------------------------------------------------
// training

void rotate_about_table(MatX& features, Grasp& centered_label, const Vec3& axis, double angle) {
  const UnitQuaternion r = UnitQuaternion::from_axis_angle(axis.normalized() * angle);
  const Mat3 m = r.matrix();
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    const Vec3 p = features.row(i).head<3>().transpose();
    features.row(i).head<3>() = (m * p).transpose();
  }
  centered_label.pregrasp.translation = m * centered_label.pregrasp.translation;
  centered_label.pregrasp.rotation = r * centered_label.pregrasp.rotation;
}

Grasp centered_label(const TrainSample& s) {
  Grasp g = s.label;
  g.pregrasp.translation -= s.features.center;
  return g;
}

namespace {

LossTerms& operator+=(LossTerms& a, const LossTerms& b) {
  a.total += b.total;
  a.translation_l1 += b.translation_l1;
  a.rotation_geodesic += b.rotation_geodesic;
  a.finger_l1 += b.finger_l1;
  return a;
}

LossTerms scaled(LossTerms a, double k) {
  a.total *= k;
  a.translation_l1 *= k;
  a.rotation_geodesic *= k;
  a.finger_l1 *= k;
  return a;
}

LossTerms sample_gradient(const PolicyNet& net, const TrainSample& s, double angle, VecX& grad) {
  Grasp label = centered_label(s);
  if (angle == 0.0) return loss_and_gradient(net, s.features.values, label, grad);
  MatX x = s.features.values;
  rotate_about_table(x, label, s.features.frame.table_normal, angle);
  return loss_and_gradient(net, x, label, grad);
}

void check_batch(const std::vector<TrainSample>& data, const std::vector<int>& items,
                 const std::vector<double>& angles) {
  if (items.empty() || items.size() != angles.size()) throw std::invalid_argument("batch_gradient: bad batch");
  for (int i : items) {
    if (i < 0 || i >= static_cast<int>(data.size())) throw std::out_of_range("batch_gradient: item out of range");
  }
}

}  // namespace

BatchGradient batch_gradient_serial(const PolicyNet& net, const std::vector<TrainSample>& data,
                                    const std::vector<int>& items, const std::vector<double>& angles) {
  check_batch(data, items, angles);
  BatchGradient out;
  out.grad = VecX::Zero(net.params().size());
  for (std::size_t k = 0; k < items.size(); ++k) out.loss += sample_gradient(net, data[items[k]], angles[k], out.grad);
  const double inv = 1.0 / static_cast<double>(items.size());
  out.grad *= inv;
  out.loss = scaled(out.loss, inv);
  return out;
}

BatchGradient batch_gradient(const PolicyNet& net, const std::vector<TrainSample>& data,
                             const std::vector<int>& items, const std::vector<double>& angles) {
  check_batch(data, items, angles);
  // Fixed chunking keeps the summation order independent of the thread count.
  const int n = static_cast<int>(items.size());
  const int chunks = std::min(n, 16);
  std::vector<VecX> grads(chunks, VecX::Zero(net.params().size()));
  std::vector<LossTerms> losses(chunks);
#pragma omp parallel for schedule(dynamic, 1)
  for (int c = 0; c < chunks; ++c) {
    const int lo = static_cast<int>(static_cast<long>(n) * c / chunks);
    const int hi = static_cast<int>(static_cast<long>(n) * (c + 1) / chunks);
    for (int k = lo; k < hi; ++k) losses[c] += sample_gradient(net, data[items[k]], angles[k], grads[c]);
  }
  BatchGradient out;
  out.grad = VecX::Zero(net.params().size());
  for (int c = 0; c < chunks; ++c) {
    out.grad += grads[c];
    out.loss += losses[c];
  }
  const double inv = 1.0 / n;
  out.grad *= inv;
  out.loss = scaled(out.loss, inv);
  return out;
}

void TrainConfig::validate() const {
  if (batch < 1) throw std::invalid_argument("train: batch must be at least 1");
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("train: learning rate must be non-negative");
  if (epochs < 0) throw std::invalid_argument("train: epochs must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("train: Adam betas must be in [0, 1)");
  }
  if (!(adam_epsilon > 0.0)) throw std::invalid_argument("train: adam_epsilon must be positive");
  if (!(rotation_augment >= 0.0)) throw std::invalid_argument("train: rotation_augment must be non-negative");
  shape.validate();
}

nlohmann::json TrainConfig::to_json() const {
  return {{"batch", batch},
          {"learning_rate", learning_rate},
          {"epochs", epochs},
          {"seed", seed},
          {"beta1", beta1},
          {"beta2", beta2},
          {"adam_epsilon", adam_epsilon},
          {"cosine_schedule", cosine_schedule},
          {"rotation_augment", rotation_augment},
          {"init_output_bias", init_output_bias},
          {"encoder", shape.encoder},
          {"head_hidden", shape.head_hidden}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("train: expected an object");
  TrainConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "batch") c.batch = value.get<int>();
    else if (key == "learning_rate") c.learning_rate = value.get<double>();
    else if (key == "epochs") c.epochs = value.get<int>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else if (key == "beta1") c.beta1 = value.get<double>();
    else if (key == "beta2") c.beta2 = value.get<double>();
    else if (key == "adam_epsilon") c.adam_epsilon = value.get<double>();
    else if (key == "cosine_schedule") c.cosine_schedule = value.get<bool>();
    else if (key == "rotation_augment") c.rotation_augment = value.get<double>();
    else if (key == "init_output_bias") c.init_output_bias = value.get<bool>();
    else if (key == "encoder") c.shape.encoder = value.get<std::array<int, 3>>();
    else if (key == "head_hidden") c.shape.head_hidden = value.get<int>();
    else throw std::invalid_argument("train: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

namespace {

double median(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + mid));
}

std::string first_non_finite(const PolicyNet& net, const VecX& v) {
  for (const auto& s : net.slices()) {
    const Eigen::Index len = static_cast<Eigen::Index>(s.rows) * s.cols;
    if (!v.segment(s.offset, len).allFinite()) return s.name;
  }
  return "";
}

}  // namespace

PolicyNet initial_net(const std::vector<TrainSample>& data, const TrainConfig& cfg) {
  PolicyNet net = PolicyNet::initialized(cfg.shape, derive_seed(cfg.seed, {0}));
  if (!cfg.init_output_bias || data.empty()) return net;
  std::vector<std::vector<double>> cols(3 + kFingerJoints);
  Eigen::Vector4d qsum = Eigen::Vector4d::Zero();
  const Eigen::Vector4d ref = wxyz(data.front().label.pregrasp.rotation);
  for (const TrainSample& s : data) {
    const Grasp g = centered_label(s);
    for (int a = 0; a < 3; ++a) cols[a].push_back(g.pregrasp.translation(a));
    for (int j = 0; j < kFingerJoints; ++j) cols[3 + j].push_back(g.fingers[j]);
    const Eigen::Vector4d q = wxyz(g.pregrasp.rotation);
    qsum += q.dot(ref) < 0.0 ? -q : q;
  }
  for (int a = 0; a < 3; ++a) net.bias(PolicyNet::trans1)(a) = median(cols[a]);
  for (int j = 0; j < kFingerJoints; ++j) net.bias(PolicyNet::fing1)(j) = median(cols[3 + j]);
  if (qsum.norm() > 1e-9) net.bias(PolicyNet::rot1) = qsum.normalized();
  return net;
}

TrainResult train(const std::vector<TrainSample>& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  TrainResult res{initial_net(data, cfg), {}};
  PolicyNet& net = res.net;
  const Eigen::Index np = net.params().size();
  VecX m = VecX::Zero(np);
  VecX v = VecX::Zero(np);
  const int n = static_cast<int>(data.size());
  const int per_epoch = (n + cfg.batch - 1) / cfg.batch;
  const long total_steps = static_cast<long>(per_epoch) * cfg.epochs;
  long step = 0;
  std::vector<int> order(n);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (int i = 0; i < n; ++i) order[i] = i;
    Rng shuffle_rng(derive_seed(cfg.seed, {1, static_cast<std::uint64_t>(epoch)}));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    for (int b = 0; b < per_epoch; ++b) {
      const int lo = b * cfg.batch;
      const int hi = std::min(n, lo + cfg.batch);
      std::vector<int> items(order.begin() + lo, order.begin() + hi);
      Rng aug(derive_seed(cfg.seed, {2, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(b)}));
      std::uniform_real_distribution<double> angle(-cfg.rotation_augment, cfg.rotation_augment);
      std::vector<double> angles(items.size(), 0.0);
      if (cfg.rotation_augment > 0.0) {
        for (double& a : angles) a = angle(aug);
      }
      const BatchGradient bg = batch_gradient(net, data, items, angles);
      if (!std::isfinite(bg.loss.total) || !bg.grad.allFinite()) {
        std::string where = first_non_finite(net, net.params());
        if (where.empty()) where = first_non_finite(net, bg.grad) + " (gradient)";
        throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) + "; first non-finite slice " +
                                 where);
      }
      epoch_loss += bg.loss.total * static_cast<double>(items.size());

      ++step;
      double lr = cfg.learning_rate;
      if (cfg.cosine_schedule) {
        lr *= 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step - 1) / total_steps));
      }
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * bg.grad;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * bg.grad.cwiseProduct(bg.grad);
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      net.params().array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.adam_epsilon);
      const std::string bad = first_non_finite(net, net.params());
      if (!bad.empty()) {
        throw std::runtime_error("train: parameters diverged at epoch " + std::to_string(epoch) +
                                 "; first non-finite slice " + bad);
      }
    }
    res.loss_curve.push_back(epoch_loss / n);
  }
  return res;
}

// ---------------------------------------------------------------------------
// evaluation

std::vector<EvalPair> default_eval_grid() { return {{0.05, 0.8}, {0.1, 0.85}, {0.15, 0.9}, {0.2, 0.95}, {0.25, 1.0}}; }

namespace {

EvalResult evaluate_impl(const HandDescription& desc, const std::vector<const ShapeInstance*>& instances,
                         const std::vector<Grasp>& grasps, const EvalOptions& opts, bool parallel) {
  if (instances.empty()) throw std::invalid_argument("evaluate: no instances");
  if (instances.size() != grasps.size()) throw std::invalid_argument("evaluate: one grasp per instance expected");
  if (opts.grid.empty()) throw std::invalid_argument("evaluate: empty mass/friction grid");
  for (const ShapeInstance* inst : instances) {
    if (inst == nullptr) throw std::invalid_argument("evaluate: null instance");
  }
  const int n = static_cast<int>(instances.size());
  EvalResult res;
  res.per_instance.assign(n, 0);
  const int pairs = static_cast<int>(opts.grid.size());
  std::vector<char> hit(static_cast<std::size_t>(n) * pairs, 0);
  auto one = [&](int i) {
    int ok = 0;
    for (int k = 0; k < pairs; ++k) {
      PhysicsParams p;
      p.mass = opts.grid[k].mass;
      p.friction = opts.grid[k].friction;
      const std::uint64_t seed =
          derive_seed(opts.seed, {static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(k)});
      char& h = hit[static_cast<std::size_t>(i) * pairs + k];
      h = lift_success(desc, *instances[i], grasps[i], p, seed, opts.oracle).success;
      ok += h;
    }
    res.per_instance[i] = ok;
  };
  if (parallel) {
#pragma omp parallel for schedule(dynamic, 1)
    for (int i = 0; i < n; ++i) one(i);
  } else {
    for (int i = 0; i < n; ++i) one(i);
  }
  res.trials = n * pairs;
  for (int s : res.per_instance) res.successes += s;
  res.per_pair.assign(pairs, 0);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < pairs; ++k) res.per_pair[k] += hit[static_cast<std::size_t>(i) * pairs + k];
  }
  return res;
}

}  // namespace

EvalResult evaluate_grasps(const HandDescription& desc, const std::vector<const ShapeInstance*>& instances,
                           const std::vector<Grasp>& grasps, const EvalOptions& opts) {
  return evaluate_impl(desc, instances, grasps, opts, true);
}

EvalResult evaluate_grasps_serial(const HandDescription& desc, const std::vector<const ShapeInstance*>& instances,
                                  const std::vector<Grasp>& grasps, const EvalOptions& opts) {
  return evaluate_impl(desc, instances, grasps, opts, false);
}

EvalResult evaluate(const PolicyNet& net, const HandDescription& desc,
                    const std::vector<const ShapeInstance*>& instances, const EvalOptions& opts, int points) {
  std::vector<Grasp> grasps(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (instances[i] == nullptr) throw std::invalid_argument("evaluate: null instance");
    const PointFeatures f = build_features(*instances[i], FeatureFrame::canonical(), points, derive_seed(opts.seed, {i}));
    grasps[i] = predict(net, f).grasp();
  }
  return evaluate_grasps(desc, instances, grasps, opts);
}

}  // namespace isagrasp
