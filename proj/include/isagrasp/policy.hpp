#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "isagrasp/grasp_transfer.hpp"
#include "isagrasp/shape_field.hpp"
#include "isagrasp/stability_oracle.hpp"

namespace isagrasp {

using MatX = Eigen::MatrixXd;
using VecX = Eigen::VectorXd;

inline constexpr int kFeatureDim = 7;
inline constexpr int kPolicyPoints = 1024;
inline constexpr int kOutputDim = 3 + 4 + kFingerJoints;

/// Hand and table directions the alignment scalars are taken against.
struct FeatureFrame {
  Vec3 facing = -Vec3::UnitZ();   // N_f, palm z
  Vec3 pointing = Vec3::UnitX();  // N_p, palm x
  Vec3 table_normal = Vec3::UnitZ();  // N_t

  /// The top-down hand of `top_down_orientation()` over a horizontal table.
  static FeatureFrame canonical() { return {}; }
  void validate() const;
};

/// Rows: x y z (centered), N_o.N_t, N_o.N_f, N_o.N_p, N_f.N_t.
struct PointFeatures {
  MatX values;  // count x 7
  Vec3 center = Vec3::Zero();  // cloud mean subtracted from the positions
  FeatureFrame frame;
  std::vector<int> source_index;  // sample index of each row
};

/// Farthest-point sampling from a seeded start; ties go to the lowest index.
std::vector<int> farthest_point_sample(const std::vector<Vec3>& points, int count, std::uint64_t seed);
std::vector<int> farthest_point_sample_serial(const std::vector<Vec3>& points, int count, std::uint64_t seed);

/// Features of the given sample rows (no subsampling).
PointFeatures features_from_samples(const SurfaceSamples& samples, const std::vector<int>& rows,
                                    const FeatureFrame& frame);

PointFeatures build_features(const SurfaceSamples& samples, const FeatureFrame& frame, int count,
                             std::uint64_t seed);
inline PointFeatures build_features(const ShapeInstance& inst, const FeatureFrame& frame,
                                    int count = kPolicyPoints, std::uint64_t seed = 0) {
  return build_features(inst.surface(), frame, count, seed);
}

struct NetShape {
  std::array<int, 3> encoder{64, 128, 256};
  int head_hidden = 128;

  bool operator==(const NetShape&) const = default;
  void validate() const;
};

/// Shared per-point MLP 7 -> e0 -> e1 -> e2 (SiLU after every layer), max
/// pool over points, then three heads e2 -> h -> {3, 4, 16} with SiLU on
/// the hidden layer. Parameters live in one flat vector; layer l holds its
/// weight (in x out, column-major) followed by its bias.
class PolicyNet {
 public:
  static constexpr int kLayers = 9;
  enum Layer { enc0, enc1, enc2, trans0, trans1, rot0, rot1, fing0, fing1 };

  struct Slice {
    std::string name;
    Eigen::Index offset = 0;
    int rows = 0;  // input width (1 for a bias)
    int cols = 0;  // output width
  };

  explicit PolicyNet(const NetShape& shape = {});
  /// Uniform(+-sqrt(6 / (in + out))) weights, zero biases, and the rotation
  /// output bias at the identity quaternion.
  static PolicyNet initialized(const NetShape& shape, std::uint64_t seed);

  const NetShape& shape() const { return shape_; }
  VecX& params() { return params_; }
  const VecX& params() const { return params_; }
  const std::vector<Slice>& slices() const { return slices_; }

  int in_width(int layer) const;
  int out_width(int layer) const;
  Eigen::Map<const MatX> weight(int layer) const;
  Eigen::Map<const VecX> bias(int layer) const;
  Eigen::Map<VecX> bias(int layer);

  /// Little-endian blob: magic, version, layer shapes, then the parameters.
  std::string serialize() const;
  static PolicyNet deserialize(const std::string& blob);
  void save(const std::filesystem::path& path) const;
  static PolicyNet load(const std::filesystem::path& path);

 private:
  NetShape shape_;
  VecX params_;
  std::vector<Slice> slices_;
};

/// Raw network outputs: translation (relative to the cloud center),
/// unnormalized quaternion (w, x, y, z), finger angles.
struct RawOutput {
  Vec3 translation = Vec3::Zero();
  Eigen::Vector4d quaternion = Eigen::Vector4d(1, 0, 0, 0);
  Eigen::Matrix<double, kFingerJoints, 1> fingers = Eigen::Matrix<double, kFingerJoints, 1>::Zero();
};

RawOutput forward(const PolicyNet& net, const MatX& features);

struct PolicyOutput {
  Vec3 translation = Vec3::Zero();  // world
  UnitQuaternion rotation;
  FingerAngles fingers{};

  Grasp grasp() const;
};

PolicyOutput predict(const PolicyNet& net, const PointFeatures& features);

struct LossTerms {
  double total = 0.0;
  double translation_l1 = 0.0;
  double rotation_geodesic = 0.0;
  double finger_l1 = 0.0;
};

/// Both grasps in the same frame.
LossTerms policy_loss(const Grasp& predicted, const Grasp& label);

/// Loss of the raw outputs against a label expressed relative to the cloud
/// center; adds d loss / d params into `grad`.
LossTerms loss_and_gradient(const PolicyNet& net, const MatX& features, const Grasp& centered_label, VecX& grad);

/// One supervised example: features and the world-frame label.
struct TrainSample {
  PointFeatures features;
  Grasp label;
};

/// Rotation by `angle` about the table normal through the cloud center,
/// applied to the positions and the centered label. The alignment scalars
/// are unchanged because normals and hand directions turn together.
void rotate_about_table(MatX& features, Grasp& centered_label, const Vec3& axis, double angle);

Grasp centered_label(const TrainSample& s);

struct BatchGradient {
  VecX grad;  // mean over the batch
  LossTerms loss;  // means over the batch
};

/// Samples `items[k]` rotated by `angles[k]`. The parallel version splits
/// the batch into fixed chunks and reduces them in order.
BatchGradient batch_gradient(const PolicyNet& net, const std::vector<TrainSample>& data,
                             const std::vector<int>& items, const std::vector<double>& angles);
BatchGradient batch_gradient_serial(const PolicyNet& net, const std::vector<TrainSample>& data,
                                    const std::vector<int>& items, const std::vector<double>& angles);

struct TrainConfig {
  int batch = 256;
  double learning_rate = 2e-4;
  int epochs = 300;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  /// Half cosine decay of the learning rate to zero over the run.
  bool cosine_schedule = false;
  /// Online augmentation angle ~ U(-a, a) about the table normal.
  double rotation_augment = 3.141592653589793;
  /// Start the output biases at the label medians (translation, fingers)
  /// and the sign-aligned mean label quaternion.
  bool init_output_bias = true;
  NetShape shape;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct TrainResult {
  PolicyNet net;
  std::vector<double> loss_curve;  // mean total loss per epoch
};

/// Seeded initialization plus the optional output-bias start; the network
/// `train` begins from.
PolicyNet initial_net(const std::vector<TrainSample>& data, const TrainConfig& cfg);

/// Adam on minibatches of a seeded shuffle. Throws std::runtime_error naming
/// the first non-finite parameter slice if training diverges.
TrainResult train(const std::vector<TrainSample>& data, const TrainConfig& cfg);

struct EvalPair {
  double mass = 0.0;
  double friction = 0.0;
};

/// The five fixed (mass, friction) evaluation pairs.
std::vector<EvalPair> default_eval_grid();

struct EvalOptions {
  std::vector<EvalPair> grid = default_eval_grid();
  OracleOptions oracle;
  std::uint64_t seed = 0;
};

struct EvalResult {
  int trials = 0;
  int successes = 0;
  std::vector<int> per_instance;  // successes out of grid.size()
  std::vector<int> per_pair;      // successes out of the instance count
  double rate() const { return trials == 0 ? 0.0 : static_cast<double>(successes) / trials; }
};

/// lift_success of grasps[i] on instances[i] for every grid pair; the
/// disturbance stream of (i, k) is derive_seed(seed, {i, k}).
EvalResult evaluate_grasps(const HandDescription& desc, const std::vector<const ShapeInstance*>& instances,
                           const std::vector<Grasp>& grasps, const EvalOptions& opts);
EvalResult evaluate_grasps_serial(const HandDescription& desc, const std::vector<const ShapeInstance*>& instances,
                                  const std::vector<Grasp>& grasps, const EvalOptions& opts);

/// Predicts one grasp per instance from canonical-frame features (seeded by
/// derive_seed(opts.seed, {i})) and evaluates it.
EvalResult evaluate(const PolicyNet& net, const HandDescription& desc,
                    const std::vector<const ShapeInstance*>& instances, const EvalOptions& opts,
                    int points = kPolicyPoints);

}  // namespace isagrasp
