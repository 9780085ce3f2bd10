#include "isagrasp/grasp_transfer.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace isagrasp {

nlohmann::json Grasp::to_json() const {
  const auto q = pregrasp.rotation.coeffs();
  return {{"translation", {pregrasp.translation.x(), pregrasp.translation.y(), pregrasp.translation.z()}},
          {"rotation", {q[0], q[1], q[2], q[3]}},
          {"fingers", std::vector<double>(fingers.begin(), fingers.end())}};
}

Grasp Grasp::from_json(const nlohmann::json& j) {
  const auto t = j.at("translation").get<std::vector<double>>();
  const auto q = j.at("rotation").get<std::vector<double>>();
  const auto f = j.at("fingers").get<std::vector<double>>();
  if (t.size() != 3 || q.size() != 4 || f.size() != static_cast<std::size_t>(kFingerJoints)) {
    throw std::invalid_argument("grasp: expected 3 translation, 4 rotation and 16 finger values");
  }
  Grasp g;
  g.pregrasp.translation = Vec3(t[0], t[1], t[2]);
  g.pregrasp.rotation = UnitQuaternion(q[0], q[1], q[2], q[3]);
  std::copy(f.begin(), f.end(), g.fingers.begin());
  return g;
}

Frame3 reference_frame(const SurfaceSamples& s, int i, const Vec3& hint) {
  return build_surface_frame(s.points[i], s.normals[i], hint);
}

TransferContext build_context(const SurfaceSamples& source, const Grasp& grasp, int n, const Vec3& hint) {
  const int m = static_cast<int>(source.points.size());
  if (n < 1 || n > m) throw std::invalid_argument("build_context: n must be in [1, sample count]");
  const Vec3 root = grasp.pregrasp.translation;
  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);
  auto closer = [&](int a, int b) {
    const double da = (source.points[a] - root).squaredNorm();
    const double db = (source.points[b] - root).squaredNorm();
    return da < db || (da == db && a < b);
  };
  std::partial_sort(order.begin(), order.begin() + n, order.end(), closer);
  TransferContext ctx;
  ctx.hint = hint;
  ctx.reference_indices.assign(order.begin(), order.begin() + n);
  for (int i : ctx.reference_indices) ctx.local_offsets.push_back(reference_frame(source, i, hint).to_local(root));
  return ctx;
}

Grasp transfer_grasp(const TransferContext& ctx, const SurfaceSamples& source, const SurfaceSamples& target,
                     const Grasp& grasp) {
  if (source.points.size() != target.points.size()) {
    throw std::invalid_argument("transfer_grasp: source and target must share a template sample set");
  }
  if (ctx.reference_indices.empty() || ctx.reference_indices.size() != ctx.local_offsets.size()) {
    throw std::invalid_argument("transfer_grasp: malformed context");
  }
  const int m = static_cast<int>(target.points.size());
  Vec3 sum = Vec3::Zero();
  for (std::size_t k = 0; k < ctx.reference_indices.size(); ++k) {
    const int i = ctx.reference_indices[k];
    if (i < 0 || i >= m) throw std::out_of_range("transfer_grasp: reference index out of range");
    sum += reference_frame(target, i, ctx.hint).to_world(ctx.local_offsets[k]);
  }
  Grasp out = grasp;
  out.pregrasp.translation = sum / static_cast<double>(ctx.reference_indices.size());
  return out;
}

Grasp transfer_grasp(const TransferContext& ctx, const ShapeInstance& source, const ShapeInstance& target,
                     const Grasp& grasp) {
  if (!(source.shape() == target.shape()) || source.options().sample_seed != target.options().sample_seed) {
    throw std::invalid_argument("transfer_grasp: source and target come from different templates");
  }
  return transfer_grasp(ctx, source.surface(), target.surface(), grasp);
}

}  // namespace isagrasp
