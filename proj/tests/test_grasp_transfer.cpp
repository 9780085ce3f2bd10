#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "isagrasp/grasp_transfer.hpp"
#include "test_support.hpp"

using namespace isagrasp;
using isagrasp::testing::random_rotation;
using isagrasp::testing::random_unit;

namespace {

Grasp grasp_at(const Vec3& t) {
  Grasp g;
  g.pregrasp.translation = t;
  g.pregrasp.rotation = top_down_orientation();
  for (int j = 0; j < kFingerJoints; ++j) g.fingers[j] = (j % 4 == 0) ? 0.0 : 0.3 + 0.01 * j;
  return g;
}

SurfaceSamples rotated(const SurfaceSamples& s, const Mat3& r) {
  SurfaceSamples out;
  for (std::size_t i = 0; i < s.points.size(); ++i) {
    out.points.push_back(r * s.points[i]);
    out.normals.push_back(r * s.normals[i]);
  }
  return out;
}

}  // namespace

TEST_CASE("root exactly at a sample with n = 1 gives a zero offset") {
  const auto inst = sample_instance(TemplateShape::sphere(0.045), 3);
  const Grasp g = grasp_at(inst.points()[17]);
  const auto ctx = build_context(inst, g, 1);
  REQUIRE(ctx.reference_indices.size() == 1);
  CHECK(ctx.reference_indices[0] == 17);
  CHECK(ctx.local_offsets[0].norm() == 0.0);
}

TEST_CASE("reference indices match exhaustive nearest search") {
  const auto inst = sample_instance(TemplateShape::sphere(0.045), 5);
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Vec3 root = random_unit(rng) * 0.08;
    const auto ctx = build_context(inst, grasp_at(root), 20);
    std::vector<std::pair<double, int>> all;
    for (std::size_t i = 0; i < inst.size(); ++i) all.emplace_back((inst.points()[i] - root).norm(), int(i));
    std::sort(all.begin(), all.end());
    std::vector<int> expect;
    for (int k = 0; k < 20; ++k) expect.push_back(all[k].second);
    std::vector<int> got = ctx.reference_indices;
    std::sort(expect.begin(), expect.end());
    std::sort(got.begin(), got.end());
    CHECK(got == expect);
  }
}

TEST_CASE("identity and pure translation transfer are exact") {
  std::mt19937_64 rng(21);
  for (const auto& shape : default_templates()) {
    const auto src = sample_instance(shape, 7);
    for (int n : {1, 5, 20}) {
      for (int trial = 0; trial < 5; ++trial) {
        const Grasp g = grasp_at(src.center() + random_unit(rng) * 0.07);
        const auto ctx = build_context(src, g, n);
        const Grasp same = transfer_grasp(ctx, src, src, g);
        CHECK((same.pregrasp.translation - g.pregrasp.translation).norm() < 1e-9);

        const Vec3 v = isagrasp::testing::random_vec(rng, 0.3);
        SurfaceSamples moved = src.surface();
        for (auto& p : moved.points) p += v;
        const Grasp shifted = transfer_grasp(ctx, src.surface(), moved, g);
        CHECK((shifted.pregrasp.translation - (g.pregrasp.translation + v)).norm() < 1e-9);
        CHECK(shifted.pregrasp.rotation.same_rotation(g.pregrasp.rotation, 0.0));
        CHECK(shifted.fingers == g.fingers);
      }
    }
  }
}

TEST_CASE("n = 1 equals single-frame transport") {
  const auto shape = default_templates()[3];
  const auto src = sample_instance(shape, 1);
  const auto dst = sample_instance(shape, 2);
  const Grasp g = grasp_at(Vec3(0.01, -0.02, 0.09));
  const auto ctx = build_context(src, g, 1);
  const int i = ctx.reference_indices[0];
  const Frame3 o = build_surface_frame(dst.points()[i], dst.normals()[i], Vec3::UnitZ());
  const Vec3 expect = o.origin + o.axes * ctx.local_offsets[0];
  CHECK((transfer_grasp(ctx, src, dst, g).pregrasp.translation - expect).norm() < 1e-15);
}

TEST_CASE("rigid rotation equivariance") {
  std::mt19937_64 rng(31);
  for (const auto& shape : default_templates()) {
    const auto src = sample_instance(shape, 9);
    for (int trial = 0; trial < 5; ++trial) {
      const Mat3 r = random_rotation(rng).matrix();
      const Grasp g = grasp_at(random_unit(rng) * 0.08);
      const SurfaceSamples rot = rotated(src.surface(), r);

      // offsets are unchanged when everything, hint included, is rotated
      const auto ctx = build_context(src.surface(), g, 20);
      Grasp gr = g;
      gr.pregrasp.translation = r * g.pregrasp.translation;
      const auto ctx_r = build_context(rot, gr, 20, r * Vec3::UnitZ());
      CHECK(ctx_r.reference_indices == ctx.reference_indices);
      for (std::size_t k = 0; k < ctx.local_offsets.size(); ++k) {
        CHECK((ctx_r.local_offsets[k] - ctx.local_offsets[k]).norm() < 1e-12);
      }

      TransferContext hinted = ctx;
      hinted.hint = r * Vec3::UnitZ();
      const Grasp out = transfer_grasp(hinted, src.surface(), rot, g);
      CHECK((out.pregrasp.translation - r * g.pregrasp.translation).norm() < 1e-7);
    }
  }
}

TEST_CASE("low-amplitude deformation moves the transfer by a few mean displacements") {
  // On flat faces whose normal is close to the +z hint the tangent axis of a
  // reference frame spins under small tilts, so sharp-edged templates get a
  // looser bound than the smooth ones.
  std::mt19937_64 rng(41);
  for (const auto& shape : default_templates()) {
    const bool smooth = shape.kind == TemplateKind::sphere || shape.kind == TemplateKind::superellipsoid;
    const ShapeInstance src(shape, Latent::Zero(), InstanceOptions{});
    InstanceOptions small;
    small.sigma = 0.0005;
    double worst = 0.0;
    for (int k = 0; k < 25; ++k) {
      const auto dst = sample_instance(shape, 100 + k, small);
      const Grasp g = grasp_at(src.center() + random_unit(rng) * (src.bounding_radius() + 0.03));
      const auto ctx = build_context(src, g, 20);
      const Grasp out = transfer_grasp(ctx, src, dst, g);
      double mean_disp = 0.0;
      for (std::size_t i = 0; i < dst.size(); ++i) mean_disp += (dst.points()[i] - src.points()[i]).norm();
      mean_disp /= double(dst.size());
      worst = std::max(worst, (out.pregrasp.translation - g.pregrasp.translation).norm() / mean_disp);
    }
    MESSAGE(shape.name << ": worst transfer error / mean displacement = " << worst);
    CHECK(worst <= (smooth ? 3.0 : 10.0));
  }
}

TEST_CASE("errors") {
  const auto inst = sample_instance(TemplateShape::sphere(0.045), 3);
  const Grasp g = grasp_at(Vec3(0, 0, 0.1));
  CHECK_THROWS_AS(build_context(inst, g, 0), std::invalid_argument);
  CHECK_THROWS_AS(build_context(inst, g, int(inst.size()) + 1), std::invalid_argument);
  TransferContext bad = build_context(inst, g, 3);
  bad.reference_indices[1] = 1 << 20;
  CHECK_THROWS_AS(transfer_grasp(bad, inst, inst, g), std::out_of_range);
  const auto other = sample_instance(default_templates()[1], 3);
  CHECK_THROWS_AS(transfer_grasp(build_context(inst, g, 3), inst, other, g), std::invalid_argument);
}

TEST_CASE("grasp json round trip") {
  const Grasp g = grasp_at(Vec3(0.1, -0.2, 0.3));
  const Grasp back = Grasp::from_json(nlohmann::json::parse(g.to_json().dump()));
  CHECK(back.pregrasp.translation == g.pregrasp.translation);
  CHECK(back.pregrasp.rotation.same_rotation(g.pregrasp.rotation, 1e-15));
  CHECK(back.fingers == g.fingers);
  nlohmann::json j = g.to_json();
  j["fingers"].erase(0);
  CHECK_THROWS_AS(Grasp::from_json(j), std::invalid_argument);
}
