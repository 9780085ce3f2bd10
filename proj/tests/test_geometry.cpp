#include <cmath>
#include <numbers>
#include <stdexcept>

#include "doctest.h"
#include "isagrasp/geometry.hpp"
#include "test_support.hpp"

using namespace isagrasp;
using isagrasp::testing::random_rotation;
using isagrasp::testing::random_unit;
using isagrasp::testing::random_vec;

TEST_CASE("geodesic_distance closed-form cases") {
  std::mt19937_64 rng(1);
  const Mat3 r = random_rotation(rng).matrix();
  CHECK(geodesic_distance(r, r) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(geodesic_distance(Mat3::Identity(), rotation_about_z(std::numbers::pi / 2)) ==
        doctest::Approx(std::numbers::pi / 2).epsilon(1e-12));
  // Half turn about an arbitrary axis.
  const Vec3 axis = random_unit(rng);
  const Mat3 half = UnitQuaternion::from_axis_angle(std::numbers::pi * axis).matrix();
  CHECK(geodesic_distance(Mat3::Identity(), half) == doctest::Approx(std::numbers::pi).epsilon(1e-7));
}

TEST_CASE("geodesic_distance: matrix trace form agrees with 2 acos|q1.q2|") {
  std::mt19937_64 rng(7);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const UnitQuaternion a = random_rotation(rng);
    const UnitQuaternion b = random_rotation(rng);
    const double dot = std::min(1.0, std::abs(a.coeffs().dot(b.coeffs())));
    const double oracle = 2.0 * std::acos(dot);
    worst = std::max(worst, std::abs(geodesic_distance(a.matrix(), b.matrix()) - oracle));
    worst = std::max(worst, std::abs(geodesic_distance(a, b) - oracle));
  }
  CHECK(worst < 1e-7);
}

TEST_CASE("geodesic_distance is a left-invariant metric") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 500; ++i) {
    const Mat3 a = random_rotation(rng).matrix();
    const Mat3 b = random_rotation(rng).matrix();
    const Mat3 c = random_rotation(rng).matrix();
    const Mat3 r = random_rotation(rng).matrix();
    const double ab = geodesic_distance(a, b);
    CHECK(ab == doctest::Approx(geodesic_distance(b, a)).epsilon(1e-12));
    CHECK(ab >= 0.0);
    CHECK(ab <= std::numbers::pi);
    CHECK(ab <= geodesic_distance(a, c) + geodesic_distance(c, b) + 1e-7);
    CHECK(std::abs(geodesic_distance(r * a, r * b) - ab) < 1e-7);
  }
}

TEST_CASE("geodesic_distance rejects non-rotations") {
  Mat3 scaled = 1.1 * Mat3::Identity();
  CHECK_THROWS_AS(geodesic_distance(scaled, Mat3::Identity()), std::domain_error);
  Mat3 reflection = Mat3::Identity();
  reflection(2, 2) = -1.0;
  CHECK_THROWS_AS(geodesic_distance(Mat3::Identity(), reflection), std::domain_error);
}

TEST_CASE("UnitQuaternion canonical sign and normalization") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const Eigen::Vector4d c = Eigen::Vector4d::Random() * 5.0;
    if (c.norm() < 1e-3) continue;
    const UnitQuaternion q(c[0], c[1], c[2], c[3]);
    const UnitQuaternion neg(-c[0], -c[1], -c[2], -c[3]);
    CHECK(std::abs(q.coeffs().norm() - 1.0) < 1e-9);
    CHECK(q.w() >= 0.0);
    CHECK(q.same_rotation(neg));
    CHECK((q.coeffs() - neg.coeffs()).norm() < 1e-15);
  }
  CHECK_THROWS_AS(UnitQuaternion(0, 0, 0, 0), std::domain_error);
  CHECK_THROWS_AS(UnitQuaternion(NAN, 0, 0, 1), std::domain_error);
  // Matrix round trip.
  const UnitQuaternion q = random_rotation(rng);
  CHECK(UnitQuaternion::from_matrix(q.matrix()).same_rotation(q, 1e-12));
}

TEST_CASE("RigidTransform composition and inverse") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 100; ++i) {
    const RigidTransform a{random_vec(rng, 1.0), random_rotation(rng)};
    const RigidTransform b{random_vec(rng, 1.0), random_rotation(rng)};
    const RigidTransform c{random_vec(rng, 1.0), random_rotation(rng)};
    const Vec3 p = random_vec(rng, 1.0);
    CHECK(((a * b) * c).apply(p).isApprox((a * (b * c)).apply(p), 1e-12));
    CHECK((a * b).apply(p).isApprox(a.apply(b.apply(p)), 1e-12));
    const RigidTransform id = a.inverse() * a;
    CHECK(id.translation.norm() < 1e-9);
    CHECK(id.rotation.same_rotation(UnitQuaternion::identity()));
    CHECK((a.apply_inverse(a.apply(p)) - p).norm() < 1e-12);
  }
}

TEST_CASE("build_surface_frame examples") {
  const Frame3 f = build_surface_frame(Vec3::Zero(), Vec3::UnitZ(), Vec3::UnitX());
  CHECK(f.axes.isApprox(Mat3::Identity(), 1e-15));
  CHECK(f.origin.isZero());

  const Vec3 p(0.1, -0.2, 0.3);
  const Frame3 g = build_surface_frame(p, Vec3::UnitZ(), Vec3::UnitZ());
  CHECK(g.x().isApprox(Vec3::UnitX()));
  CHECK(g.origin == p);

  // Fallback picks the least aligned global axis: for a normal mostly along x
  // with a small z component, +z wins.
  const Vec3 n = Vec3(1.0, 0.3, 0.05).normalized();
  const Frame3 h = build_surface_frame(Vec3::Zero(), n, n);
  CHECK(std::abs(h.x().dot(Vec3::UnitZ())) > 0.9);
  CHECK_THROWS_AS(build_surface_frame(Vec3::Zero(), Vec3(0, 0, 2), Vec3::UnitX()), std::domain_error);
}

TEST_CASE("build_surface_frame is orthonormal and rotation-equivariant") {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 500; ++i) {
    const Vec3 p = random_vec(rng, 0.5);
    const Vec3 n = random_unit(rng);
    const Vec3 h = random_unit(rng);
    const Frame3 f = build_surface_frame(p, n, h);
    CHECK(is_rotation_matrix(f.axes, 1e-9));
    CHECK((f.z() - n).norm() < 1e-12);
    CHECK(f.origin == p);

    const Mat3 r = random_rotation(rng).matrix();
    const Frame3 fr = build_surface_frame(r * p, r * n, r * h);
    CHECK((fr.axes - r * f.axes).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((fr.origin - r * p).norm() < 1e-12);
  }
}

TEST_CASE("axis-angle round trip") {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 500; ++i) {
    const UnitQuaternion q = random_rotation(rng);
    const Vec3 v = q.to_axis_angle();
    CHECK(v.norm() <= std::numbers::pi + 1e-12);
    CHECK(UnitQuaternion::from_axis_angle(v).same_rotation(q, 1e-12));
    CHECK(std::abs(v.norm() - geodesic_distance(UnitQuaternion::identity(), q)) < 1e-12);
  }
  CHECK(UnitQuaternion::identity().to_axis_angle().isZero());
}
