#include <map>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "isagrasp/demo_synth.hpp"
#include "isagrasp/refinement.hpp"
#include "isagrasp/seeding.hpp"
#include "test_support.hpp"

using namespace isagrasp;
using isagrasp::testing::ks_uniform_pvalue;

namespace {

const HandDescription& hand() { return HandDescription::default_hand(); }

ShapeInstance flat_instance(const TemplateShape& s) {
  InstanceOptions o;
  o.sigma = 0.0;
  return sample_instance(s, 0, o);
}

Grasp mid_grasp() {
  Grasp g;
  g.pregrasp = {Vec3(0.01, -0.02, 0.1), top_down_orientation()};
  for (int j = 0; j < kFingerJoints; ++j) {
    const JointLimit l = hand().limit(j);
    g.fingers[j] = 0.5 * (l.lo + l.hi);
  }
  return g;
}

/// Retargeted sigma-0 demo; these seeds are accepted at trial 0 on the
/// undeformed template under the default options.
Grasp demo_grasp(const TemplateShape& s, GraspStyle style, std::uint64_t seed) {
  const SyntheticDemo d = synth_demo({s, style, 0.0}, seed);
  return Grasp::from_pose(retarget(hand(), d.record, RetargetWeights{}).pose);
}

Vec3 rotation_vector(const UnitQuaternion& q) {
  const Eigen::AngleAxisd aa(q.matrix());
  return aa.angle() * aa.axis();
}

}  // namespace

TEST_CASE("zero ranges leave the grasp unchanged") {
  const Grasp g = mid_grasp();
  const Grasp p = perturb(hand(), g, {0.0, 0.0, 0.0}, 3);
  CHECK(p.pregrasp.translation == g.pregrasp.translation);
  CHECK(p.pregrasp.rotation.coeffs() == g.pregrasp.rotation.coeffs());
  CHECK(p.fingers == g.fingers);
}

TEST_CASE("perturbations are uniform on their ranges") {
  const Grasp g = mid_grasp();
  const PerturbationRanges r;
  std::vector<std::vector<double>> comps(7);
  for (std::uint64_t s = 0; s < 10000; ++s) {
    const Grasp p = perturb(hand(), g, r, s);
    const Vec3 dt = p.pregrasp.translation - g.pregrasp.translation;
    const Vec3 dr = rotation_vector(g.pregrasp.rotation.inverse() * p.pregrasp.rotation);
    for (int a = 0; a < 3; ++a) {
      comps[a].push_back(dt(a));
      comps[3 + a].push_back(dr(a));
    }
    comps[6].push_back(p.fingers[5] - g.fingers[5]);
  }
  for (int a = 0; a < 3; ++a) {
    CAPTURE(a);
    CHECK(ks_uniform_pvalue(comps[a], -r.dt, r.dt) > 0.01);
    CHECK(ks_uniform_pvalue(comps[3 + a], -r.dr, r.dr) > 0.01);
  }
  CHECK(ks_uniform_pvalue(comps[6], -r.df, r.df) > 0.01);
}

TEST_CASE("default ranges move all 22 dimensions and respect joint limits") {
  const Grasp g = mid_grasp();
  for (std::uint64_t s = 0; s < 50; ++s) {
    const Grasp p = perturb(hand(), g, {}, s);
    for (int a = 0; a < 3; ++a) CHECK(p.pregrasp.translation(a) != g.pregrasp.translation(a));
    const Vec3 dr = rotation_vector(g.pregrasp.rotation.inverse() * p.pregrasp.rotation);
    for (int a = 0; a < 3; ++a) CHECK(dr(a) != 0.0);
    for (int j = 0; j < kFingerJoints; ++j) CHECK(p.fingers[j] != g.fingers[j]);
  }
  Grasp top = g;
  for (int j = 0; j < kFingerJoints; ++j) top.fingers[j] = hand().limit(j).hi;
  for (std::uint64_t s = 0; s < 50; ++s) {
    const Grasp p = perturb(hand(), top, {}, s);
    for (int j = 0; j < kFingerJoints; ++j) CHECK(p.fingers[j] <= hand().limit(j).hi);
  }
  CHECK(perturb(hand(), g, {}, 9).fingers == perturb(hand(), g, {}, 9).fingers);
}

TEST_CASE("physics draws are uniform over the randomization ranges") {
  const RandomizationRanges r;
  std::vector<double> mass, mu;
  for (std::uint64_t s = 0; s < 5000; ++s) {
    const PhysicsDraw d = draw_physics(s, r);
    CHECK(d.seed == s);
    mass.push_back(d.params.mass);
    mu.push_back(d.params.friction);
  }
  CHECK(ks_uniform_pvalue(mass, 0.05, 0.25) > 0.01);
  CHECK(ks_uniform_pvalue(mu, 0.7, 1.0) > 0.01);
}

TEST_CASE("options round trip and reject unknown keys") {
  RefineOptions o;
  o.draws = 7;
  o.randomization.mass_hi = 0.2;
  o.perturbation.dr = 0.3;
  const RefineOptions back = RefineOptions::from_json(nlohmann::json::parse(o.to_json().dump()));
  CHECK(back.to_json() == o.to_json());
  CHECK(o.to_json()["randomization"]["mass"] == nlohmann::json::array({0.05, 0.2}));
  CHECK_THROWS_AS(RefineOptions::from_json({{"trials", 3}}), std::invalid_argument);
  CHECK_THROWS_AS(PerturbationRanges::from_json({{"dt", -1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(RandomizationRanges::from_json({{"mass", {0.3, 0.1}}}), std::invalid_argument);
  RefineOptions bad;
  bad.randomizations = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("a robust seed grasp is returned unchanged at trial 0") {
  const TemplateShape ball = default_templates()[0];
  const ShapeInstance inst = flat_instance(ball);
  const Grasp g = demo_grasp(ball, GraspStyle::pinch_top, 0);
  const RefineResult r = refine(hand(), inst, g, 7);
  REQUIRE(r.grasp.has_value());
  CHECK(r.accepted_trial == 0);
  CHECK(r.trials == 1);
  CHECK(r.grasp->to_json() == g.to_json());
  CHECK(r.randomization_seeds.size() == 10);
}

TEST_CASE("an unreachable object is never refined") {
  const TemplateShape ball = default_templates()[0];
  const ShapeInstance inst = flat_instance(ball);
  Grasp g = demo_grasp(ball, GraspStyle::pinch_top, 0);
  g.pregrasp.translation += Vec3(1.0, 0.0, 0.0);
  const RefineResult r = refine(hand(), inst, g, 7);
  CHECK_FALSE(r.grasp.has_value());
  CHECK(r.accepted_trial == -1);
  CHECK(r.trials == 51);
  REQUIRE(r.log.size() == 51);
  for (const TrialLog& t : r.log) CHECK(t.failure == Failure::too_few_contacts);
}

TEST_CASE("accepted grasps replay through lift_success") {
  int accepted = 0;
  for (const TemplateShape& s : default_templates()) {
    const ShapeInstance src = flat_instance(s);
    const Grasp g = demo_grasp(s, GraspStyle::tripod, 1);
    for (std::uint64_t k = 0; k < 3; ++k) {
      const ShapeInstance inst = sample_instance(s, 100 + k);
      const Grasp t = transfer_grasp(build_context(src, g), src, inst, g);
      const RefineResult r = refine(hand(), inst, t, k);
      if (!r.grasp) continue;
      ++accepted;
      REQUIRE(r.randomization_seeds.size() == 10);
      for (std::uint64_t seed : r.randomization_seeds) {
        const PhysicsDraw d = draw_physics(seed, RandomizationRanges{});
        const StabilityVerdict v = lift_success(hand(), inst, *r.grasp, d.params, d.disturbance_seed);
        CHECK(v.success);
        CHECK(v.epsilon_quality > 0.0);
      }
      // the accepted candidate is the perturbation named by its trial
      if (r.accepted_trial > 0) {
        const Grasp again = perturb(hand(), t, {}, perturbation_seed(k, r.accepted_trial));
        CHECK(again.to_json() == r.grasp->to_json());
      }
    }
  }
  CHECK(accepted >= 6);
}

TEST_CASE("acceptance is monotone non-increasing in the number of randomizations") {
  std::vector<ShapeInstance> instances;
  std::vector<Grasp> seeds;
  for (const TemplateShape& s : default_templates()) {
    const ShapeInstance src = flat_instance(s);
    const Grasp g = demo_grasp(s, GraspStyle::wrap_side, 2);
    for (std::uint64_t k = 0; k < 3; ++k) {
      instances.push_back(sample_instance(s, 200 + k));
      seeds.push_back(transfer_grasp(build_context(src, g), src, instances.back(), g));
    }
  }
  int previous = static_cast<int>(instances.size()) + 1;
  std::vector<int> previous_trial(instances.size(), 0);
  for (int randomizations : {1, 3, 10, 20}) {
    RefineOptions o;
    o.draws = 15;
    o.randomizations = randomizations;
    int count = 0;
    for (std::size_t i = 0; i < instances.size(); ++i) {
      const RefineResult r = refine(hand(), instances[i], seeds[i], i, o);
      if (r.grasp) {
        ++count;
        // a stricter test can only move acceptance later
        CHECK(r.accepted_trial >= previous_trial[i]);
        previous_trial[i] = r.accepted_trial;
      } else {
        previous_trial[i] = o.draws + 1;
      }
    }
    CAPTURE(randomizations);
    CHECK(count <= previous);
    previous = count;
  }
}

TEST_CASE("batch refinement: empty input, all-robust input, log replay, determinism") {
  RefinementReport empty = batch_refine(hand(), {}, 1, 4);
  CHECK(empty.attempted == 0);
  CHECK_FALSE(empty.rate().has_value());
  CHECK(empty.summary()["rate"].is_null());

  const TemplateShape ball = default_templates()[0];
  const ShapeInstance flat = flat_instance(ball);
  const Grasp robust = demo_grasp(ball, GraspStyle::pinch_top, 0);
  {
    // light, grippy object and no palm disturbance: the seed grasp holds for any draw
    RefineOptions easy;
    easy.randomization = {0.05, 0.05, 1.0, 1.0};
    easy.oracle.perturb_sigma = 0.0;
    std::vector<RefineItem> items(5, RefineItem{&flat, robust});
    const RefinementReport rep = batch_refine(hand(), items, 3, 4, easy);
    CHECK(rep.attempted == 5);
    CHECK(rep.rate() == 1.0);
    for (const RefineResult& r : rep.results) CHECK(r.accepted_trial == 0);
  }

  std::vector<ShapeInstance> instances;
  std::vector<Grasp> grasps;
  for (const TemplateShape& s : default_templates()) {
    const ShapeInstance src = flat_instance(s);
    const Grasp g = demo_grasp(s, GraspStyle::pinch_top, 1);
    for (std::uint64_t k = 0; k < 2; ++k) {
      instances.push_back(sample_instance(s, 300 + k));
      grasps.push_back(transfer_grasp(build_context(src, g), src, instances.back(), g));
    }
  }
  instances.push_back(flat);
  Grasp far = robust;
  far.pregrasp.translation.x() += 1.0;
  grasps.push_back(far);
  std::vector<RefineItem> items;
  for (std::size_t i = 0; i < instances.size(); ++i) items.push_back({&instances[i], grasps[i]});

  RefineOptions o;
  o.draws = 10;
  const RefinementReport par = batch_refine(hand(), items, 11, 4, o);
  const RefinementReport ser = batch_refine_serial(hand(), items, 11, 4, o);
  CHECK(par.summary() == ser.summary());
  REQUIRE(par.results.size() == items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    CHECK(par.results[i].accepted_trial == ser.results[i].accepted_trial);
    CHECK(par.results[i].randomization_seeds == ser.results[i].randomization_seeds);
    // item i runs refine with its counter-derived seed
    const RefineResult direct = refine(hand(), instances[i], grasps[i], derive_seed(11, {4, i}), o);
    CHECK(direct.accepted_trial == par.results[i].accepted_trial);
  }
  const RefinementReport again = batch_refine(hand(), items, 11, 4, o);
  CHECK(again.summary() == par.summary());

  // hand count from the trial logs
  int refined = 0;
  std::map<std::string, int> failures;
  for (const RefineResult& r : par.results) {
    REQUIRE_FALSE(r.log.empty());
    refined += r.log.back().success;
    for (const TrialLog& t : r.log) {
      if (!t.success) ++failures[to_string(t.failure)];
    }
    CHECK(r.log.size() == static_cast<std::size_t>(r.trials));
  }
  CHECK(par.attempted == static_cast<int>(items.size()));
  CHECK(par.refined == refined);
  CHECK(*par.rate() == doctest::Approx(static_cast<double>(refined) / items.size()));
  for (const auto& [name, count] : failures) CHECK(par.summary()["failures"][name] == count);
  CHECK_FALSE(par.results.back().grasp.has_value());
  CHECK(par.refined > 0);
}
