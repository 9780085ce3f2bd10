#include "isagrasp/refinement.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "isagrasp/seeding.hpp"

namespace isagrasp {

namespace {

template <class T>
void read_key(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> keys, const char* what) {
  if (!j.is_object()) throw std::invalid_argument(std::string(what) + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* k : keys) known = known || key == k;
    if (!known) throw std::invalid_argument(std::string(what) + ": unknown key '" + key + "'");
  }
}

}  // namespace

void PerturbationRanges::validate() const {
  if (!(dt >= 0.0) || !(dr >= 0.0) || !(df >= 0.0)) {
    throw std::invalid_argument("perturbation: ranges must be non-negative");
  }
}

nlohmann::json PerturbationRanges::to_json() const { return {{"dt", dt}, {"dr", dr}, {"df", df}}; }

PerturbationRanges PerturbationRanges::from_json(const nlohmann::json& j) {
  reject_unknown(j, {"dt", "dr", "df"}, "perturbation");
  PerturbationRanges r;
  read_key(j, "dt", r.dt);
  read_key(j, "dr", r.dr);
  read_key(j, "df", r.df);
  r.validate();
  return r;
}

void RandomizationRanges::validate() const {
  if (!(mass_lo > 0.0) || !(mass_hi >= mass_lo)) throw std::invalid_argument("randomization: bad mass range");
  if (!(friction_lo >= 0.0) || !(friction_hi >= friction_lo)) {
    throw std::invalid_argument("randomization: bad friction range");
  }
}

nlohmann::json RandomizationRanges::to_json() const {
  return {{"mass", {mass_lo, mass_hi}}, {"friction", {friction_lo, friction_hi}}};
}

RandomizationRanges RandomizationRanges::from_json(const nlohmann::json& j) {
  reject_unknown(j, {"mass", "friction"}, "randomization");
  RandomizationRanges r;
  auto pair = [&](const char* key, double& lo, double& hi) {
    if (!j.contains(key)) return;
    const auto v = j.at(key).get<std::vector<double>>();
    if (v.size() != 2) throw std::invalid_argument(std::string("randomization: ") + key + " needs [lo, hi]");
    lo = v[0];
    hi = v[1];
  };
  pair("mass", r.mass_lo, r.mass_hi);
  pair("friction", r.friction_lo, r.friction_hi);
  r.validate();
  return r;
}

PhysicsDraw draw_physics(std::uint64_t seed, const RandomizationRanges& ranges) {
  Rng rng(derive_seed(seed, {0}));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  PhysicsDraw d;
  d.seed = seed;
  d.params.mass = ranges.mass_lo + (ranges.mass_hi - ranges.mass_lo) * unit(rng);
  d.params.friction = ranges.friction_lo + (ranges.friction_hi - ranges.friction_lo) * unit(rng);
  d.disturbance_seed = derive_seed(seed, {1});
  return d;
}

Grasp perturb(const HandDescription& desc, const Grasp& grasp, const PerturbationRanges& ranges,
              std::uint64_t seed) {
  ranges.validate();
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  Grasp out = grasp;
  for (int a = 0; a < 3; ++a) out.pregrasp.translation(a) += ranges.dt * unit(rng);
  Vec3 rv;
  for (int a = 0; a < 3; ++a) rv(a) = ranges.dr * unit(rng);
  out.pregrasp.rotation = grasp.pregrasp.rotation * UnitQuaternion::from_axis_angle(rv);
  for (int j = 0; j < kFingerJoints; ++j) out.fingers[j] += ranges.df * unit(rng);
  out.fingers = clamp_to_limits(desc, out.fingers);
  return out;
}

void RefineOptions::validate() const {
  if (draws < 0) throw std::invalid_argument("refine: draws must be non-negative");
  if (randomizations < 1) throw std::invalid_argument("refine: randomizations must be positive");
  perturbation.validate();
  randomization.validate();
  oracle.validate();
}

nlohmann::json RefineOptions::to_json() const {
  return {{"draws", draws},
          {"randomizations", randomizations},
          {"perturbation", perturbation.to_json()},
          {"randomization", randomization.to_json()},
          {"oracle", oracle.to_json()}};
}

RefineOptions RefineOptions::from_json(const nlohmann::json& j) {
  reject_unknown(j, {"draws", "randomizations", "perturbation", "randomization", "oracle"}, "refine");
  RefineOptions o;
  read_key(j, "draws", o.draws);
  read_key(j, "randomizations", o.randomizations);
  if (j.contains("perturbation")) o.perturbation = PerturbationRanges::from_json(j.at("perturbation"));
  if (j.contains("randomization")) o.randomization = RandomizationRanges::from_json(j.at("randomization"));
  if (j.contains("oracle")) o.oracle = OracleOptions::from_json(j.at("oracle"));
  o.validate();
  return o;
}

RobustnessCheck check_robust(const HandDescription& desc, const ShapeInstance& inst, const Grasp& grasp,
                             const std::vector<PhysicsDraw>& draws, const OracleOptions& oracle) {
  RobustnessCheck out;
  if (grasp.pregrasp.translation.z() < inst.z_min()) {
    out.failure = Failure::table_collision;
    return out;
  }
  const FingerClosure closed = close_fingers(desc, inst, grasp, oracle.close_steps);
  if (closed.pregrasp_in_collision) {
    out.failure = Failure::pregrasp_in_collision;
    return out;
  }
  out.contacts = closed.contacts;
  for (std::size_t r = 0; r < draws.size(); ++r) {
    const StabilityVerdict v = judge_contacts(closed.contacts, inst.center(), inst.bounding_radius(),
                                              draws[r].params, draw_disturbances(draws[r].disturbance_seed, oracle),
                                              oracle);
    if (!v.success) {
      out.failure = v.failure;
      out.failed_randomization = static_cast<int>(r);
      return out;
    }
  }
  out.success = true;
  return out;
}

std::uint64_t randomization_seed(std::uint64_t seed, int trial, int r) {
  return derive_seed(seed, {1, static_cast<std::uint64_t>(trial), static_cast<std::uint64_t>(r)});
}

std::uint64_t perturbation_seed(std::uint64_t seed, int trial) {
  return derive_seed(seed, {2, static_cast<std::uint64_t>(trial)});
}

RefineResult refine(const HandDescription& desc, const ShapeInstance& inst, const Grasp& seed_grasp,
                    std::uint64_t seed, const RefineOptions& opts) {
  opts.validate();
  RefineResult res;
  for (int trial = 0; trial <= opts.draws; ++trial) {
    const Grasp candidate =
        trial == 0 ? seed_grasp : perturb(desc, seed_grasp, opts.perturbation, perturbation_seed(seed, trial));
    std::vector<std::uint64_t> seeds;
    std::vector<PhysicsDraw> draws;
    for (int r = 0; r < opts.randomizations; ++r) {
      seeds.push_back(randomization_seed(seed, trial, r));
      draws.push_back(draw_physics(seeds.back(), opts.randomization));
    }
    const RobustnessCheck check = check_robust(desc, inst, candidate, draws, opts.oracle);
    res.trials = trial + 1;
    res.log.push_back({trial, check.success, check.failure, check.failed_randomization});
    if (check.success) {
      res.grasp = candidate;
      res.accepted_trial = trial;
      res.randomization_seeds = std::move(seeds);
      break;
    }
  }
  return res;
}

std::optional<double> RefinementReport::rate() const {
  if (attempted == 0) return std::nullopt;
  return static_cast<double>(refined) / attempted;
}

nlohmann::json RefinementReport::summary() const {
  nlohmann::json j = {{"attempted", attempted}, {"refined", refined}};
  const auto r = rate();
  j["rate"] = r ? nlohmann::json(*r) : nlohmann::json(nullptr);
  nlohmann::json failures = nlohmann::json::object();
  long trials = 0;
  for (const auto& res : results) {
    trials += res.trials;
    for (const auto& t : res.log) {
      if (!t.success) failures[to_string(t.failure)] = failures.value(to_string(t.failure), 0) + 1;
    }
  }
  j["trials"] = trials;
  j["failures"] = failures;
  return j;
}

namespace {

RefinementReport batch_impl(const HandDescription& desc, const std::vector<RefineItem>& items, std::uint64_t master,
                            std::uint64_t stage, const RefineOptions& opts, bool parallel) {
  opts.validate();
  for (const auto& it : items) {
    if (it.instance == nullptr) throw std::invalid_argument("batch_refine: item without an instance");
  }
  RefinementReport rep;
  rep.results.resize(items.size());
  const long n = static_cast<long>(items.size());
  auto one = [&](long i) {
    rep.results[i] = refine(desc, *items[i].instance, items[i].grasp,
                            derive_seed(master, {stage, static_cast<std::uint64_t>(i)}), opts);
  };
  if (parallel) {
#pragma omp parallel for schedule(dynamic, 1)
    for (long i = 0; i < n; ++i) one(i);
  } else {
    for (long i = 0; i < n; ++i) one(i);
  }
  rep.attempted = static_cast<int>(n);
  for (const auto& r : rep.results) rep.refined += r.grasp.has_value();
  return rep;
}

}  // namespace

RefinementReport batch_refine(const HandDescription& desc, const std::vector<RefineItem>& items,
                              std::uint64_t master, std::uint64_t stage, const RefineOptions& opts) {
  return batch_impl(desc, items, master, stage, opts, true);
}

RefinementReport batch_refine_serial(const HandDescription& desc, const std::vector<RefineItem>& items,
                                     std::uint64_t master, std::uint64_t stage, const RefineOptions& opts) {
  return batch_impl(desc, items, master, stage, opts, false);
}

}  // namespace isagrasp
