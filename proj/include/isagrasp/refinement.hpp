#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "isagrasp/grasp_transfer.hpp"
#include "isagrasp/stability_oracle.hpp"

namespace isagrasp {

struct PerturbationRanges {
  double dt = 0.02;  // m, per translation axis
  double dr = 0.5;   // rad, per axis-angle component
  double df = 0.1;   // rad, per finger joint

  void validate() const;
  nlohmann::json to_json() const;
  static PerturbationRanges from_json(const nlohmann::json& j);
};

/// Mass and friction are drawn uniformly from these intervals.
struct RandomizationRanges {
  double mass_lo = 0.05;
  double mass_hi = 0.25;
  double friction_lo = 0.7;
  double friction_hi = 1.0;

  void validate() const;
  nlohmann::json to_json() const;
  static RandomizationRanges from_json(const nlohmann::json& j);
};

/// One physics randomization, fully determined by its seed.
struct PhysicsDraw {
  std::uint64_t seed = 0;
  PhysicsParams params;
  std::uint64_t disturbance_seed = 0;
};

PhysicsDraw draw_physics(std::uint64_t seed, const RandomizationRanges& ranges);

/// Translation += U(-dt, dt)^3; rotation <- rotation * exp(U(-dr, dr)^3);
/// each joint += U(-df, df), clamped to the hand limits.
Grasp perturb(const HandDescription& desc, const Grasp& grasp, const PerturbationRanges& ranges,
              std::uint64_t seed);

struct RefineOptions {
  int draws = 50;
  int randomizations = 10;
  PerturbationRanges perturbation;
  RandomizationRanges randomization;
  OracleOptions oracle;

  void validate() const;
  nlohmann::json to_json() const;
  static RefineOptions from_json(const nlohmann::json& j);
};

/// Evaluates a fixed grasp against every physics draw, stopping at the first
/// failure. Equivalent to lift_success per draw, closing the fingers once.
struct RobustnessCheck {
  bool success = false;
  Failure failure = Failure::none;
  std::optional<int> failed_randomization;
  std::vector<Contact> contacts;
};

RobustnessCheck check_robust(const HandDescription& desc, const ShapeInstance& inst, const Grasp& grasp,
                             const std::vector<PhysicsDraw>& draws, const OracleOptions& oracle);

struct TrialLog {
  int trial = 0;  // 0 is the seed grasp itself
  bool success = false;
  Failure failure = Failure::none;
  std::optional<int> failed_randomization;
};

struct RefineResult {
  std::optional<Grasp> grasp;
  int trials = 0;              // candidates evaluated
  int accepted_trial = -1;
  std::vector<std::uint64_t> randomization_seeds;  // of the accepted candidate
  std::vector<TrialLog> log;
};

/// Seed of the physics randomization r for candidate `trial`.
std::uint64_t randomization_seed(std::uint64_t seed, int trial, int r);
/// Seed of the perturbation producing candidate `trial` (>= 1).
std::uint64_t perturbation_seed(std::uint64_t seed, int trial);

/// Rejection sampling: the seed grasp first, then up to `draws`
/// perturbations of it; the first candidate that survives every physics
/// randomization is returned.
RefineResult refine(const HandDescription& desc, const ShapeInstance& inst, const Grasp& seed_grasp,
                    std::uint64_t seed, const RefineOptions& opts = {});

struct RefineItem {
  const ShapeInstance* instance = nullptr;
  Grasp grasp;
};

struct RefinementReport {
  int attempted = 0;
  int refined = 0;
  std::vector<RefineResult> results;

  /// refined / attempted; empty when nothing was attempted.
  std::optional<double> rate() const;
  nlohmann::json summary() const;
};

/// Item i uses derive_seed(master, {stage, i}). Parallel over items; the
/// report does not depend on the thread count.
RefinementReport batch_refine(const HandDescription& desc, const std::vector<RefineItem>& items,
                              std::uint64_t master, std::uint64_t stage, const RefineOptions& opts = {});
RefinementReport batch_refine_serial(const HandDescription& desc, const std::vector<RefineItem>& items,
                                     std::uint64_t master, std::uint64_t stage, const RefineOptions& opts = {});

}  // namespace isagrasp
