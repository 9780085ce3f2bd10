#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "isagrasp/baselines.hpp"
#include "isagrasp/demo_synth.hpp"
#include "isagrasp/policy.hpp"
#include "isagrasp/refinement.hpp"

namespace isagrasp {

/// Bad or unreadable configuration; the CLI maps it to exit code 2.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Any later failure (missing input, empty result, I/O); exit code 3.
struct StageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DemoConfig {
  int per_template = 3;
  /// Demo d of a template uses styles[d % size].
  std::vector<GraspStyle> styles{GraspStyle::pinch_top};
  double jitter = 0.002;      // m
  double palm_offset = 0.05;  // m
  /// Fixed demo yaw in rad; unset draws it per demo.
  std::optional<double> yaw = 0.0;
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  HandDescription hand = HandDescription::default_hand();
  std::vector<TemplateShape> templates = default_templates();
  DemoConfig demos;
  RetargetWeights retarget_weights;
  RetargetOptions retarget;
  InstanceOptions instance;  // sigma is the latent scale
  int augmentations = 20;    // deformed instances per source grasp
  int neighbors = 20;        // N reference points of the transfer
  RefineOptions refine;
  int feature_points = kPolicyPoints;
  /// `train.seed` is replaced by a seed derived from `seed`.
  TrainConfig train;
  int held_out_per_template = 10;
  std::vector<EvalPair> eval_grid = default_eval_grid();
  BaselineConfig baselines;

  void validate() const;
  nlohmann::json to_json() const;
  /// Strict: unknown keys and invalid values throw ConfigError.
  static PipelineConfig from_json(const nlohmann::json& j);
  static PipelineConfig load(const std::filesystem::path& path);
};

/// Enough to rebuild the instance bitwise.
struct InstanceRef {
  TemplateShape shape;
  Latent latent = Latent::Zero();
  InstanceOptions options;
  std::optional<std::uint64_t> latent_seed;  // unset for the undeformed source

  ShapeInstance build() const;
};

struct Provenance {
  int template_index = 0;
  int demo = 0;
  GraspStyle style = GraspStyle::pinch_top;
  int augmentation = -1;  // -1 for the source object
  std::uint64_t refine_seed = 0;
  int accepted_trial = 0;
  std::vector<std::uint64_t> randomization_seeds;
  std::uint64_t feature_seed = 0;
};

struct DatasetRecord {
  int id = 0;
  InstanceRef instance;
  PointFeatures features;
  Grasp label;
  Provenance provenance;

  /// Features go out as base64 of little-endian doubles, row-major.
  nlohmann::json to_json() const;
  static DatasetRecord from_json(const nlohmann::json& j);
};

std::string base64_encode(const std::string& bytes);
std::string base64_decode(const std::string& text);

void write_dataset(const std::filesystem::path& path, const std::vector<DatasetRecord>& records);
std::vector<DatasetRecord> read_dataset(const std::filesystem::path& path);

struct StageCounts {
  int demos_requested = 0;
  int demos_synthesized = 0;  // style feasible on the template
  int sources_refined = 0;
  int transfers_attempted = 0;
  int transfers_refined = 0;
  int records_written = 0;

  nlohmann::json to_json() const;
};

struct GenerateResult {
  std::vector<DatasetRecord> records;
  StageCounts counts;
  RefinementReport source_report;
  RefinementReport transfer_report;
  std::vector<std::string> skipped;  // infeasible demos with the reason
};

using Logger = std::function<void(const std::string&)>;

/// Demos -> retarget -> refine on the undeformed template -> transfer to
/// `augmentations` deformed instances -> refine -> features. Records are
/// ordered by (template, demo, augmentation) with sources first.
GenerateResult generate_dataset(const PipelineConfig& cfg, const Logger& log = {});

/// Reasons a record fails re-verification; empty when it certifies.
std::vector<std::string> verify_record(const DatasetRecord& r, const PipelineConfig& cfg);

/// Refinement of transferred grasps versus random grasps on the same
/// deformed instances (random grasps from the Random baseline generator).
struct InitComparison {
  RefinementReport transferred;
  RefinementReport random;
};

InitComparison compare_initializations(const PipelineConfig& cfg, const Logger& log = {});

std::vector<TrainSample> training_samples(const std::vector<DatasetRecord>& records);
TrainResult train_policy(const PipelineConfig& cfg, const std::vector<DatasetRecord>& records);

/// Fresh latents of the configured templates.
std::vector<ShapeInstance> held_out_instances(const PipelineConfig& cfg);

struct EvalRow {
  std::string method;
  int successes = 0;
  int trials = 0;
  std::vector<int> per_pair;  // successes at each grid pair
  double rate() const { return trials == 0 ? 0.0 : static_cast<double>(successes) / trials; }
};

struct EvalReport {
  std::vector<EvalRow> rows;  // policy (when given), random, heuristic
  int instances = 0;
  std::vector<EvalPair> grid;

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
  const EvalRow& row(const std::string& method) const;
};

/// Throws StageError for an empty held-out set.
EvalReport run_eval(const PipelineConfig& cfg, const PolicyNet* net, const std::vector<ShapeInstance>& held_out);
inline EvalReport run_eval(const PipelineConfig& cfg, const PolicyNet* net) {
  return run_eval(cfg, net, held_out_instances(cfg));
}

/// Markdown table, one row per method and one column per (mass, friction).
std::string render_report(const EvalReport& report);

}  // namespace isagrasp
