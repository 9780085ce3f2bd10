// isagrasp command-line driver. Every subcommand takes --config and --seed;
// the seed overrides the config's master seed.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "isagrasp/pipeline.hpp"
#include "isagrasp/seeding.hpp"

using namespace isagrasp;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kStageError = 3;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "pipeline config (JSON); built-in defaults when omitted");
  sub->add_option("--seed", c.seed, "master seed, overrides the config");
}

PipelineConfig load_config(const Common& c) {
  PipelineConfig cfg = c.config.empty() ? PipelineConfig{} : PipelineConfig::load(c.config);
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  return cfg;
}

void log_line(const std::string& msg) { std::cerr << "[isagrasp] " << msg << '\n'; }

void write_json(const std::string& path, const json& j) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream out(path);
  if (!out) throw StageError("cannot write " + path);
  out << j.dump(2) << '\n';
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw StageError("cannot read " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw StageError(path + ": " + e.what());
  }
}

int template_index(const PipelineConfig& cfg, const std::string& name) {
  for (int t = 0; t < static_cast<int>(cfg.templates.size()); ++t) {
    if (cfg.templates[t].name == name) return t;
  }
  throw ConfigError("no template named '" + name + "' in the config");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ISAGrasp-style grasp dataset augmentation"};
  app.require_subcommand(1);

  Common c;
  std::string out_path, in_path, checkpoint, template_name, style_name = "pinch-top", kind;
  int demo_index = 0;
  int count = 1;
  bool verify = false;

  auto* demo = app.add_subcommand("demo-synth", "synthesize one demonstration on a template");
  add_common(demo, c);
  demo->add_option("--template", template_name, "template name")->required();
  demo->add_option("--style", style_name, "pinch-top | wrap-side | tripod");
  demo->add_option("--demo", demo_index, "demo index (seed stream)");
  demo->add_option("--out", out_path, "output JSON (stdout when omitted)");

  auto* ret = app.add_subcommand("retarget", "retarget a demonstration onto the robot hand");
  add_common(ret, c);
  ret->add_option("--demo", in_path, "demo JSON from demo-synth")->required();
  ret->add_option("--out", out_path, "output grasp JSON");

  auto* aug = app.add_subcommand("augment", "sample deformed instances of a template");
  add_common(aug, c);
  aug->add_option("--template", template_name, "template name")->required();
  aug->add_option("--count", count, "number of instances");
  aug->add_option("--out-dir", out_path, "directory for point files and instance references")->required();

  auto* ref = app.add_subcommand("refine", "refinement rate of transferred versus random initial grasps");
  add_common(ref, c);
  ref->add_option("--out", out_path, "output JSON summary");

  auto* gen = app.add_subcommand("generate", "run the full pipeline and write the dataset");
  add_common(gen, c);
  gen->add_option("--out", out_path, "dataset file (JSON lines)")->required();
  gen->add_flag("--verify", verify, "re-verify every record after writing");

  auto* tr = app.add_subcommand("train", "train the policy on a dataset");
  add_common(tr, c);
  tr->add_option("--dataset", in_path, "dataset file")->required();
  tr->add_option("--out", checkpoint, "checkpoint path")->required();

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint and the baselines on held-out instances");
  add_common(ev, c);
  ev->add_option("--checkpoint", checkpoint, "policy checkpoint; baselines only when omitted");
  ev->add_option("--out", out_path, "report JSON");

  auto* rep = app.add_subcommand("report", "render an evaluation report as a table");
  add_common(rep, c);
  rep->add_option("--input", in_path, "report JSON from eval")->required();

  auto* base = app.add_subcommand("baseline", "evaluate one baseline on held-out instances");
  add_common(base, c);
  base->add_option("--kind", kind, "random | heuristic")->required()->check(CLI::IsMember({"random", "heuristic"}));
  base->add_option("--out", out_path, "report JSON");

  auto* show = app.add_subcommand("config", "print the effective configuration");
  add_common(show, c);
  show->add_option("--out", out_path, "output JSON (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  try {
    const PipelineConfig cfg = load_config(c);

    if (*show) {
      write_json(out_path, cfg.to_json());
    } else if (*demo) {
      const int t = template_index(cfg, template_name);
      DemoSpec spec{cfg.templates[t], grasp_style_from_string(style_name), cfg.demos.jitter, cfg.demos.palm_offset,
                    cfg.demos.yaw};
      const SyntheticDemo d = synth_demo(
          spec, derive_seed(cfg.seed, {stage_id(Stage::demo), static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(demo_index)}),
          cfg.hand);
      write_json(out_path, {{"record", d.record.to_json()}, {"template", spec.shape.to_json()}, {"style", style_name},
                            {"yaw", d.yaw}, {"fit_residual", d.fit_residual}});
    } else if (*ret) {
      const json j = read_json(in_path);
      const DemoRecord record = DemoRecord::from_json(j.contains("record") ? j.at("record") : j);
      RetargetOptions ro = cfg.retarget;
      ro.seed = derive_seed(cfg.seed, {stage_id(Stage::retarget)});
      const RetargetResult r = retarget(cfg.hand, record, cfg.retarget_weights, ro);
      write_json(out_path, {{"grasp", Grasp::from_pose(r.pose).to_json()},
                            {"objective", r.objective},
                            {"terms", r.terms},
                            {"converged", r.converged}});
    } else if (*aug) {
      const int t = template_index(cfg, template_name);
      std::filesystem::create_directories(out_path);
      json refs = json::array();
      for (int i = 0; i < count; ++i) {
        const std::uint64_t s =
            derive_seed(cfg.seed, {stage_id(Stage::instance), static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(i)});
        const ShapeInstance inst = sample_instance(cfg.templates[t], s, cfg.instance);
        const std::string file = template_name + "_" + std::to_string(i) + ".xyz";
        inst.export_ascii((std::filesystem::path(out_path) / file).string());
        refs.push_back({{"file", file}, {"latent_seed", s}, {"resampled", inst.resampled()}});
      }
      write_json((std::filesystem::path(out_path) / "instances.json").string(),
                 {{"template", cfg.templates[t].to_json()}, {"options", cfg.instance.to_json()}, {"instances", refs}});
      log_line("wrote " + std::to_string(count) + " instances to " + out_path);
    } else if (*ref) {
      const InitComparison cmp = compare_initializations(cfg, log_line);
      write_json(out_path, {{"transferred", cmp.transferred.summary()}, {"random", cmp.random.summary()}});
    } else if (*gen) {
      const GenerateResult res = generate_dataset(cfg, log_line);
      for (const auto& s : res.skipped) log_line("skipped demo: " + s);
      if (res.records.empty()) throw StageError("generate: no record survived refinement");
      write_dataset(out_path, res.records);
      write_json(out_path + ".summary.json", {{"counts", res.counts.to_json()},
                                              {"source_refinement", res.source_report.summary()},
                                              {"transfer_refinement", res.transfer_report.summary()},
                                              {"config", cfg.to_json()}});
      if (verify) {
        int bad = 0;
        for (const auto& r : read_dataset(out_path)) {
          for (const auto& why : verify_record(r, cfg)) {
            log_line("record " + std::to_string(r.id) + ": " + why);
            ++bad;
          }
        }
        if (bad > 0) throw StageError("generate: " + std::to_string(bad) + " verification failures");
        log_line("all records re-verified");
      }
    } else if (*tr) {
      const auto records = read_dataset(in_path);
      const TrainResult res = train_policy(cfg, records);
      res.net.save(checkpoint);
      write_json(checkpoint + ".loss.json", res.loss_curve);
      log_line("final loss " + std::to_string(res.loss_curve.empty() ? 0.0 : res.loss_curve.back()));
    } else if (*ev) {
      std::optional<PolicyNet> net;
      if (!checkpoint.empty()) {
        try {
          net = PolicyNet::load(checkpoint);
        } catch (const std::runtime_error& e) {
          throw StageError(e.what());
        }
      }
      const EvalReport report = run_eval(cfg, net ? &*net : nullptr);
      write_json(out_path, report.to_json());
      std::cerr << render_report(report);
    } else if (*rep) {
      std::cout << render_report(EvalReport::from_json(read_json(in_path)));
    } else if (*base) {
      EvalReport report = run_eval(cfg, nullptr);
      std::erase_if(report.rows, [&](const EvalRow& r) { return r.method != kind; });
      write_json(out_path, report.to_json());
      std::cerr << render_report(report);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kStageError;
  }
  return kOk;
}
