#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "isagrasp/pipeline.hpp"

using namespace isagrasp;
using nlohmann::json;

namespace {

/// One template, two demos, three deformations each.
PipelineConfig tiny_config() {
  PipelineConfig c;
  c.templates = {default_templates()[0]};
  c.demos.per_template = 2;
  c.augmentations = 3;
  c.feature_points = 64;
  c.held_out_per_template = 2;
  c.train.shape = {{8, 8, 8}, 8};
  c.train.epochs = 2;
  c.train.batch = 4;
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const GenerateResult& tiny_run() {
  static const GenerateResult r = generate_dataset(tiny_config());
  return r;
}

}  // namespace

TEST_CASE("config round trips and rejects unknown keys and bad values") {
  const PipelineConfig c;
  const PipelineConfig back = PipelineConfig::from_json(json::parse(c.to_json().dump()));
  CHECK(back.to_json() == c.to_json());

  CHECK_THROWS_AS(PipelineConfig::from_json({{"augmentation", 3}}), ConfigError);
  CHECK_THROWS_AS(PipelineConfig::from_json({{"augmentations", -1}}), ConfigError);
  CHECK_THROWS_AS(PipelineConfig::from_json({{"demos", {{"styles", {"power"}}}}}), ConfigError);
  CHECK_THROWS_AS(PipelineConfig::from_json({{"refine", {{"draws", "many"}}}}), ConfigError);
  CHECK_THROWS_AS(PipelineConfig::from_json({{"train", {{"seed", 4}}}}), ConfigError);
  CHECK_THROWS_AS(PipelineConfig::from_json({{"feature_points", 5000}}), ConfigError);
  CHECK_THROWS_AS(PipelineConfig::from_json(json::array()), ConfigError);
  CHECK_THROWS_AS(PipelineConfig::load("/nonexistent/config.json"), ConfigError);

  const PipelineConfig y = PipelineConfig::from_json({{"demos", {{"yaw", nullptr}}}});
  CHECK(!y.demos.yaw.has_value());
}

TEST_CASE("shipped configs load") {
  for (const char* name : {"desk.json", "paper.json"}) {
    CAPTURE(name);
    CHECK_NOTHROW(PipelineConfig::load(std::filesystem::path(ISAGRASP_SOURCE_DIR) / "config" / name));
  }
}

TEST_CASE("base64 known vectors and round trip") {
  CHECK(base64_encode("") == "");
  CHECK(base64_encode("f") == "Zg==");
  CHECK(base64_encode("fo") == "Zm8=");
  CHECK(base64_encode("foo") == "Zm9v");
  CHECK(base64_encode("foobar") == "Zm9vYmFy");
  CHECK(base64_decode("Zm9vYg==") == "foob");
  std::mt19937 rng(3);
  for (int len = 0; len < 40; ++len) {
    std::string s;
    for (int i = 0; i < len; ++i) s.push_back(static_cast<char>(rng() & 0xff));
    CHECK(base64_decode(base64_encode(s)) == s);
  }
  CHECK_THROWS_AS(base64_decode("abc"), std::invalid_argument);
  CHECK_THROWS_AS(base64_decode("ab!d"), std::invalid_argument);
}

TEST_CASE("zero augmentations give only source records") {
  PipelineConfig c = tiny_config();
  c.augmentations = 0;
  const GenerateResult r = generate_dataset(c);
  CHECK(r.counts.transfers_attempted == 0);
  CHECK(static_cast<int>(r.records.size()) == r.counts.sources_refined);
  for (const auto& rec : r.records) {
    CHECK(rec.provenance.augmentation == -1);
    CHECK(!rec.instance.latent_seed.has_value());
    CHECK(rec.instance.latent.isZero(0.0));
  }
}

TEST_CASE("stage counts are conserved") {
  const GenerateResult& r = tiny_run();
  const StageCounts& n = r.counts;
  CHECK(n.demos_requested == 2);
  CHECK(n.demos_synthesized <= n.demos_requested);
  CHECK(n.sources_refined <= n.demos_synthesized);
  CHECK(n.demos_synthesized * 3 >= n.transfers_attempted);
  CHECK(n.transfers_attempted == n.sources_refined * 3);
  CHECK(n.transfers_attempted >= n.transfers_refined);
  CHECK(n.records_written == n.sources_refined + n.transfers_refined);
  REQUIRE(n.records_written > 0);
  for (std::size_t i = 0; i < r.records.size(); ++i) CHECK(r.records[i].id == static_cast<int>(i));
}

TEST_CASE("dataset files are bitwise deterministic and round trip") {
  const auto dir = std::filesystem::temp_directory_path();
  const auto a = dir / "isagrasp_ds_a.jsonl";
  const auto b = dir / "isagrasp_ds_b.jsonl";
  write_dataset(a, tiny_run().records);
  write_dataset(b, generate_dataset(tiny_config()).records);
  CHECK(slurp(a) == slurp(b));

  const auto back = read_dataset(a);
  REQUIRE(back.size() == tiny_run().records.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].to_json() == tiny_run().records[i].to_json());
    CHECK(back[i].features.values == tiny_run().records[i].features.values);
  }
  std::filesystem::remove(a);
  std::filesystem::remove(b);

  PipelineConfig other = tiny_config();
  other.seed = 1;
  const auto c = generate_dataset(other);
  CHECK(c.records.front().to_json() != tiny_run().records.front().to_json());
}

TEST_CASE("every record rebuilds its instance and re-certifies") {
  const PipelineConfig cfg = tiny_config();
  for (const auto& rec : tiny_run().records) {
    CAPTURE(rec.id);
    const DatasetRecord back = DatasetRecord::from_json(json::parse(rec.to_json().dump()));
    const ShapeInstance inst = back.instance.build();
    if (rec.instance.latent_seed) {
      const ShapeInstance direct = sample_instance(cfg.templates[0], *rec.instance.latent_seed, cfg.instance);
      CHECK(inst.points() == direct.points());
      CHECK(inst.normals() == direct.normals());
    }
    CHECK(verify_record(back, cfg).empty());
  }
}

TEST_CASE("a tampered record fails verification") {
  const PipelineConfig cfg = tiny_config();
  DatasetRecord rec = tiny_run().records.front();
  rec.label.pregrasp.translation.z() += 0.3;  // far above the object
  CHECK(!verify_record(rec, cfg).empty());
  rec = tiny_run().records.front();
  rec.features.values(0, 0) += 1e-12;
  CHECK(!verify_record(rec, cfg).empty());
}

TEST_CASE("evaluation: empty held-out set is an error, baseline rows always present") {
  const PipelineConfig cfg = tiny_config();
  CHECK_THROWS_AS(run_eval(cfg, nullptr, {}), StageError);
  PipelineConfig none = cfg;
  none.held_out_per_template = 0;
  CHECK_THROWS_AS(run_eval(none, nullptr), StageError);

  const TrainResult t = train_policy(cfg, tiny_run().records);
  const EvalReport with_policy = run_eval(cfg, &t.net);
  REQUIRE(with_policy.rows.size() == 3);
  CHECK(with_policy.rows[0].method == "policy");
  CHECK(with_policy.row("random").trials == 10);
  CHECK(with_policy.row("heuristic").per_pair.size() == 5);
  const EvalReport baselines = run_eval(cfg, nullptr);
  CHECK(baselines.rows.size() == 2);
  CHECK(baselines.row("random").successes == with_policy.row("random").successes);

  const EvalReport back = EvalReport::from_json(json::parse(with_policy.to_json().dump()));
  CHECK(back.to_json() == with_policy.to_json());
  const std::string table = render_report(with_policy);
  CHECK(table.find("| policy |") != std::string::npos);
  CHECK(table.find("| random |") != std::string::npos);
  CHECK(table.find("| heuristic |") != std::string::npos);
  CHECK(table.find("m=0.25 mu=1.00") != std::string::npos);
  CHECK_THROWS_AS(train_policy(cfg, {}), StageError);
}
