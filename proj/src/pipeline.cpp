#include "isagrasp/pipeline.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "isagrasp/grasp_transfer.hpp"
#include "isagrasp/seeding.hpp"

namespace isagrasp {

using nlohmann::json;

namespace {

std::uint64_t u64(int v) { return static_cast<std::uint64_t>(v); }

template <class F>
auto section(const std::string& name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("config: " + name + ": " + e.what());
  }
}

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw std::invalid_argument("expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json retarget_json(const RetargetWeights& w, const RetargetOptions& o) {
  return {{"w_g", w.w_g},
          {"w_c", w.w_c},
          {"w_r", w.w_r},
          {"restarts", o.restarts},
          {"max_iters", o.max_iters},
          {"grad_tol", o.grad_tol},
          {"fd_step", o.fd_step},
          {"init_translation_jitter", o.init_translation_jitter},
          {"init_rotation_jitter", o.init_rotation_jitter},
          {"translation_scale", o.translation_scale}};
}

void retarget_from(const json& j, RetargetWeights& w, RetargetOptions& o) {
  for (const auto& [key, value] : j.items()) {
    if (key == "w_g") w.w_g = value.get<double>();
    else if (key == "w_c") w.w_c = value.get<double>();
    else if (key == "w_r") w.w_r = value.get<double>();
    else if (key == "restarts") o.restarts = value.get<int>();
    else if (key == "max_iters") o.max_iters = value.get<int>();
    else if (key == "grad_tol") o.grad_tol = value.get<double>();
    else if (key == "fd_step") o.fd_step = value.get<double>();
    else if (key == "init_translation_jitter") o.init_translation_jitter = value.get<double>();
    else if (key == "init_rotation_jitter") o.init_rotation_jitter = value.get<double>();
    else if (key == "translation_scale") o.translation_scale = value.get<double>();
    else throw std::invalid_argument("unknown key '" + key + "'");
  }
}

json demos_json(const DemoConfig& d) {
  json styles = json::array();
  for (GraspStyle s : d.styles) styles.push_back(to_string(s));
  return {{"per_template", d.per_template},
          {"styles", styles},
          {"jitter", d.jitter},
          {"palm_offset", d.palm_offset},
          {"yaw", d.yaw ? json(*d.yaw) : json(nullptr)}};
}

DemoConfig demos_from(const json& j) {
  DemoConfig d;
  for (const auto& [key, value] : j.items()) {
    if (key == "per_template") d.per_template = value.get<int>();
    else if (key == "styles") {
      d.styles.clear();
      for (const auto& s : value) d.styles.push_back(grasp_style_from_string(s.get<std::string>()));
    } else if (key == "jitter") d.jitter = value.get<double>();
    else if (key == "palm_offset") d.palm_offset = value.get<double>();
    else if (key == "yaw") d.yaw = value.is_null() ? std::nullopt : std::optional<double>(value.get<double>());
    else throw std::invalid_argument("unknown key '" + key + "'");
  }
  return d;
}

}  // namespace

// ---------------------------------------------------------------------------
// configuration

void PipelineConfig::validate() const {
  section("hand", [&] { hand.validate(); });
  section("templates", [&] {
    if (templates.empty()) throw std::invalid_argument("at least one template is required");
    for (const auto& t : templates) t.validate();
  });
  section("demos", [&] {
    if (demos.per_template < 1) throw std::invalid_argument("per_template must be at least 1");
    if (demos.styles.empty()) throw std::invalid_argument("styles must not be empty");
    if (!(demos.jitter >= 0.0)) throw std::invalid_argument("jitter must be non-negative");
    if (!(demos.palm_offset > 0.0)) throw std::invalid_argument("palm_offset must be positive");
    if (demos.yaw && !std::isfinite(*demos.yaw)) throw std::invalid_argument("yaw must be finite");
  });
  section("retarget", [&] {
    retarget_weights.validate();
    if (retarget.restarts < 1 || retarget.max_iters < 1) throw std::invalid_argument("restarts and max_iters >= 1");
    if (!(retarget.grad_tol > 0.0) || !(retarget.fd_step > 0.0) || !(retarget.translation_scale > 0.0)) {
      throw std::invalid_argument("grad_tol, fd_step and translation_scale must be positive");
    }
    if (!(retarget.init_translation_jitter >= 0.0) || !(retarget.init_rotation_jitter >= 0.0)) {
      throw std::invalid_argument("restart jitter must be non-negative");
    }
  });
  section("instance", [&] { InstanceOptions::from_json(instance.to_json()); });
  section("augmentations", [&] {
    if (augmentations < 0) throw std::invalid_argument("must be non-negative");
  });
  section("neighbors", [&] {
    if (neighbors < 1) throw std::invalid_argument("must be at least 1");
  });
  section("refine", [&] { refine.validate(); });
  section("feature_points", [&] {
    if (feature_points < 1 || feature_points > instance.samples) {
      throw std::invalid_argument("must be in [1, instance.samples]");
    }
  });
  section("train", [&] { train.validate(); });
  section("held_out_per_template", [&] {
    if (held_out_per_template < 0) throw std::invalid_argument("must be non-negative");
  });
  section("eval_grid", [&] {
    if (eval_grid.empty()) throw std::invalid_argument("at least one (mass, friction) pair is required");
    for (const auto& p : eval_grid) {
      if (!(p.mass > 0.0) || !(p.friction >= 0.0)) throw std::invalid_argument("mass > 0 and friction >= 0");
    }
  });
  section("baselines", [&] { baselines.validate(); });
}

json PipelineConfig::to_json() const {
  json tmpl = json::array();
  for (const auto& t : templates) tmpl.push_back(t.to_json());
  json grid = json::array();
  for (const auto& p : eval_grid) grid.push_back({p.mass, p.friction});
  json tr = train.to_json();
  tr.erase("seed");
  return {{"seed", seed},
          {"hand", hand.to_json()},
          {"templates", tmpl},
          {"demos", demos_json(demos)},
          {"retarget", retarget_json(retarget_weights, retarget)},
          {"instance", instance.to_json()},
          {"augmentations", augmentations},
          {"neighbors", neighbors},
          {"refine", refine.to_json()},
          {"feature_points", feature_points},
          {"train", tr},
          {"held_out_per_template", held_out_per_template},
          {"eval_grid", grid},
          {"baselines", baselines.to_json()}};
}

PipelineConfig PipelineConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  PipelineConfig c;
  for (const auto& [key, value] : j.items()) {
    section(key, [&, &key = key, &value = value] {
      if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "hand") c.hand = HandDescription::from_json(value);
      else if (key == "templates") {
        c.templates.clear();
        for (const auto& t : value) c.templates.push_back(TemplateShape::from_json(t));
      } else if (key == "demos") c.demos = demos_from(value);
      else if (key == "retarget") retarget_from(value, c.retarget_weights, c.retarget);
      else if (key == "instance") c.instance = InstanceOptions::from_json(value);
      else if (key == "augmentations") c.augmentations = value.get<int>();
      else if (key == "neighbors") c.neighbors = value.get<int>();
      else if (key == "refine") c.refine = RefineOptions::from_json(value);
      else if (key == "feature_points") c.feature_points = value.get<int>();
      else if (key == "train") {
        if (value.contains("seed")) throw std::invalid_argument("the training seed derives from the master seed");
        c.train = TrainConfig::from_json(value);
      } else if (key == "held_out_per_template") c.held_out_per_template = value.get<int>();
      else if (key == "eval_grid") {
        c.eval_grid.clear();
        for (const auto& p : value) {
          if (!p.is_array() || p.size() != 2) throw std::invalid_argument("pairs are [mass, friction]");
          c.eval_grid.push_back({p[0].get<double>(), p[1].get<double>()});
        }
      } else if (key == "baselines") c.baselines = BaselineConfig::from_json(value);
      else throw ConfigError("config: unknown key '" + key + "'");
    });
  }
  c.validate();
  return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

// ---------------------------------------------------------------------------
// records

ShapeInstance InstanceRef::build() const { return ShapeInstance(shape, latent, options); }

namespace {

constexpr char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

template <class T>
std::string pack_le(const T* data, std::size_t n) {
  std::string out;
  out.reserve(n * 8);
  for (std::size_t i = 0; i < n; ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(data[i]);
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
  }
  return out;
}

std::vector<double> unpack_le(const std::string& bytes) {
  if (bytes.size() % 8 != 0) throw std::invalid_argument("record: byte block is not a whole number of doubles");
  std::vector<double> out(bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[8 * i + b])) << (8 * b);
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

}  // namespace

std::string base64_encode(const std::string& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (static_cast<unsigned char>(bytes[i]) << 16) |
                            (static_cast<unsigned char>(bytes[i + 1]) << 8) | static_cast<unsigned char>(bytes[i + 2]);
    out += {kB64[v >> 18], kB64[(v >> 12) & 63], kB64[(v >> 6) & 63], kB64[v & 63]};
  }
  if (i + 1 == bytes.size()) {
    const std::uint32_t v = static_cast<unsigned char>(bytes[i]) << 16;
    out += {kB64[v >> 18], kB64[(v >> 12) & 63], '=', '='};
  } else if (i + 2 == bytes.size()) {
    const std::uint32_t v = (static_cast<unsigned char>(bytes[i]) << 16) | (static_cast<unsigned char>(bytes[i + 1]) << 8);
    out += {kB64[v >> 18], kB64[(v >> 12) & 63], kB64[(v >> 6) & 63], '='};
  }
  return out;
}

std::string base64_decode(const std::string& text) {
  if (text.size() % 4 != 0) throw std::invalid_argument("base64: length is not a multiple of 4");
  auto val = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    throw std::invalid_argument("base64: invalid character");
  };
  std::string out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    const bool last = i + 4 == text.size();
    const int pad = last ? (text[i + 3] == '=') + (text[i + 2] == '=') : 0;
    if (text[i + 2] == '=' && text[i + 3] != '=') throw std::invalid_argument("base64: bad padding");
    const std::uint32_t v = (val(text[i]) << 18) | (val(text[i + 1]) << 12) |
                            ((pad >= 2 ? 0 : val(text[i + 2])) << 6) | (pad >= 1 ? 0 : val(text[i + 3]));
    out.push_back(static_cast<char>(v >> 16));
    if (pad < 2) out.push_back(static_cast<char>((v >> 8) & 0xff));
    if (pad < 1) out.push_back(static_cast<char>(v & 0xff));
  }
  return out;
}

json DatasetRecord::to_json() const {
  // row-major copy so the block reads point by point
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = features.values;
  const Provenance& p = provenance;
  return {
      {"id", id},
      {"instance",
       {{"template", instance.shape.to_json()},
        {"latent", base64_encode(pack_le(instance.latent.data(), kLatentDim))},
        {"latent_seed", instance.latent_seed ? json(*instance.latent_seed) : json(nullptr)},
        {"options", instance.options.to_json()}}},
      {"features",
       {{"rows", rm.rows()},
        {"cols", rm.cols()},
        {"center", vec_json(features.center)},
        {"facing", vec_json(features.frame.facing)},
        {"pointing", vec_json(features.frame.pointing)},
        {"table_normal", vec_json(features.frame.table_normal)},
        {"source_index", features.source_index},
        {"values", base64_encode(pack_le(rm.data(), static_cast<std::size_t>(rm.size())))}}},
      {"label", label.to_json()},
      {"provenance",
       {{"template", p.template_index},
        {"demo", p.demo},
        {"style", to_string(p.style)},
        {"augmentation", p.augmentation},
        {"refine_seed", p.refine_seed},
        {"accepted_trial", p.accepted_trial},
        {"randomization_seeds", p.randomization_seeds},
        {"feature_seed", p.feature_seed}}},
  };
}

DatasetRecord DatasetRecord::from_json(const json& j) {
  DatasetRecord r;
  r.id = j.at("id").get<int>();
  const json& in = j.at("instance");
  r.instance.shape = TemplateShape::from_json(in.at("template"));
  const auto latent = unpack_le(base64_decode(in.at("latent").get<std::string>()));
  if (latent.size() != kLatentDim) throw std::invalid_argument("record: latent has the wrong length");
  for (int i = 0; i < kLatentDim; ++i) r.instance.latent(i) = latent[i];
  if (!in.at("latent_seed").is_null()) r.instance.latent_seed = in.at("latent_seed").get<std::uint64_t>();
  r.instance.options = InstanceOptions::from_json(in.at("options"));

  const json& f = j.at("features");
  const auto rows = f.at("rows").get<Eigen::Index>();
  const auto cols = f.at("cols").get<Eigen::Index>();
  if (cols != kFeatureDim || rows < 1) throw std::invalid_argument("record: features must be rows x 7");
  const auto values = unpack_le(base64_decode(f.at("values").get<std::string>()));
  if (values.size() != static_cast<std::size_t>(rows * cols)) {
    throw std::invalid_argument("record: feature block does not match rows x cols");
  }
  r.features.values = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), rows, cols);
  r.features.center = vec_from(f.at("center"));
  r.features.frame = {vec_from(f.at("facing")), vec_from(f.at("pointing")), vec_from(f.at("table_normal"))};
  r.features.source_index = f.at("source_index").get<std::vector<int>>();
  if (r.features.source_index.size() != static_cast<std::size_t>(rows)) {
    throw std::invalid_argument("record: one source index per feature row expected");
  }
  r.label = Grasp::from_json(j.at("label"));

  const json& p = j.at("provenance");
  r.provenance.template_index = p.at("template").get<int>();
  r.provenance.demo = p.at("demo").get<int>();
  r.provenance.style = grasp_style_from_string(p.at("style").get<std::string>());
  r.provenance.augmentation = p.at("augmentation").get<int>();
  r.provenance.refine_seed = p.at("refine_seed").get<std::uint64_t>();
  r.provenance.accepted_trial = p.at("accepted_trial").get<int>();
  r.provenance.randomization_seeds = p.at("randomization_seeds").get<std::vector<std::uint64_t>>();
  r.provenance.feature_seed = p.at("feature_seed").get<std::uint64_t>();
  return r;
}

void write_dataset(const std::filesystem::path& path, const std::vector<DatasetRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw StageError("cannot write dataset " + path.string());
  for (const auto& r : records) out << r.to_json().dump() << '\n';
  if (!out) throw StageError("cannot write dataset " + path.string());
}

std::vector<DatasetRecord> read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StageError("cannot read dataset " + path.string());
  std::vector<DatasetRecord> out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(DatasetRecord::from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw StageError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

json StageCounts::to_json() const {
  return {{"demos_requested", demos_requested},     {"demos_synthesized", demos_synthesized},
          {"sources_refined", sources_refined},     {"transfers_attempted", transfers_attempted},
          {"transfers_refined", transfers_refined}, {"records_written", records_written}};
}

// ---------------------------------------------------------------------------
// generation

namespace {

struct Source {
  int template_index = 0;
  int demo = 0;
  GraspStyle style = GraspStyle::pinch_top;
  std::optional<Grasp> retargeted;
  std::string skip_reason;
};

struct Transfer {
  int source = 0;  // index into the refined sources
  int augmentation = 0;
  InstanceRef ref;
  Grasp grasp;
};

/// Everything up to (not including) the refinement of transferred grasps.
struct Prepared {
  std::vector<Source> sources;
  std::vector<ShapeInstance> source_instances;  // one per template
  std::vector<InstanceRef> source_refs;
  std::vector<int> attempted;                   // source indices sent to refinement
  RefinementReport source_report;
  std::vector<int> refined;                     // indices into `attempted`
  std::vector<Transfer> transfers;
  std::vector<ShapeInstance> transfer_instances;
};

void say(const Logger& log, const std::string& msg) {
  if (log) log(msg);
}

Prepared prepare(const PipelineConfig& cfg, const Logger& log) {
  cfg.validate();
  const std::uint64_t master = cfg.seed;
  Prepared p;
  for (int t = 0; t < static_cast<int>(cfg.templates.size()); ++t) {
    InstanceRef ref{cfg.templates[t], Latent::Zero(), cfg.instance, std::nullopt};
    p.source_instances.push_back(ref.build());
    p.source_refs.push_back(ref);
    for (int d = 0; d < cfg.demos.per_template; ++d) {
      p.sources.push_back({t, d, cfg.demos.styles[d % cfg.demos.styles.size()], std::nullopt, ""});
    }
  }

  const int ns = static_cast<int>(p.sources.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (int i = 0; i < ns; ++i) {
    Source& s = p.sources[i];
    DemoSpec spec{cfg.templates[s.template_index], s.style, cfg.demos.jitter, cfg.demos.palm_offset, cfg.demos.yaw};
    try {
      const SyntheticDemo demo =
          synth_demo(spec, derive_seed(master, {stage_id(Stage::demo), u64(s.template_index), u64(s.demo)}), cfg.hand);
      RetargetOptions ro = cfg.retarget;
      ro.seed = derive_seed(master, {stage_id(Stage::retarget), u64(s.template_index), u64(s.demo)});
      s.retargeted = Grasp::from_pose(retarget(cfg.hand, demo.record, cfg.retarget_weights, ro).pose);
    } catch (const std::invalid_argument& e) {
      s.skip_reason = e.what();
    }
  }

  std::vector<RefineItem> items;
  for (int i = 0; i < ns; ++i) {
    if (!p.sources[i].retargeted) continue;
    p.attempted.push_back(i);
    items.push_back({&p.source_instances[p.sources[i].template_index], *p.sources[i].retargeted});
  }
  say(log, "demos: " + std::to_string(p.attempted.size()) + "/" + std::to_string(ns) + " synthesized and retargeted");
  p.source_report = batch_refine(cfg.hand, items, master, stage_id(Stage::source_refine), cfg.refine);
  for (int k = 0; k < static_cast<int>(p.attempted.size()); ++k) {
    if (p.source_report.results[k].grasp) p.refined.push_back(k);
  }
  say(log, "source refinement: " + std::to_string(p.refined.size()) + "/" + std::to_string(p.attempted.size()));

  for (int r = 0; r < static_cast<int>(p.refined.size()); ++r) {
    for (int a = 0; a < cfg.augmentations; ++a) p.transfers.push_back({r, a, {}, {}});
  }
  const int nt = static_cast<int>(p.transfers.size());
  std::vector<std::optional<ShapeInstance>> built(nt);
  std::vector<TransferContext> contexts;
  for (int r : p.refined) {
    const Source& s = p.sources[p.attempted[r]];
    contexts.push_back(
        build_context(p.source_instances[s.template_index], *p.source_report.results[r].grasp, cfg.neighbors));
  }
#pragma omp parallel for schedule(dynamic, 1)
  for (int i = 0; i < nt; ++i) {
    Transfer& tr = p.transfers[i];
    const int k = p.refined[tr.source];
    const Source& s = p.sources[p.attempted[k]];
    const std::uint64_t latent_seed =
        derive_seed(master, {stage_id(Stage::instance), u64(s.template_index), u64(s.demo), u64(tr.augmentation)});
    tr.ref = {cfg.templates[s.template_index], sample_latent(latent_seed, cfg.instance.sigma), cfg.instance, latent_seed};
    built[i].emplace(tr.ref.build());
    tr.grasp = transfer_grasp(contexts[tr.source], p.source_instances[s.template_index], *built[i],
                              *p.source_report.results[k].grasp);
  }
  p.transfer_instances.reserve(nt);
  for (auto& b : built) p.transfer_instances.push_back(std::move(*b));
  say(log, "transfers: " + std::to_string(nt) + " deformed instances");
  return p;
}

std::vector<RefineItem> transfer_items(const Prepared& p) {
  std::vector<RefineItem> items;
  for (std::size_t i = 0; i < p.transfers.size(); ++i) items.push_back({&p.transfer_instances[i], p.transfers[i].grasp});
  return items;
}

}  // namespace

GenerateResult generate_dataset(const PipelineConfig& cfg, const Logger& log) {
  const Prepared p = prepare(cfg, log);
  const std::uint64_t master = cfg.seed;
  GenerateResult res;
  res.source_report = p.source_report;
  res.transfer_report = batch_refine(cfg.hand, transfer_items(p), master, stage_id(Stage::transfer_refine), cfg.refine);
  say(log, "transfer refinement: " + std::to_string(res.transfer_report.refined) + "/" +
               std::to_string(res.transfer_report.attempted));

  res.counts.demos_requested = static_cast<int>(p.sources.size());
  res.counts.demos_synthesized = static_cast<int>(p.attempted.size());
  res.counts.sources_refined = static_cast<int>(p.refined.size());
  res.counts.transfers_attempted = res.transfer_report.attempted;
  res.counts.transfers_refined = res.transfer_report.refined;
  for (const Source& s : p.sources) {
    if (!s.skip_reason.empty()) res.skipped.push_back(s.skip_reason);
  }

  // Records: each refined source, then its refined transfers.
  struct Pending {
    const RefineResult* result;
    InstanceRef ref;
    const ShapeInstance* inst;
    const Source* source;
    int augmentation;
    std::uint64_t refine_seed;
  };
  std::vector<Pending> pending;
  std::size_t next_transfer = 0;
  for (int r = 0; r < static_cast<int>(p.refined.size()); ++r) {
    const int k = p.refined[r];
    const Source& s = p.sources[p.attempted[k]];
    pending.push_back({&p.source_report.results[k], p.source_refs[s.template_index],
                       &p.source_instances[s.template_index], &s, -1,
                       derive_seed(master, {stage_id(Stage::source_refine), u64(k)})});
    for (; next_transfer < p.transfers.size() && p.transfers[next_transfer].source == r; ++next_transfer) {
      const RefineResult& tr = res.transfer_report.results[next_transfer];
      if (!tr.grasp) continue;
      pending.push_back({&tr, p.transfers[next_transfer].ref, &p.transfer_instances[next_transfer], &s,
                         p.transfers[next_transfer].augmentation,
                         derive_seed(master, {stage_id(Stage::transfer_refine), u64(static_cast<int>(next_transfer))})});
    }
  }

  const int n = static_cast<int>(pending.size());
  res.records.resize(n);
#pragma omp parallel for schedule(dynamic, 1)
  for (int i = 0; i < n; ++i) {
    const Pending& q = pending[i];
    DatasetRecord& rec = res.records[i];
    rec.id = i;
    rec.instance = q.ref;
    rec.label = *q.result->grasp;
    Provenance& pv = rec.provenance;
    pv.template_index = q.source->template_index;
    pv.demo = q.source->demo;
    pv.style = q.source->style;
    pv.augmentation = q.augmentation;
    pv.refine_seed = q.refine_seed;
    pv.accepted_trial = q.result->accepted_trial;
    pv.randomization_seeds = q.result->randomization_seeds;
    pv.feature_seed = derive_seed(
        master, {stage_id(Stage::features), u64(pv.template_index), u64(pv.demo), u64(pv.augmentation + 1)});
    rec.features = build_features(*q.inst, FeatureFrame::canonical(), cfg.feature_points, pv.feature_seed);
  }
  res.counts.records_written = n;
  say(log, "records: " + std::to_string(n));
  return res;
}

std::vector<std::string> verify_record(const DatasetRecord& r, const PipelineConfig& cfg) {
  std::vector<std::string> bad;
  const ShapeInstance inst = r.instance.build();
  if (r.instance.latent_seed && sample_latent(*r.instance.latent_seed, r.instance.options.sigma) != r.instance.latent) {
    bad.push_back("latent does not match its seed");
  }
  const PointFeatures f = build_features(inst, r.features.frame, static_cast<int>(r.features.values.rows()),
                                         r.provenance.feature_seed);
  if (f.values != r.features.values || f.center != r.features.center || f.source_index != r.features.source_index) {
    bad.push_back("features do not rebuild bitwise");
  }
  if (static_cast<int>(r.provenance.randomization_seeds.size()) != cfg.refine.randomizations) {
    bad.push_back("expected " + std::to_string(cfg.refine.randomizations) + " randomization seeds");
  }
  for (std::size_t k = 0; k < r.provenance.randomization_seeds.size(); ++k) {
    const PhysicsDraw d = draw_physics(r.provenance.randomization_seeds[k], cfg.refine.randomization);
    const StabilityVerdict v = lift_success(cfg.hand, inst, r.label, d.params, d.disturbance_seed, cfg.refine.oracle);
    if (!v.success) bad.push_back("randomization " + std::to_string(k) + " fails: " + to_string(v.failure));
  }
  return bad;
}

InitComparison compare_initializations(const PipelineConfig& cfg, const Logger& log) {
  const Prepared p = prepare(cfg, log);
  const std::uint64_t master = cfg.seed;
  InitComparison out;
  out.transferred = batch_refine(cfg.hand, transfer_items(p), master, stage_id(Stage::transfer_refine), cfg.refine);
  std::vector<RefineItem> random_items;
  for (std::size_t i = 0; i < p.transfers.size(); ++i) {
    random_items.push_back({&p.transfer_instances[i],
                            random_grasp(p.transfer_instances[i], cfg.baselines,
                                         derive_seed(master, {stage_id(Stage::random_init), 0, i}))});
  }
  out.random = batch_refine(cfg.hand, random_items, derive_seed(master, {stage_id(Stage::random_init), 1}),
                            stage_id(Stage::random_init), cfg.refine);
  say(log, "refined: transferred " + std::to_string(out.transferred.refined) + "/" +
               std::to_string(out.transferred.attempted) + ", random " + std::to_string(out.random.refined) + "/" +
               std::to_string(out.random.attempted));
  return out;
}

// ---------------------------------------------------------------------------
// training and evaluation

std::vector<TrainSample> training_samples(const std::vector<DatasetRecord>& records) {
  std::vector<TrainSample> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back({r.features, r.label});
  return out;
}

TrainResult train_policy(const PipelineConfig& cfg, const std::vector<DatasetRecord>& records) {
  if (records.empty()) throw StageError("train: the dataset is empty");
  TrainConfig tc = cfg.train;
  tc.seed = derive_seed(cfg.seed, {stage_id(Stage::training)});
  return train(training_samples(records), tc);
}

std::vector<ShapeInstance> held_out_instances(const PipelineConfig& cfg) {
  std::vector<ShapeInstance> out;
  for (int t = 0; t < static_cast<int>(cfg.templates.size()); ++t) {
    for (int i = 0; i < cfg.held_out_per_template; ++i) {
      out.push_back(sample_instance(cfg.templates[t], derive_seed(cfg.seed, {stage_id(Stage::held_out), u64(t), u64(i)}),
                                    cfg.instance));
    }
  }
  return out;
}

namespace {

EvalRow to_row(const std::string& name, const EvalResult& r) { return {name, r.successes, r.trials, r.per_pair}; }

}  // namespace

EvalReport run_eval(const PipelineConfig& cfg, const PolicyNet* net, const std::vector<ShapeInstance>& held_out) {
  if (held_out.empty()) throw StageError("eval: the held-out instance set is empty");
  EvalOptions opts;
  opts.grid = cfg.eval_grid;
  opts.oracle = cfg.refine.oracle;
  opts.seed = derive_seed(cfg.seed, {stage_id(Stage::evaluation)});
  std::vector<const ShapeInstance*> ptrs;
  for (const auto& h : held_out) ptrs.push_back(&h);

  EvalReport rep;
  rep.instances = static_cast<int>(held_out.size());
  rep.grid = cfg.eval_grid;
  if (net != nullptr) rep.rows.push_back(to_row("policy", evaluate(*net, cfg.hand, ptrs, opts, cfg.feature_points)));
  std::vector<Grasp> random, heuristic;
  for (std::size_t i = 0; i < held_out.size(); ++i) {
    random.push_back(random_grasp(held_out[i], cfg.baselines, derive_seed(cfg.seed, {stage_id(Stage::evaluation), 1, i})));
    heuristic.push_back(heuristic_grasp(held_out[i], cfg.baselines));
  }
  rep.rows.push_back(to_row("random", evaluate_grasps(cfg.hand, ptrs, random, opts)));
  rep.rows.push_back(to_row("heuristic", evaluate_grasps(cfg.hand, ptrs, heuristic, opts)));
  return rep;
}

json EvalReport::to_json() const {
  json rs = json::array();
  for (const auto& r : rows) {
    rs.push_back({{"method", r.method}, {"successes", r.successes}, {"trials", r.trials}, {"per_pair", r.per_pair},
                  {"rate", r.rate()}});
  }
  json g = json::array();
  for (const auto& p : grid) g.push_back({p.mass, p.friction});
  return {{"instances", instances}, {"grid", g}, {"rows", rs}};
}

EvalReport EvalReport::from_json(const json& j) {
  EvalReport r;
  r.instances = j.at("instances").get<int>();
  for (const auto& p : j.at("grid")) r.grid.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  for (const auto& row : j.at("rows")) {
    r.rows.push_back({row.at("method").get<std::string>(), row.at("successes").get<int>(), row.at("trials").get<int>(),
                      row.at("per_pair").get<std::vector<int>>()});
  }
  return r;
}

const EvalRow& EvalReport::row(const std::string& method) const {
  for (const auto& r : rows) {
    if (r.method == method) return r;
  }
  throw std::out_of_range("report has no row '" + method + "'");
}

std::string render_report(const EvalReport& report) {
  std::ostringstream out;
  char buf[64];
  out << "| method |";
  for (const auto& p : report.grid) {
    std::snprintf(buf, sizeof buf, " m=%.2f mu=%.2f |", p.mass, p.friction);
    out << buf;
  }
  out << " overall |\n|---|";
  for (std::size_t k = 0; k < report.grid.size(); ++k) out << "---|";
  out << "---|\n";
  for (const auto& r : report.rows) {
    out << "| " << r.method << " |";
    for (std::size_t k = 0; k < report.grid.size(); ++k) {
      const int hits = k < r.per_pair.size() ? r.per_pair[k] : 0;
      std::snprintf(buf, sizeof buf, " %.2f |", report.instances > 0 ? static_cast<double>(hits) / report.instances : 0.0);
      out << buf;
    }
    std::snprintf(buf, sizeof buf, " %.3f (%d/%d) |\n", r.rate(), r.successes, r.trials);
    out << buf;
  }
  return out.str();
}

}  // namespace isagrasp
