// Acceptance run: one PASS/FAIL line per headline criterion, then a summary.
// Exit status is the number of failed criteria (capped at 125).
//
//   acceptance [--only N]... [--config path]
//
// The default config is config/desk.json from the source tree.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "isagrasp/grasp_transfer.hpp"
#include "isagrasp/pipeline.hpp"
#include "isagrasp/retargeting.hpp"
#include "isagrasp/seeding.hpp"
#include "isagrasp/stability_oracle.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace isagrasp;
using isagrasp::testing::random_rotation;
using isagrasp::testing::random_unit;
using isagrasp::testing::random_vec;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// --- retargeting round trip ---------------------------------------------

Outcome retarget_round_trip() {
  HandDescription desc = HandDescription::default_hand();
  desc.scale_ratio = 1.0;
  std::mt19937_64 rng(2024);
  const auto t0 = Clock::now();
  int solved = 0;
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    HandPose pose;
    pose.base = {random_vec(rng, 0.3), random_rotation(rng)};
    for (int j = 0; j < kFingerJoints; ++j) {
      const JointLimit l = desc.limit(j);
      pose.fingers[j] = std::uniform_real_distribution<double>(l.lo, l.hi)(rng);
    }
    const HandKinematics k = forward_kinematics(desc, pose);
    DemoRecord demo;
    demo.human_fingertips = k.fingertips;
    demo.human_palm = k.palm;
    demo.object_center = pose.base.apply(Vec3(0.07, 0.0, 0.06));
    demo.object_pose = {demo.object_center, UnitQuaternion::identity()};
    RetargetOptions opts;
    opts.seed = static_cast<std::uint64_t>(i);
    const RetargetResult r = retarget(desc, demo, RetargetWeights{}, opts);
    solved += r.objective < 1e-6;
    worst = std::max(worst, r.objective);
  }
  const double secs = seconds_since(t0);
  return {solved >= 48 && secs < 60.0,
          fmt("%d/50 below 1e-6 (need 48), worst %.2e, %.1f s (limit 60)", solved, worst, secs)};
}

// --- gradient oracle -----------------------------------------------------

Outcome gradient_oracle() {
  const auto t0 = Clock::now();
  PolicyNet net = PolicyNet::initialized({{5, 6, 4}, 5}, 7);
  Rng rng(1);
  std::normal_distribution<double> n(0.0, 0.3);
  for (Eigen::Index i = 0; i < net.params().size(); ++i) net.params()(i) += n(rng);
  MatX x(4, kFeatureDim);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = 3.0 * n(rng);
  Grasp label;
  label.pregrasp.translation = Vec3(0.3, -0.2, 0.5);
  label.pregrasp.rotation = UnitQuaternion::from_axis_angle(Vec3(0.4, -0.7, 0.2));
  for (int j = 0; j < kFingerJoints; ++j) label.fingers[j] = 0.1 * j - 0.6;

  const Eigen::Index p = net.params().size();
  VecX grad = VecX::Zero(p);
  VecX scratch = VecX::Zero(p);
  loss_and_gradient(net, x, label, grad);
  const double h = 1e-4;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < p; ++i) {
    const double v = net.params()(i);
    net.params()(i) = v + h;
    const double up = loss_and_gradient(net, x, label, scratch).total;
    net.params()(i) = v - h;
    const double down = loss_and_gradient(net, x, label, scratch).total;
    net.params()(i) = v;
    const double fd = (up - down) / (2.0 * h);
    // absolute floor so exactly-zero entries do not divide by zero
    worst = std::max(worst, std::abs(grad(i) - fd) / std::max({std::abs(grad(i)), std::abs(fd), 1e-6}));
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-3 && secs < 10.0,
          fmt("max relative error %.2e over %ld parameters (limit 1e-3), %.2f s", worst, static_cast<long>(p), secs)};
}

// --- force closure -------------------------------------------------------

Outcome closure_equivalence() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> mu(0.2, 1.0);
  std::uniform_real_distribution<double> tilt(0.0, 0.9);
  int agree = 0, counted = 0, closures = 0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Contact> cs;
    for (int i = 0; i < 1 + trial % 4; ++i) {
      const Vec3 p = random_unit(rng) * 0.04;
      cs.push_back({p, (-p.normalized() + tilt(rng) * random_unit(rng)).normalized(), i});
    }
    const WrenchSet ws = contact_wrenches(cs, Vec3::Zero(), 0.04, mu(rng), Vec3::UnitZ(), 8, 0.005);
    const double eps = signed_quality(ws);
    if (std::abs(eps) < 1e-4) continue;
    ++counted;
    closures += eps > 0;
    agree += (eps > 0) == isagrasp::testing::closure_by_directions(ws.w, 500, 1000 + trial);
  }
  const double secs = seconds_since(t0);
  return {agree >= 0.98 * counted && counted > 0 && secs < 120.0,
          fmt("%d/%d agree (need 98%%), %d closures, %d near-boundary excluded, %.1f s", agree, counted, closures,
              200 - counted, secs)};
}

// --- transfer exactness --------------------------------------------------

Outcome transfer_exactness() {
  std::mt19937_64 rng(21);
  double worst = 0.0;
  int cases = 0;
  for (const auto& shape : default_templates()) {
    const ShapeInstance src = sample_instance(shape, 7);
    for (int n : {1, 5, 20}) {
      for (int trial = 0; trial < 5; ++trial) {
        Grasp g;
        g.pregrasp.translation = src.center() + random_unit(rng) * 0.07;
        g.pregrasp.rotation = top_down_orientation();
        const TransferContext ctx = build_context(src, g, n);
        const Grasp same = transfer_grasp(ctx, src, src, g);
        worst = std::max(worst, (same.pregrasp.translation - g.pregrasp.translation).norm());

        const Vec3 v = random_vec(rng, 0.3);
        SurfaceSamples moved = src.surface();
        for (auto& q : moved.points) q += v;
        const Grasp shifted = transfer_grasp(ctx, src.surface(), moved, g);
        worst = std::max(worst, (shifted.pregrasp.translation - (g.pregrasp.translation + v)).norm());
        cases += 2;
      }
    }
  }
  return {worst < 1e-9, fmt("max translation error %.2e m over %d transfers (limit 1e-9)", worst, cases)};
}

// --- refinement rate of transferred versus random initial grasps ---------

Outcome refinement_direction(const PipelineConfig& cfg) {
  const auto t0 = Clock::now();
  const InitComparison cmp = compare_initializations(cfg);
  const double secs = seconds_since(t0);
  const double a = cmp.transferred.rate().value_or(0.0);
  const double b = cmp.random.rate().value_or(0.0);
  return {a - b >= 0.20 && secs < 600.0,
          fmt("transferred %.1f%% (%d/%d) vs random %.1f%% (%d/%d), gap %.1f pp (need 20), %.0f s (limit 600)",
              100 * a, cmp.transferred.refined, cmp.transferred.attempted, 100 * b, cmp.random.refined,
              cmp.random.attempted, 100 * (a - b), secs)};
}

// --- dataset, policy, evaluation -----------------------------------------

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct DatasetRun {
  GenerateResult gen;
  double generate_seconds = 0.0;
};

Outcome policy_direction(const PipelineConfig& cfg, const DatasetRun& run) {
  const auto t0 = Clock::now();
  const TrainResult trained = train_policy(cfg, run.gen.records);
  const double train_secs = seconds_since(t0);
  const EvalReport report = run_eval(cfg, &trained.net);
  const double total = run.generate_seconds + seconds_since(t0);
  const double p = report.row("policy").rate();
  const double r = report.row("random").rate();
  const double h = report.row("heuristic").rate();
  std::fputs(render_report(report).c_str(), stdout);
  return {p > r && p > h && r < 0.15 && total < 1800.0,
          fmt("policy %.3f vs random %.3f and heuristic %.3f (random limit 0.15); %zu records, %d epochs, "
              "train %.0f s, total %.0f s (limit 1800)",
              p, r, h, run.gen.records.size(), cfg.train.epochs, train_secs, total)};
}

Outcome determinism(const PipelineConfig& cfg, const DatasetRun& run) {
  const auto dir = std::filesystem::temp_directory_path();
  const auto a = dir / "isagrasp_acceptance_a.jsonl";
  const auto b = dir / "isagrasp_acceptance_b.jsonl";
  write_dataset(a, run.gen.records);
  write_dataset(b, generate_dataset(cfg).records);
  const std::string sa = slurp(a);
  const std::string sb = slurp(b);
  std::filesystem::remove(a);
  std::filesystem::remove(b);
  return {!sa.empty() && sa == sb, fmt("%zu bytes, %s", sa.size(), sa == sb ? "identical" : "differ")};
}

Outcome self_certification(const PipelineConfig& cfg, const DatasetRun& run) {
  // Round trip through the file format first, as a consumer would see it.
  const auto path = std::filesystem::temp_directory_path() / "isagrasp_acceptance_cert.jsonl";
  write_dataset(path, run.gen.records);
  const auto records = read_dataset(path);
  std::filesystem::remove(path);
  int ok = 0;
  std::string first;
  for (const auto& r : records) {
    const auto why = verify_record(r, cfg);
    if (why.empty()) {
      ++ok;
    } else if (first.empty()) {
      first = "; record " + std::to_string(r.id) + ": " + why.front();
    }
  }
  const int n = static_cast<int>(records.size());
  return {n > 0 && ok == n, fmt("%d/%d records re-verify%s", ok, n, first.c_str())};
}

// --- invariant suites ----------------------------------------------------

Outcome invariant_suites() {
  const std::string binaries = ISAGRASP_TEST_BINARIES;
  int failed = 0, total = 0;
  std::string failures;
  std::stringstream ss(binaries);
  for (std::string bin; std::getline(ss, bin, ',');) {
    if (bin.empty()) continue;
    ++total;
    const std::string cmd = "\"" + bin + "\" --minimal > /dev/null 2>&1";
    if (std::system(cmd.c_str()) != 0) {
      ++failed;
      failures += " " + std::filesystem::path(bin).filename().string();
    }
  }
  return {failed == 0 && total > 0,
          fmt("%d/%d module suites pass%s%s", total - failed, total, failed ? "; failing:" : "", failures.c_str())};
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> only;
  std::filesystem::path config_path = std::filesystem::path(ISAGRASP_SOURCE_DIR) / "config" / "desk.json";
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) {
      only.push_back(std::atoi(argv[++i]));
    } else if (a == "--config" && i + 1 < argc) {
      config_path = argv[++i];
    } else {
      std::fprintf(stderr, "usage: acceptance [--only N]... [--config path]\n");
      return 2;
    }
  }
  const PipelineConfig cfg = PipelineConfig::load(config_path);

  std::optional<DatasetRun> dataset;
  auto data = [&]() -> const DatasetRun& {
    if (!dataset) {
      const auto t0 = Clock::now();
      dataset.emplace();
      dataset->gen = generate_dataset(cfg);
      dataset->generate_seconds = seconds_since(t0);
    }
    return *dataset;
  };

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"retargeting round trip", retarget_round_trip},
      {"gradient oracle", gradient_oracle},
      {"force-closure equivalence", closure_equivalence},
      {"transfer exactness", transfer_exactness},
      {"transferred vs random refinement", [&] { return refinement_direction(cfg); }},
      {"policy vs baselines", [&] { return policy_direction(cfg, data()); }},
      {"dataset determinism", [&] { return determinism(cfg, data()); }},
      {"dataset self-certification", [&] { return self_certification(cfg, data()); }},
      {"invariant suites", invariant_suites},
  };

  int failed = 0, run = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    ++run;
    failed += !o.pass;
    std::printf("[%s] %d %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%d criteria pass\n", run - failed, run);
  return std::min(failed, 125);
}
