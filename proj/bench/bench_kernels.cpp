// Serial reference versus OpenMP version of each parallel kernel.
// Run with OMP_NUM_THREADS set to compare thread counts.

#include <benchmark/benchmark.h>

#include "isagrasp/baselines.hpp"
#include "isagrasp/policy.hpp"
#include "isagrasp/refinement.hpp"
#include "isagrasp/seeding.hpp"

using namespace isagrasp;

namespace {

const std::vector<ShapeInstance>& instances() {
  static const std::vector<ShapeInstance> v = [] {
    std::vector<ShapeInstance> out;
    const auto shapes = default_templates();
    for (int i = 0; i < 8; ++i) out.push_back(sample_instance(shapes[i % shapes.size()], derive_seed(5, {std::uint64_t(i)})));
    return out;
  }();
  return v;
}

std::vector<const ShapeInstance*> instance_ptrs() {
  std::vector<const ShapeInstance*> p;
  for (const auto& s : instances()) p.push_back(&s);
  return p;
}

std::vector<Grasp> heuristic_grasps() {
  std::vector<Grasp> g;
  for (const auto& s : instances()) g.push_back(heuristic_grasp(s));
  return g;
}

template <auto Fps>
void BM_fps(benchmark::State& st) {
  const auto& pts = instances().front().points();
  for (auto _ : st) benchmark::DoNotOptimize(Fps(pts, 1024, 3));
}

template <auto Refine>
void BM_batch_refine(benchmark::State& st) {
  std::vector<RefineItem> items;
  const auto g = heuristic_grasps();
  for (std::size_t i = 0; i < g.size(); ++i) items.push_back({&instances()[i], g[i]});
  RefineOptions o;
  o.draws = 4;
  for (auto _ : st) benchmark::DoNotOptimize(Refine(HandDescription::default_hand(), items, 9, 1, o));
}

template <auto Grad>
void BM_batch_gradient(benchmark::State& st) {
  std::vector<TrainSample> data;
  for (const auto& s : instances()) data.push_back({build_features(s, FeatureFrame::canonical(), 1024, 1), heuristic_grasp(s)});
  const PolicyNet net = PolicyNet::initialized({}, 4);
  std::vector<int> items;
  std::vector<double> angles;
  for (int k = 0; k < 32; ++k) {
    items.push_back(k % static_cast<int>(data.size()));
    angles.push_back(0.1 * k);
  }
  for (auto _ : st) benchmark::DoNotOptimize(Grad(net, data, items, angles));
}

template <auto Eval>
void BM_evaluate_grasps(benchmark::State& st) {
  const auto ptrs = instance_ptrs();
  const auto g = heuristic_grasps();
  EvalOptions o;
  for (auto _ : st) benchmark::DoNotOptimize(Eval(HandDescription::default_hand(), ptrs, g, o));
}

}  // namespace

BENCHMARK(BM_fps<farthest_point_sample_serial>)->Name("fps/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_fps<farthest_point_sample>)->Name("fps/omp")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_batch_refine<batch_refine_serial>)->Name("batch_refine/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_batch_refine<batch_refine>)->Name("batch_refine/omp")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_batch_gradient<batch_gradient_serial>)->Name("batch_gradient/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_batch_gradient<batch_gradient>)->Name("batch_gradient/omp")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_evaluate_grasps<evaluate_grasps_serial>)->Name("evaluate_grasps/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_evaluate_grasps<evaluate_grasps>)->Name("evaluate_grasps/omp")->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
