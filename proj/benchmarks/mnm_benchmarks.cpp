#include <benchmark/benchmark.h>

#include "mnm/block.hpp"
#include "mnm/golfer.hpp"
#include "mnm/kmeans.hpp"
#include "mnm/loss.hpp"
#include "mnm/ops.hpp"
#include "mnm/scene.hpp"
#include "mnm/train.hpp"

using namespace mnm;

static void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Matrix a = uniform_matrix(n, n, 1.0, rng);
  const Matrix b = uniform_matrix(n, n, 1.0, rng);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(16)->Arg(64)->Arg(256);

static void BM_FeBlockForwardBackward(benchmark::State& state) {
  block::BlockConfig c;
  c.d = 64;
  c.heads = 4;
  c.with_query = true;
  Rng rng(2);
  block::BlockParams p = block::init_block(c, rng);
  const Matrix tokens = uniform_matrix(20, 64, 1.0, rng);
  const Matrix context = uniform_matrix(1, 64, 1.0, rng);
  const MaskBits mask(20, true);
  const Matrix ones(20, 64, 1.0);
  for (auto _ : state) {
    Tape t;
    const Var x = t.constant(tokens);
    const auto out = block::mnm_query(t, x, t.constant(context), mask, p);
    t.backward(dot_const(t, out.tokens, ones));
    benchmark::DoNotOptimize(t.grad(x));
  }
}
BENCHMARK(BM_FeBlockForwardBackward);

static void BM_SceneForward(benchmark::State& state) {
  scene::GeneratorConfig g;
  Rng rng(3);
  const scene::Scene s = scene::generate_synthetic_scene(g, rng);
  const golfer::ModelParams params = golfer::init_model(golfer::GolferConfig{});
  const auto goal = scene::make_goal_conditioning(s.future, std::nullopt, scene::Placement::AgentsSet);
  for (auto _ : state) benchmark::DoNotOptimize(golfer::forward(s, &goal, params));
}
BENCHMARK(BM_SceneForward)->Unit(benchmark::kMillisecond);

static void BM_TrainStep(benchmark::State& state) {
  scene::GeneratorConfig g;
  Rng rng(4);
  const scene::Scene s = scene::generate_synthetic_scene(g, rng);
  golfer::ModelParams params = golfer::init_model(golfer::GolferConfig{});
  const auto refs = train::collect_parameters(params);
  train::OptimizerState opt;
  for (auto _ : state) {
    const auto goal = scene::apply_goal_masking(s.future, rng, 0.85);
    benchmark::DoNotOptimize(train::train_step(params, refs, opt, s, goal, 1.0));
  }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

static void BM_WeightedKMeans(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(5);
  ensemble::WeightedTrajectorySet set;
  for (std::size_t i = 0; i < n; ++i) {
    set.trajectories.push_back(uniform_matrix(16, 2, 30.0, rng));
    set.weights.push_back(rng.uniform(0.01, 1.0));
  }
  for (auto _ : state) {
    Rng krng(6);
    benchmark::DoNotOptimize(ensemble::weighted_kmeans(set, 6, krng));
  }
}
BENCHMARK(BM_WeightedKMeans)->Arg(18)->Arg(60);

BENCHMARK_MAIN();
