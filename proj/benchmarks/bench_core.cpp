#include <benchmark/benchmark.h>

#include "copaint/loss.hpp"
#include "copaint/metrics.hpp"
#include "copaint/planner.hpp"
#include "copaint/render.hpp"
#include "test_support.hpp"

using namespace copaint;

namespace {

Image marker_target(int size, std::uint64_t seed) {
  return render_plan(testing::random_plan(seed, 20, PaintingSetting::marker()), Canvas(size, size), Author::robot)
      .pixels();
}

void BM_RenderStroke(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const PaintingSetting s = PaintingSetting::marker();
  const StrokePlan plan = testing::random_plan(1, 64, s);
  const Canvas blank(size, size);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(render_stroke(blank, plan.strokes[i++ % plan.strokes.size()], s, Author::robot));
  }
}
BENCHMARK(BM_RenderStroke)->Arg(128)->Arg(256)->Arg(512);

void BM_LossTotal(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const LossField field(marker_target(size, 2), LossConfig{});
  const Canvas canvas(size, size);
  for (auto _ : state) benchmark::DoNotOptimize(field.total(canvas));
}
BENCHMARK(BM_LossTotal)->Arg(128)->Arg(256)->Arg(512);

// A typical stroke footprint: 32x32 pixels.
void BM_LossLocal(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const LossField field(marker_target(size, 3), LossConfig{});
  const Canvas canvas(size, size);
  const PixelRect rect{size / 2, size / 2, size / 2 + 32, size / 2 + 32};
  for (auto _ : state) benchmark::DoNotOptimize(field.local(canvas, rect));
}
BENCHMARK(BM_LossLocal)->Arg(128)->Arg(256)->Arg(512);

void BM_Plan(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const Image target = marker_target(size, 4);
  PaintingSetting s = PaintingSetting::marker();
  s.stroke_budget = static_cast<int>(state.range(1));
  for (auto _ : state) {
    benchmark::DoNotOptimize(plan_strokes(target, Canvas(size, size), s, PlannerConfig{}, LossConfig{}));
  }
}
BENCHMARK(BM_Plan)->Args({128, 10})->Args({256, 35})->Unit(benchmark::kMillisecond);

void BM_DeltaSem(benchmark::State& state) {
  const Image a = marker_target(256, 5), b = marker_target(256, 6);
  for (auto _ : state) benchmark::DoNotOptimize(delta_sem(a, b));
}
BENCHMARK(BM_DeltaSem);

}  // namespace

BENCHMARK_MAIN();
