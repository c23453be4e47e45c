#include <benchmark/benchmark.h>

#include <map>

#include "gridgin/contingency.hpp"
#include "gridgin/flow.hpp"
#include "gridgin/gin.hpp"
#include "gridgin/synth.hpp"

using namespace gridgin;

namespace {

const LabeledSample& sample_of(int nodes_hint) {
  static std::map<int, LabeledSample> cache;
  auto it = cache.find(nodes_hint);
  if (it == cache.end()) {
    const auto locations = default_locations();
    const auto& p = nodes_hint < 50 ? locations[1] : locations[0];
    it = cache.emplace(nodes_hint, generate_grid(p, static_cast<std::uint64_t>(nodes_hint), std::nullopt)).first;
  }
  return it->second;
}

void BM_RadialFlow(benchmark::State& state) {
  const auto& s = sample_of(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(radial_flow(s.grid, s.grid.normally_open()));
  state.counters["nodes"] = static_cast<double>(s.grid.node_count());
}
BENCHMARK(BM_RadialFlow)->Arg(30)->Arg(80);

void BM_ClosedFlow(benchmark::State& state) {
  const auto& s = sample_of(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(closed_flow(s.grid));
  state.counters["nodes"] = static_cast<double>(s.grid.node_count());
}
BENCHMARK(BM_ClosedFlow)->Arg(30)->Arg(80);

void BM_ComputeFeatures(benchmark::State& state) {
  const auto& s = sample_of(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(compute_features(s.grid));
}
BENCHMARK(BM_ComputeFeatures)->Arg(30)->Arg(80);

void BM_LabelN1(benchmark::State& state) {
  const auto& s = sample_of(static_cast<int>(state.range(0)));
  N1Options o;
  o.stop_at_first_failure = true;
  for (auto _ : state) benchmark::DoNotOptimize(label_n1(s.grid, o).label);
  state.counters["nodes"] = static_cast<double>(s.grid.node_count());
}
BENCHMARK(BM_LabelN1)->Arg(30)->Arg(80)->Unit(benchmark::kMillisecond);

void BM_GinPredict(benchmark::State& state) {
  const auto& s = sample_of(80);
  GinConfig c;
  c.layers = static_cast<int>(state.range(0));
  const GinModel m(c);
  const GraphBatch b = make_graph(s.grid, m.scaler.apply(s.features));
  for (auto _ : state) benchmark::DoNotOptimize(m.predict(b));
}
BENCHMARK(BM_GinPredict)->Arg(5)->Arg(15)->Unit(benchmark::kMicrosecond);

void BM_GinTrainStep(benchmark::State& state) {
  const auto& s = sample_of(80);
  GinConfig c;
  c.layers = static_cast<int>(state.range(0));
  GinModel m(c);
  const GraphBatch one = make_graph(s.grid, m.scaler.apply(s.features));
  std::vector<const GraphBatch*> parts(8, &one);
  const GraphBatch batch = concat(parts);
  const std::vector<double> y(8, 1.0);
  auto params = m.parameters();
  auto adam = nn::make_adam(params);
  for (auto _ : state) {
    for (auto* p : params) p->zero_grad();
    nn::Tape t;
    t.backward(nn::bce_loss(t, m.forward(t, batch, nn::Mode::Train), y));
    nn::adam_step(params, adam);
  }
}
BENCHMARK(BM_GinTrainStep)->Arg(5)->Arg(15)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
