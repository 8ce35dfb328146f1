#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "spigot/decode.hpp"
#include "spigot/marginals.hpp"
#include "spigot/project.hpp"
#include "spigot/proxy.hpp"

namespace {

std::vector<double> normals(std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> v(count);
  for (double& x : v) x = d(rng);
  return v;
}

spigot::ArcScores tree_scores(int n) {
  const spigot::ArcIndexer idx(n, true);
  return spigot::ArcScores(idx, normals(idx.size(), static_cast<std::uint64_t>(n)));
}

spigot::SdpScores graph_scores(int n, int labels) {
  const spigot::LabeledArcIndexer idx(spigot::ArcIndexer(n, true), labels);
  return spigot::SdpScores(idx, normals(idx.base().size(), 1), normals(idx.size(), 2));
}

void BM_Eisner(benchmark::State& state) {
  const auto s = tree_scores(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(spigot::eisner_decode(s));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Eisner)->RangeMultiplier(2)->Range(8, 128)->Complexity(benchmark::oNCubed);

void BM_InsideOutside(benchmark::State& state) {
  const auto s = tree_scores(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(spigot::inside_outside(s));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_InsideOutside)->RangeMultiplier(2)->Range(8, 128)->Complexity(benchmark::oNCubed);

void BM_ProjectDep(benchmark::State& state) {
  const spigot::ArcIndexer idx(static_cast<int>(state.range(0)), true);
  const auto p = normals(idx.size(), 3);
  for (auto _ : state) benchmark::DoNotOptimize(spigot::project_dep(p, idx));
}
BENCHMARK(BM_ProjectDep)->RangeMultiplier(2)->Range(8, 128);

void BM_ProjectSdp(benchmark::State& state) {
  const spigot::LabeledArcIndexer idx(spigot::ArcIndexer(static_cast<int>(state.range(0)), true), 4);
  const auto p = normals(idx.base().size() + idx.size(), 4);
  for (auto _ : state) benchmark::DoNotOptimize(spigot::project_sdp(p, idx));
}
BENCHMARK(BM_ProjectSdp)->RangeMultiplier(2)->Range(8, 64);

void BM_TreeProxyBackward(benchmark::State& state) {
  const auto variant = static_cast<spigot::ProxyVariant>(state.range(1));
  const auto s = tree_scores(static_cast<int>(state.range(0)));
  const auto [z, tape] = spigot::forward(s, spigot::ProxyKind(variant, spigot::kTreeEta));
  const auto g = normals(z.size(), 5);
  for (auto _ : state) benchmark::DoNotOptimize(spigot::backward(tape, g));
  state.SetLabel(std::string(spigot::to_string(variant)));
}
BENCHMARK(BM_TreeProxyBackward)
    ->ArgsProduct({{16, 64},
                   {static_cast<long>(spigot::ProxyVariant::kSte), static_cast<long>(spigot::ProxyVariant::kSpigot),
                    static_cast<long>(spigot::ProxyVariant::kSa)}});

void BM_GraphSpigotBackward(benchmark::State& state) {
  const auto s = graph_scores(static_cast<int>(state.range(0)), 4);
  const auto [z, tape] = spigot::forward(s, spigot::ProxyKind(spigot::ProxyVariant::kSpigot, spigot::kGraphEta));
  const auto g = normals(z.size(), 6);
  for (auto _ : state) benchmark::DoNotOptimize(spigot::backward(tape, g));
}
BENCHMARK(BM_GraphSpigotBackward)->Arg(16)->Arg(32);

}  // namespace
BENCHMARK_MAIN();
