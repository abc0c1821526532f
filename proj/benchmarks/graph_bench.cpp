#include <benchmark/benchmark.h>

#include <random>
#include <string>

#include "ckc/graph.hpp"

namespace {

ckc::CkgGraph random_graph(std::size_t nodes, std::size_t edges, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, nodes - 1);
  std::uniform_real_distribution<double> weight(1.0, 10.0);
  std::vector<ckc::CkgTriplet> triplets;
  triplets.reserve(edges + nodes);
  // a spanning chain keeps everything reachable
  for (std::size_t i = 1; i < nodes; ++i)
    triplets.push_back({"n" + std::to_string(i - 1), "RelatedTo", "n" + std::to_string(i), weight(rng)});
  for (std::size_t e = 0; e < edges; ++e)
    triplets.push_back({"n" + std::to_string(pick(rng)), "RelatedTo", "n" + std::to_string(pick(rng)), weight(rng)});
  return ckc::CkgGraph::from_triplets(triplets);
}

void BM_DistanceFromTarget(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto g = random_graph(n, 4 * n, 7);
  ckc::NodeId target = 0;
  for (auto _ : state) {
    auto d = ckc::distance_from_target(g, target);
    benchmark::DoNotOptimize(d);
    target = (target + 1) % g.num_nodes();
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(g.num_edges()));
}
BENCHMARK(BM_DistanceFromTarget)->RangeMultiplier(4)->Range(256, 16384);

void BM_ShortestPath(benchmark::State& state) {
  const auto g = random_graph(4096, 16384, 11);
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<ckc::NodeId> pick(0, static_cast<ckc::NodeId>(g.num_nodes() - 1));
  for (auto _ : state) {
    auto p = ckc::shortest_path(g, pick(rng), pick(rng));
    benchmark::DoNotOptimize(p);
  }
}
BENCHMARK(BM_ShortestPath);

}  // namespace
