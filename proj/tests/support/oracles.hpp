#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ckc/corpus.hpp"
#include "ckc/graph.hpp"
#include "ckc/metrics.hpp"
#include "ckc/synthetic.hpp"

namespace ckc::testing {

// Random multigraph over "n0".."n{k-1}" with weights uniform in [1, 10].
struct RandomGraph {
  std::vector<CkgTriplet> triplets;
  CkgGraph graph;
};
RandomGraph random_graph(std::mt19937_64& rng, std::size_t max_nodes = 8, double edge_prob = 0.35);

// Minimum reciprocal-weight sum over every simple path to `target`,
// accumulated from the target outwards.
std::vector<double> brute_force_distances(const CkgGraph& graph, NodeId target);

// All-pairs reciprocal-weight distances.
std::vector<std::vector<double>> floyd_warshall(const CkgGraph& graph);

// Metric definitions written without the library's helpers.
double oracle_recall_at_k(const std::vector<std::uint32_t>& ranking, const std::vector<std::uint32_t>& gold,
                          std::size_t k);
double oracle_precision_at_1(const std::vector<std::uint32_t>& ranking, const std::vector<std::uint32_t>& gold);
double oracle_reciprocal_rank(const std::vector<std::uint32_t>& ranking, std::uint32_t gold);

// Five fruit keywords and two concept nodes (seven graph nodes).
SyntheticCorpus toy_corpus();
Resources build_from(const SyntheticCorpus& corpus);
Resources toy_resources();

// Twenty distinct candidate texts over the toy vocabulary.
std::vector<std::string> toy_candidates();

// Writes the corpus to a fresh temporary directory and returns it.
std::string temp_dir(const std::string& tag);

}  // namespace ckc::testing
