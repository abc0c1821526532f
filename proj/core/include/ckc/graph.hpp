#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ckc/text.hpp"

namespace ckc {

using NodeId = std::uint32_t;
using RelationId = std::uint32_t;

inline constexpr double kUnreachable = std::numeric_limits<double>::infinity();

struct CkgTriplet {
  std::string head;
  std::string relation;
  std::string tail;
  double weight = 0.0;
};

// Edge stored in its original direction head -> tail.
struct CkgEdge {
  NodeId head;
  NodeId tail;
  RelationId relation;
  double weight;
};

// One endpoint's view of an edge. `outgoing` is true when the viewing node
// is the edge head.
struct Incidence {
  NodeId other;
  std::uint32_t edge;
  bool outgoing;
};

struct GraphFilter {
  double min_weight = 1.0;
  std::size_t max_match_words = 4;
};

class CkgGraph {
 public:
  CkgGraph() = default;

  std::size_t num_nodes() const { return labels_.size(); }
  std::size_t num_edges() const { return edges_.size(); }
  std::size_t num_relations() const { return relations_.size(); }

  const std::string& label(NodeId id) const;
  std::optional<NodeId> find(std::string_view label) const;
  const std::vector<std::string>& labels() const { return labels_; }
  const std::string& relation(RelationId id) const { return relations_.at(id); }
  const std::vector<std::string>& relations() const { return relations_; }
  const std::vector<CkgEdge>& edges() const { return edges_; }
  std::span<const Incidence> incident(NodeId id) const;

  // All nodes sharing an edge with `id` in either direction, excluding `id`,
  // sorted ascending.
  std::vector<NodeId> neighbors(NodeId id) const;

  // Relation ids ranked by edge count (ties by name); the first `top` get
  // their own bucket, everything else shares bucket `top`.
  std::vector<std::uint32_t> relation_buckets(std::size_t top) const;

  // Greedy longest-match scan over lowercased tokens; windows of up to
  // `max_words` tokens are joined with '_' and looked up as node labels.
  std::vector<NodeId> extract_concepts(std::span<const std::string> tokens,
                                       std::size_t max_words = 4) const;

  std::string word_vocab_hash() const { return word_vocab_hash_; }
  std::string keyword_vocab_hash() const { return keyword_vocab_hash_; }

  // Versioned binary snapshot. load() rejects snapshots built against
  // different vocabularies when expected hashes are given.
  void save(std::ostream& out) const;
  void save(const std::filesystem::path& path) const;
  static CkgGraph load(std::istream& in, std::string_view expected_word_hash = {},
                       std::string_view expected_keyword_hash = {});
  static CkgGraph load(const std::filesystem::path& path, std::string_view expected_word_hash = {},
                       std::string_view expected_keyword_hash = {});

  // Build directly from already-filtered triplets. Self-loops are dropped and
  // duplicate (head, relation, tail) keep the largest weight.
  static CkgGraph from_triplets(std::span<const CkgTriplet> triplets);

 private:
  friend CkgGraph load_graph(std::istream&, const Vocab&, const KeywordVocab&, const GraphFilter&);
  void index();

  std::vector<std::string> labels_;
  std::unordered_map<std::string, NodeId> label_index_;
  std::vector<std::string> relations_;
  std::vector<CkgEdge> edges_;
  std::vector<std::uint32_t> adj_offsets_;
  std::vector<Incidence> adj_;
  std::string word_vocab_hash_;
  std::string keyword_vocab_hash_;
};

// Reads head<TAB>relation<TAB>tail<TAB>weight lines ('#' comments allowed)
// and keeps triplets with weight >= min_weight where one endpoint is a
// keyword and every word of the other endpoint is in the word vocabulary.
CkgGraph load_graph(std::istream& triplets, const Vocab& words, const KeywordVocab& keywords,
                    const GraphFilter& filter = {});
CkgGraph load_graph(const std::filesystem::path& triplets, const Vocab& words,
                    const KeywordVocab& keywords, const GraphFilter& filter = {});

// True iff the triplet passes the three CKG admission rules.
bool passes_filter(const CkgTriplet& t, const Vocab& words, const KeywordVocab& keywords,
                   const GraphFilter& filter = {});

// Shortest reciprocal-weight path lengths to one target node over the
// undirected view of the graph.
class DistanceMap {
 public:
  DistanceMap() = default;
  DistanceMap(NodeId target, std::vector<double> dist, std::vector<NodeId> next_hop);

  NodeId target() const { return target_; }
  // kUnreachable when no path exists.
  double at(NodeId node) const;
  bool reachable(NodeId node) const { return at(node) != kUnreachable; }
  std::size_t size() const { return dist_.size(); }
  // Next node on the deterministic shortest path from `node` towards the
  // target; nullopt at the target or when unreachable.
  std::optional<NodeId> next_hop(NodeId node) const;

 private:
  NodeId target_ = 0;
  std::vector<double> dist_;
  std::vector<NodeId> next_;
};

DistanceMap distance_from_target(const CkgGraph& graph, NodeId target);

// Minimum reciprocal-weight path from source to target (both ends
// included), or nullopt when unreachable. Ties resolve towards smaller node
// ids.
std::optional<std::vector<NodeId>> shortest_path(const CkgGraph& graph, NodeId source, NodeId target);

}  // namespace ckc
