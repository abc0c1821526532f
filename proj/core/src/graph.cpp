#include "ckc/graph.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <queue>
#include <set>
#include <sstream>
#include <tuple>

#include "ckc/errors.hpp"

namespace ckc {
namespace {

constexpr char kMagic[8] = {'C', 'K', 'C', 'G', 'R', 'A', 'P', 'H'};
constexpr std::uint32_t kSnapshotVersion = 1;

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

bool all_words_known(std::string_view label, const Vocab& words) {
  for (auto w : split(label, '_')) {
    if (w.empty() || !words.contains(w)) return false;
  }
  return true;
}

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ParseError("truncated graph snapshot", 0);
  return v;
}

void write_str(std::ostream& out, const std::string& s) {
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_str(std::istream& in) {
  auto n = read_pod<std::uint32_t>(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw ParseError("truncated graph snapshot", 0);
  return s;
}

}  // namespace

// ---------------------------------------------------------------- CkgGraph

const std::string& CkgGraph::label(NodeId id) const {
  if (id >= labels_.size()) throw BoundsError("node id " + std::to_string(id) + " out of range");
  return labels_[id];
}

std::optional<NodeId> CkgGraph::find(std::string_view label) const {
  auto it = label_index_.find(std::string(label));
  if (it == label_index_.end()) return std::nullopt;
  return it->second;
}

std::span<const Incidence> CkgGraph::incident(NodeId id) const {
  if (id >= labels_.size()) throw BoundsError("node id " + std::to_string(id) + " out of range");
  return std::span<const Incidence>(adj_).subspan(adj_offsets_[id], adj_offsets_[id + 1] - adj_offsets_[id]);
}

std::vector<NodeId> CkgGraph::neighbors(NodeId id) const {
  std::vector<NodeId> out;
  for (const auto& inc : incident(id)) {
    if (inc.other != id) out.push_back(inc.other);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<std::uint32_t> CkgGraph::relation_buckets(std::size_t top) const {
  std::vector<std::size_t> counts(relations_.size(), 0);
  for (const auto& e : edges_) ++counts[e.relation];
  std::vector<RelationId> order(relations_.size());
  for (RelationId r = 0; r < order.size(); ++r) order[r] = r;
  std::sort(order.begin(), order.end(), [&](RelationId a, RelationId b) {
    return counts[a] != counts[b] ? counts[a] > counts[b] : relations_[a] < relations_[b];
  });
  std::vector<std::uint32_t> bucket(relations_.size(), static_cast<std::uint32_t>(top));
  for (std::size_t i = 0; i < order.size() && i < top; ++i) bucket[order[i]] = static_cast<std::uint32_t>(i);
  return bucket;
}

std::vector<NodeId> CkgGraph::extract_concepts(std::span<const std::string> tokens,
                                               std::size_t max_words) const {
  std::vector<NodeId> out;
  std::size_t i = 0;
  while (i < tokens.size()) {
    std::size_t matched = 0;
    NodeId node = 0;
    const std::size_t longest = std::min(max_words, tokens.size() - i);
    for (std::size_t len = longest; len >= 1; --len) {
      std::string key = tokens[i];
      for (std::size_t j = 1; j < len; ++j) key += "_" + tokens[i + j];
      if (auto n = find(key)) {
        matched = len;
        node = *n;
        break;
      }
    }
    if (matched) {
      out.push_back(node);
      i += matched;
    } else {
      ++i;
    }
  }
  return out;
}

void CkgGraph::index() {
  label_index_.clear();
  for (NodeId i = 0; i < labels_.size(); ++i) label_index_.emplace(labels_[i], i);
  adj_offsets_.assign(labels_.size() + 1, 0);
  for (const auto& e : edges_) {
    ++adj_offsets_[e.head + 1];
    ++adj_offsets_[e.tail + 1];
  }
  for (std::size_t i = 1; i < adj_offsets_.size(); ++i) adj_offsets_[i] += adj_offsets_[i - 1];
  adj_.assign(edges_.size() * 2, Incidence{});
  std::vector<std::uint32_t> fill(adj_offsets_.begin(), adj_offsets_.end() - 1);
  for (std::uint32_t k = 0; k < edges_.size(); ++k) {
    const auto& e = edges_[k];
    adj_[fill[e.head]++] = {e.tail, k, true};
    adj_[fill[e.tail]++] = {e.head, k, false};
  }
}

CkgGraph CkgGraph::from_triplets(std::span<const CkgTriplet> triplets) {
  std::map<std::tuple<std::string, std::string, std::string>, double> unique;
  std::set<std::string> labels;
  std::set<std::string> relations;
  for (const auto& t : triplets) {
    if (t.head == t.tail) continue;
    auto key = std::make_tuple(t.head, t.relation, t.tail);
    auto [it, inserted] = unique.emplace(key, t.weight);
    if (!inserted) it->second = std::max(it->second, t.weight);
    labels.insert(t.head);
    labels.insert(t.tail);
    relations.insert(t.relation);
  }
  CkgGraph g;
  g.labels_.assign(labels.begin(), labels.end());
  g.relations_.assign(relations.begin(), relations.end());
  std::unordered_map<std::string, RelationId> rel_index;
  for (RelationId r = 0; r < g.relations_.size(); ++r) rel_index.emplace(g.relations_[r], r);
  g.index();
  g.edges_.reserve(unique.size());
  for (const auto& [key, w] : unique) {
    const auto& [h, r, t] = key;
    g.edges_.push_back({*g.find(h), *g.find(t), rel_index.at(r), w});
  }
  g.index();
  return g;
}

void CkgGraph::save(std::ostream& out) const {
  out.write(kMagic, sizeof(kMagic));
  write_pod(out, kSnapshotVersion);
  write_str(out, word_vocab_hash_);
  write_str(out, keyword_vocab_hash_);
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(relations_.size()));
  for (const auto& r : relations_) write_str(out, r);
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(labels_.size()));
  for (const auto& l : labels_) write_str(out, l);
  write_pod<std::uint64_t>(out, edges_.size());
  for (const auto& e : edges_) {
    write_pod(out, e.head);
    write_pod(out, e.tail);
    write_pod(out, e.relation);
    write_pod(out, e.weight);
  }
}

void CkgGraph::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write graph snapshot " + path.string());
  save(out);
}

CkgGraph CkgGraph::load(std::istream& in, std::string_view expected_word_hash,
                        std::string_view expected_keyword_hash) {
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(std::begin(magic), std::end(magic), std::begin(kMagic)))
    throw ParseError("not a graph snapshot (bad magic)", 0);
  if (auto v = read_pod<std::uint32_t>(in); v != kSnapshotVersion)
    throw ParseError("unsupported graph snapshot version " + std::to_string(v), 0);
  CkgGraph g;
  g.word_vocab_hash_ = read_str(in);
  g.keyword_vocab_hash_ = read_str(in);
  if (!expected_word_hash.empty() && g.word_vocab_hash_ != expected_word_hash)
    throw ConfigError("stale graph snapshot: word vocabulary changed");
  if (!expected_keyword_hash.empty() && g.keyword_vocab_hash_ != expected_keyword_hash)
    throw ConfigError("stale graph snapshot: keyword vocabulary changed");
  g.relations_.resize(read_pod<std::uint32_t>(in));
  for (auto& r : g.relations_) r = read_str(in);
  g.labels_.resize(read_pod<std::uint32_t>(in));
  for (auto& l : g.labels_) l = read_str(in);
  g.edges_.resize(read_pod<std::uint64_t>(in));
  for (auto& e : g.edges_) {
    e.head = read_pod<NodeId>(in);
    e.tail = read_pod<NodeId>(in);
    e.relation = read_pod<RelationId>(in);
    e.weight = read_pod<double>(in);
    if (e.head >= g.labels_.size() || e.tail >= g.labels_.size() || e.relation >= g.relations_.size())
      throw ParseError("graph snapshot edge out of range", 0);
  }
  g.index();
  return g;
}

CkgGraph CkgGraph::load(const std::filesystem::path& path, std::string_view expected_word_hash,
                        std::string_view expected_keyword_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("missing graph snapshot " + path.string());
  return load(in, expected_word_hash, expected_keyword_hash);
}

// ---------------------------------------------------------------- loading

bool passes_filter(const CkgTriplet& t, const Vocab& words, const KeywordVocab& keywords,
                   const GraphFilter& filter) {
  if (!(t.weight >= filter.min_weight)) return false;
  if (t.head == t.tail) return false;
  const bool head_kw = keywords.contains(t.head);
  const bool tail_kw = keywords.contains(t.tail);
  return (head_kw && all_words_known(t.tail, words)) || (tail_kw && all_words_known(t.head, words));
}

CkgGraph load_graph(std::istream& in, const Vocab& words, const KeywordVocab& keywords,
                    const GraphFilter& filter) {
  if (words.size() <= Vocab::kNumSpecials || keywords.empty())
    throw ConfigError("graph loading needs nonempty word and keyword vocabularies");
  std::vector<CkgTriplet> kept;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto fields = split(line, '\t');
    if (fields.size() != 4) throw ParseError("triplet record needs 4 tab-separated fields", lineno);
    CkgTriplet t{std::string(fields[0]), std::string(fields[1]), std::string(fields[2]), 0.0};
    auto w = fields[3];
    auto [ptr, ec] = std::from_chars(w.data(), w.data() + w.size(), t.weight);
    if (ec != std::errc() || ptr != w.data() + w.size()) throw ParseError("bad triplet weight '" + std::string(w) + "'", lineno);
    if (t.head.empty() || t.tail.empty() || t.relation.empty()) throw ParseError("empty triplet field", lineno);
    if (passes_filter(t, words, keywords, filter)) kept.push_back(std::move(t));
  }
  CkgGraph g = CkgGraph::from_triplets(kept);
  if (g.num_edges() == 0) throw ConfigError("no triplet survived filtering; the graph is empty");
  g.word_vocab_hash_ = words.fingerprint();
  g.keyword_vocab_hash_ = keywords.fingerprint();
  return g;
}

CkgGraph load_graph(const std::filesystem::path& path, const Vocab& words, const KeywordVocab& keywords,
                    const GraphFilter& filter) {
  std::ifstream in(path);
  if (!in) throw ConfigError("missing triplet file " + path.string());
  return load_graph(in, words, keywords, filter);
}

// ---------------------------------------------------------------- distances

DistanceMap::DistanceMap(NodeId target, std::vector<double> dist, std::vector<NodeId> next_hop)
    : target_(target), dist_(std::move(dist)), next_(std::move(next_hop)) {}

double DistanceMap::at(NodeId node) const {
  if (node >= dist_.size()) throw BoundsError("node id " + std::to_string(node) + " out of range");
  return dist_[node];
}

std::optional<NodeId> DistanceMap::next_hop(NodeId node) const {
  if (node == target_ || !reachable(node)) return std::nullopt;
  return next_[node];
}

DistanceMap distance_from_target(const CkgGraph& graph, NodeId target) {
  const std::size_t n = graph.num_nodes();
  if (target >= n) throw BoundsError("target node " + std::to_string(target) + " out of range");
  std::vector<double> dist(n, kUnreachable);
  std::vector<NodeId> next(n, target);
  std::vector<bool> settled(n, false);
  using Item = std::pair<double, NodeId>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  dist[target] = 0.0;
  heap.emplace(0.0, target);
  const auto& edges = graph.edges();
  while (!heap.empty()) {
    auto [d, u] = heap.top();
    heap.pop();
    if (settled[u]) continue;
    settled[u] = true;
    for (const auto& inc : graph.incident(u)) {
      const NodeId v = inc.other;
      if (settled[v]) continue;
      const double cand = d + 1.0 / edges[inc.edge].weight;
      if (cand < dist[v] || (cand == dist[v] && u < next[v])) {
        const bool improved = cand < dist[v];
        dist[v] = cand;
        next[v] = u;
        if (improved) heap.emplace(cand, v);
      }
    }
  }
  return DistanceMap(target, std::move(dist), std::move(next));
}

std::optional<std::vector<NodeId>> shortest_path(const CkgGraph& graph, NodeId source, NodeId target) {
  if (source >= graph.num_nodes()) throw BoundsError("source node out of range");
  auto dmap = distance_from_target(graph, target);
  if (!dmap.reachable(source)) return std::nullopt;
  std::vector<NodeId> path{source};
  NodeId cur = source;
  while (auto hop = dmap.next_hop(cur)) {
    cur = *hop;
    path.push_back(cur);
  }
  return path;
}

}  // namespace ckc
