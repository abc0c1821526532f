#include "ckc/layers.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "ckc/errors.hpp"

namespace ckc {
namespace {

Parameter& make(ParamStore& s, const std::string& name, std::size_t r, std::size_t c, Rng& rng) {
  return s.add(name, uniform_matrix(r, c, kRecurrentInitBound, rng));
}

Parameter& zeros(ParamStore& s, const std::string& name, std::size_t c) { return s.add(name, Matrix(1, c)); }

// Hidden update given precomputed input projections (each m x hidden).
Var gru_step(Tape& t, const GruOnTape& g, Var xz, Var xr, Var xh, Var h) {
  auto z = ad::sigmoid(t, ad::add(t, xz, ad::matmul(t, h, g.U_z)));
  auto r = ad::sigmoid(t, ad::add(t, xr, ad::matmul(t, h, g.U_r)));
  auto c = ad::tanh(t, ad::add(t, xh, ad::matmul(t, ad::mul(t, r, h), g.U_h)));
  return ad::add(t, ad::mul(t, ad::one_minus(t, z), h), ad::mul(t, z, c));
}

}  // namespace

GruParams GruParams::create(ParamStore& store, const std::string& prefix, std::size_t input, std::size_t hidden,
                            Rng& rng) {
  GruParams p;
  p.input = input;
  p.hidden = hidden;
  p.W_z = &make(store, prefix + ".W_z", input, hidden, rng);
  p.U_z = &make(store, prefix + ".U_z", hidden, hidden, rng);
  p.b_z = &zeros(store, prefix + ".b_z", hidden);
  p.W_r = &make(store, prefix + ".W_r", input, hidden, rng);
  p.U_r = &make(store, prefix + ".U_r", hidden, hidden, rng);
  p.b_r = &zeros(store, prefix + ".b_r", hidden);
  p.W_h = &make(store, prefix + ".W_h", input, hidden, rng);
  p.U_h = &make(store, prefix + ".U_h", hidden, hidden, rng);
  p.b_h = &zeros(store, prefix + ".b_h", hidden);
  return p;
}

GruParams GruParams::attach(ParamStore& store, const std::string& prefix, std::size_t input, std::size_t hidden) {
  GruParams p;
  p.input = input;
  p.hidden = hidden;
  p.W_z = &store.get(prefix + ".W_z");
  p.U_z = &store.get(prefix + ".U_z");
  p.b_z = &store.get(prefix + ".b_z");
  p.W_r = &store.get(prefix + ".W_r");
  p.U_r = &store.get(prefix + ".U_r");
  p.b_r = &store.get(prefix + ".b_r");
  p.W_h = &store.get(prefix + ".W_h");
  p.U_h = &store.get(prefix + ".U_h");
  p.b_h = &store.get(prefix + ".b_h");
  return p;
}

GruOnTape::GruOnTape(Tape& t, const GruParams& p)
    : input(p.input),
      hidden(p.hidden),
      W_z(t.param(*p.W_z)),
      U_z(t.param(*p.U_z)),
      b_z(t.param(*p.b_z)),
      W_r(t.param(*p.W_r)),
      U_r(t.param(*p.U_r)),
      b_r(t.param(*p.b_r)),
      W_h(t.param(*p.W_h)),
      U_h(t.param(*p.U_h)),
      b_h(t.param(*p.b_h)) {}

Var gru_cell(Tape& t, const GruOnTape& g, Var x, Var h) {
  const auto& X = t.value(x);
  const auto& H = t.value(h);
  if (X.cols() != g.input || H.cols() != g.hidden || X.rows() != H.rows())
    throw DimensionError("gru_cell: x " + X.shape_string() + ", h " + H.shape_string() + " for a " +
                         std::to_string(g.input) + "->" + std::to_string(g.hidden) + " cell");
  auto xz = ad::add_row(t, ad::matmul(t, x, g.W_z), g.b_z);
  auto xr = ad::add_row(t, ad::matmul(t, x, g.W_r), g.b_r);
  auto xh = ad::add_row(t, ad::matmul(t, x, g.W_h), g.b_h);
  return gru_step(t, g, xz, xr, xh, h);
}

Var gru_sequence(Tape& t, const GruOnTape& g, Var inputs) {
  const auto& X = t.value(inputs);
  const std::size_t steps = X.rows();
  if (steps == 0) return t.constant(Matrix(0, g.hidden));
  if (X.cols() != g.input) throw DimensionError("gru_sequence: input width " + std::to_string(X.cols()));
  auto xz = ad::add_row(t, ad::matmul(t, inputs, g.W_z), g.b_z);
  auto xr = ad::add_row(t, ad::matmul(t, inputs, g.W_r), g.b_r);
  auto xh = ad::add_row(t, ad::matmul(t, inputs, g.W_h), g.b_h);
  Var h = t.constant(Matrix(1, g.hidden));
  std::vector<Var> states;
  states.reserve(steps);
  for (std::uint32_t s = 0; s < steps; ++s) {
    const std::uint32_t idx[1] = {s};
    h = gru_step(t, g, ad::rows(t, xz, idx), ad::rows(t, xr, idx), ad::rows(t, xh, idx), h);
    states.push_back(h);
  }
  return ad::concat_rows(t, states, g.hidden);
}

Var last_state(Tape& t, Var states, std::size_t hidden) {
  const auto& S = t.value(states);
  if (S.rows() == 0) return t.constant(Matrix(1, hidden));
  const std::uint32_t idx[1] = {static_cast<std::uint32_t>(S.rows() - 1)};
  return ad::rows(t, states, idx);
}

Var hierarchical_gru(Tape& t, Var embedding, const GruOnTape& word, const GruOnTape& utterance,
                     std::span<const std::vector<TokenId>> utterances) {
  if (utterances.empty()) throw ContractViolation("hierarchical_gru needs at least one utterance");
  if (word.hidden != utterance.input) throw DimensionError("word GRU width must feed the utterance GRU");
  std::vector<Var> finals;
  finals.reserve(utterances.size());
  for (const auto& utt : utterances) {
    std::vector<std::uint32_t> ids;
    ids.reserve(utt.size() + 2);
    ids.push_back(Vocab::kBos);
    ids.insert(ids.end(), utt.begin(), utt.end());
    ids.push_back(Vocab::kEos);
    auto states = gru_sequence(t, word, ad::rows(t, embedding, ids));
    finals.push_back(last_state(t, states, word.hidden));
  }
  auto seq = ad::concat_rows(t, finals, word.hidden);
  return last_state(t, gru_sequence(t, utterance, seq), utterance.hidden);
}

Var pool(Tape& t, Var rows, PoolMode mode) {
  return mode == PoolMode::kMean ? ad::mean_rows(t, rows) : ad::max_rows(t, rows);
}

// ---------------------------------------------------------------- GGNN

NodeLexicon NodeLexicon::build(const CkgGraph& graph, const Vocab& vocab) {
  NodeLexicon lex;
  lex.words.resize(graph.num_nodes());
  for (NodeId n = 0; n < graph.num_nodes(); ++n) {
    const auto& label = graph.label(n);
    std::size_t start = 0;
    while (start <= label.size()) {
      auto pos = label.find('_', start);
      auto word = label.substr(start, pos == std::string::npos ? std::string::npos : pos - start);
      if (!word.empty()) lex.words[n].push_back(vocab.encode(word));
      if (pos == std::string::npos) break;
      start = pos + 1;
    }
    if (lex.words[n].empty()) lex.words[n].push_back(Vocab::kUnk);
  }
  return lex;
}

Var node_states(Tape& t, Var embedding, const NodeLexicon& lex, std::span<const NodeId> nodes) {
  std::vector<ad::GatherEntry> entries;
  for (std::uint32_t i = 0; i < nodes.size(); ++i) {
    const auto& words = lex.words.at(nodes[i]);
    const double w = 1.0 / static_cast<double>(words.size());
    for (auto tok : words) entries.push_back({i, tok, w});
  }
  return ad::gather(t, embedding, entries, nodes.size());
}

GgnnParams GgnnParams::create(ParamStore& store, const std::string& prefix, std::size_t dim, std::size_t buckets,
                              Rng& rng) {
  GgnnParams p;
  p.dim = dim;
  p.buckets = buckets;
  for (std::size_t b = 0; b < buckets; ++b) {
    for (int dir = 0; dir < 2; ++dir) {
      p.transforms.push_back(&make(store, prefix + ".A." + std::to_string(b) + (dir == 0 ? ".fwd" : ".bwd"), dim,
                                   dim, rng));
    }
  }
  p.gru = GruParams::create(store, prefix + ".gru", dim, dim, rng);
  return p;
}

GgnnOnTape::GgnnOnTape(Tape& t, const GgnnParams& p) : dim(p.dim), gru(t, p.gru) {
  transforms.reserve(p.transforms.size());
  for (auto* a : p.transforms) transforms.push_back(t.param(*a));
}

GgnnGraphView::GgnnGraphView(const CkgGraph& g, std::size_t top_relations)
    : graph(&g), relation_bucket(g.relation_buckets(top_relations)) {}

std::vector<NodeId> ggnn_support(const CkgGraph& graph, std::span<const NodeId> targets) {
  std::vector<NodeId> out(targets.begin(), targets.end());
  for (auto v : targets)
    for (const auto& inc : graph.incident(v)) out.push_back(inc.other);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

Var ggnn_layer(Tape& t, const GgnnOnTape& g, const GgnnGraphView& view, Var states,
               std::span<const NodeId> nodes, std::span<const NodeId> targets) {
  const auto& H = t.value(states);
  if (H.rows() != nodes.size() || H.cols() != g.dim)
    throw DimensionError("ggnn_layer: states " + H.shape_string() + " for " + std::to_string(nodes.size()) +
                         " nodes of width " + std::to_string(g.dim));
  const auto& graph = *view.graph;
  std::unordered_map<NodeId, std::uint32_t> row_of;
  row_of.reserve(nodes.size());
  for (std::uint32_t i = 0; i < nodes.size(); ++i) row_of.emplace(nodes[i], i);
  auto row = [&](NodeId n) {
    auto it = row_of.find(n);
    if (it == row_of.end())
      throw ContractViolation("ggnn_layer: node " + std::to_string(n) + " missing from the state rows");
    return it->second;
  };

  const std::size_t num_transforms = g.transforms.size();
  std::vector<std::vector<ad::GatherEntry>> per_transform(num_transforms);
  std::vector<std::uint32_t> target_rows;
  target_rows.reserve(targets.size());
  const auto& edges = graph.edges();
  for (std::uint32_t i = 0; i < targets.size(); ++i) {
    const NodeId v = targets[i];
    target_rows.push_back(row(v));
    auto inc = graph.incident(v);
    if (inc.empty()) continue;
    double wmax = -kUnreachable;
    for (const auto& e : inc) wmax = std::max(wmax, edges[e.edge].weight);
    double z = 0.0;
    for (const auto& e : inc) z += std::exp(edges[e.edge].weight - wmax);
    for (const auto& e : inc) {
      const auto& edge = edges[e.edge];
      const double alpha = std::exp(edge.weight - wmax) / z;
      // v is the tail of a forward message and the head of a backward one.
      const std::size_t dir = e.outgoing ? 1 : 0;
      const std::size_t slot = view.relation_bucket.at(edge.relation) * 2 + dir;
      if (slot >= num_transforms) throw ContractViolation("ggnn_layer: relation bucket exceeds parameters");
      per_transform[slot].push_back({i, row(e.other), alpha});
    }
  }

  std::vector<Var> messages;
  for (std::size_t s = 0; s < num_transforms; ++s) {
    if (per_transform[s].empty()) continue;
    auto agg = ad::gather(t, states, per_transform[s], targets.size());
    messages.push_back(ad::matmul(t, agg, g.transforms[s]));
  }
  Var m = messages.empty() ? t.constant(Matrix(targets.size(), g.dim)) : messages.front();
  for (std::size_t k = 1; k < messages.size(); ++k) m = ad::add(t, m, messages[k]);
  auto h = ad::rows(t, states, target_rows);
  return gru_cell(t, g.gru, m, h);
}

}  // namespace ckc
