#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ckc/autodiff.hpp"
#include "ckc/graph.hpp"
#include "ckc/params.hpp"
#include "ckc/text.hpp"

namespace ckc {

inline constexpr double kRecurrentInitBound = 0.08;
inline constexpr double kEmbeddingInitStd = 0.1;

// z = sigmoid(x W_z + h U_z + b_z), r = sigmoid(x W_r + h U_r + b_r),
// c = tanh(x W_h + (r * h) U_h + b_h), h' = (1 - z) * h + z * c.
struct GruParams {
  std::size_t input = 0;
  std::size_t hidden = 0;
  Parameter* W_z = nullptr;
  Parameter* U_z = nullptr;
  Parameter* b_z = nullptr;
  Parameter* W_r = nullptr;
  Parameter* U_r = nullptr;
  Parameter* b_r = nullptr;
  Parameter* W_h = nullptr;
  Parameter* U_h = nullptr;
  Parameter* b_h = nullptr;

  static GruParams create(ParamStore& store, const std::string& prefix, std::size_t input, std::size_t hidden,
                          Rng& rng);
  // Re-attach to an existing store (e.g. after moving a model).
  static GruParams attach(ParamStore& store, const std::string& prefix, std::size_t input, std::size_t hidden);
};

// GRU parameters placed on one tape.
struct GruOnTape {
  std::size_t input = 0;
  std::size_t hidden = 0;
  Var W_z, U_z, b_z, W_r, U_r, b_r, W_h, U_h, b_h;

  GruOnTape(Tape& t, const GruParams& p);
};

// Batched cell: x is m x input, h is m x hidden.
Var gru_cell(Tape& t, const GruOnTape& g, Var x, Var h);

// Runs the cell over the rows of `inputs` from a zero state. Returns all
// hidden states (T x hidden); T == 0 yields a 0 x hidden matrix.
Var gru_sequence(Tape& t, const GruOnTape& g, Var inputs);
// Last row of a state sequence, or the zero state when empty.
Var last_state(Tape& t, Var states, std::size_t hidden);

// Word-level GRU over BOS + tokens + EOS of each utterance, then an
// utterance-level GRU over the per-utterance final states.
Var hierarchical_gru(Tape& t, Var embedding, const GruOnTape& word, const GruOnTape& utterance,
                     std::span<const std::vector<TokenId>> utterances);

enum class PoolMode { kMean, kMax };
Var pool(Tape& t, Var rows, PoolMode mode);

// Per-node word lists used to build node states from a word embedding table.
struct NodeLexicon {
  std::vector<std::vector<TokenId>> words;  // indexed by NodeId

  static NodeLexicon build(const CkgGraph& graph, const Vocab& vocab);
};

// Averaged word embeddings for `nodes` (row i = nodes[i]).
Var node_states(Tape& t, Var embedding, const NodeLexicon& lex, std::span<const NodeId> nodes);

struct GgnnParams {
  std::size_t dim = 0;
  std::size_t buckets = 0;  // relation buckets incl. OTHER
  std::vector<Parameter*> transforms;  // [bucket * 2 + direction], dim x dim
  GruParams gru;

  static GgnnParams create(ParamStore& store, const std::string& prefix, std::size_t dim, std::size_t buckets,
                           Rng& rng);
};

struct GgnnOnTape {
  std::size_t dim = 0;
  std::vector<Var> transforms;
  GruOnTape gru;

  GgnnOnTape(Tape& t, const GgnnParams& p);
};

// Edge-to-parameter routing for one graph.
struct GgnnGraphView {
  const CkgGraph* graph = nullptr;
  std::vector<std::uint32_t> relation_bucket;  // per RelationId

  GgnnGraphView(const CkgGraph& g, std::size_t top_relations);
};

// One propagation step. `states` holds the current representation of every
// node listed in `nodes`; it must cover `targets` and all their neighbours.
// For each target v: m_v = sum over incident edges e=(u,v) of
// softmax_v(weight_e) * h_u A[bucket(e), direction(e)], and the result row is
// gru_cell(m_v, h_v). Isolated targets receive m_v = 0.
Var ggnn_layer(Tape& t, const GgnnOnTape& g, const GgnnGraphView& view, Var states,
               std::span<const NodeId> nodes, std::span<const NodeId> targets);

// Smallest node set a one-layer pass over `targets` needs: the targets plus
// their neighbours, sorted and unique.
std::vector<NodeId> ggnn_support(const CkgGraph& graph, std::span<const NodeId> targets);

}  // namespace ckc
