#include "ckc/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "json.hpp"

#include "ckc/errors.hpp"

namespace ckc {
namespace {

std::vector<double> max_pool(const Matrix& m, std::size_t cols) {
  std::vector<double> out(cols, 0.0);
  if (m.rows() == 0) return out;
  if (m.cols() != cols) throw DimensionError("pooling a " + m.shape_string() + " matrix to width " + std::to_string(cols));
  for (std::size_t j = 0; j < cols; ++j) out[j] = m(0, j);
  for (std::size_t i = 1; i < m.rows(); ++i)
    for (std::size_t j = 0; j < cols; ++j) out[j] = std::max(out[j], m(i, j));
  return out;
}

// Graph rows on one tape, either from a frozen node table or from a GGNN
// pass over the nodes the caller will ask for.
class NodeRows {
 public:
  NodeRows(Tape& t, const Matrix* table, std::size_t dim) : t_(&t), table_(table), dim_(dim) {}

  void compute(Var G, std::vector<NodeId> targets) {
    G_ = G;
    targets_ = std::move(targets);
  }

  Var get(std::span<const NodeId> nodes) const {
    if (table_) {
      Matrix m(nodes.size(), dim_);
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        auto src = table_->row_span(nodes[i]);
        std::copy(src.begin(), src.end(), m.row_span(i).begin());
      }
      return t_->constant(std::move(m));
    }
    if (nodes.empty()) return t_->constant(Matrix(0, dim_));
    std::vector<std::uint32_t> idx;
    idx.reserve(nodes.size());
    for (auto n : nodes) {
      auto it = std::lower_bound(targets_.begin(), targets_.end(), n);
      if (it == targets_.end() || *it != n) throw ContractViolation("graph row requested for an unprepared node");
      idx.push_back(static_cast<std::uint32_t>(it - targets_.begin()));
    }
    return ad::rows(*t_, G_, idx);
  }

 private:
  Tape* t_;
  const Matrix* table_;
  std::size_t dim_;
  Var G_;
  std::vector<NodeId> targets_;
};

}  // namespace

MatchScore match_pooled(std::span<const double> x, std::span<const double> y, std::span<const double> kx,
                        std::span<const double> ky, double lambda_k) {
  if (x.size() != y.size() || kx.size() != ky.size())
    throw DimensionError("match: pooled widths differ (" + std::to_string(x.size()) + " vs " +
                         std::to_string(y.size()) + ", " + std::to_string(kx.size()) + " vs " +
                         std::to_string(ky.size()) + ")");
  MatchScore s;
  s.s_u = dot(x, y);
  s.s_k = dot(kx, ky);
  s.s = s.s_u + lambda_k * s.s_k;
  return s;
}

MatchScore match(const Matrix& X, const Matrix& Y, const Matrix& Kx, const Matrix& Ky, double lambda_k) {
  if (X.cols() != Y.cols() || Kx.cols() != Ky.cols())
    throw DimensionError("match: " + X.shape_string() + " vs " + Y.shape_string() + ", " + Kx.shape_string() +
                         " vs " + Ky.shape_string());
  return match_pooled(max_pool(X, X.cols()), max_pool(Y, Y.cols()), max_pool(Kx, Kx.cols()),
                      max_pool(Ky, Ky.cols()), lambda_k);
}

// ---------------------------------------------------------------- config

std::string MatcherConfig::to_json() const {
  nlohmann::json j{{"kind", "matcher"},          {"dim", dim},
                   {"top_relations", top_relations}, {"lambda_k", lambda_k},
                   {"use_keywords", use_keywords}, {"use_concepts", use_concepts},
                   {"predicted_keywords", predicted_keywords}, {"seed", seed}};
  return j.dump();
}

MatcherConfig MatcherConfig::from_json(const std::string& s) {
  try {
    auto j = nlohmann::json::parse(s);
    if (j.value("kind", "") != "matcher") throw ConfigError("checkpoint does not hold a response matcher");
    MatcherConfig c;
    c.dim = j.at("dim");
    c.top_relations = j.at("top_relations");
    c.lambda_k = j.at("lambda_k");
    c.use_keywords = j.at("use_keywords");
    c.use_concepts = j.at("use_concepts");
    c.predicted_keywords = j.at("predicted_keywords");
    c.seed = j.at("seed");
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad matcher config: " + std::string(e.what()));
  }
}

// ---------------------------------------------------------------- model

MatcherModel::MatcherModel(const Resources& res, MatcherConfig config)
    : res_(&res),
      config_(config),
      lexicon_(NodeLexicon::build(res.graph(), res.vocab())),
      view_(res.graph(), config.top_relations) {
  if (config.dim == 0) throw ConfigError("matcher width must be positive");
  if (config.lambda_k < 0.0) throw ConfigError("lambda_k must be nonnegative");
  Rng rng(config.seed);
  embedding_ = &params_.add("embedding", normal_matrix(res.vocab().size(), config.dim, kEmbeddingInitStd, rng));
  gru_ = GruParams::create(params_, "encoder", config.dim, config.dim, rng);
  ggnn_ = GgnnParams::create(params_, "ggnn", config.dim, config.top_relations + 1, rng);
}

std::vector<NodeId> MatcherModel::keyword_nodes(std::span<const KeywordId> keywords) const {
  std::vector<NodeId> out;
  if (!config_.use_keywords) return out;
  for (auto k : keywords)
    if (auto n = res_->keyword_node(k)) out.push_back(*n);
  return out;
}

std::vector<NodeId> MatcherModel::concept_nodes(std::span<const Utterance> utts) const {
  std::vector<NodeId> out;
  if (!config_.use_concepts) return out;
  for (const auto& u : utts) out.insert(out.end(), u.concepts.begin(), u.concepts.end());
  return out;
}

std::vector<TokenId> MatcherModel::flatten(std::span<const Utterance> utts) {
  std::vector<TokenId> out;
  for (const auto& u : utts) {
    out.insert(out.end(), u.tokens.begin(), u.tokens.end());
    out.push_back(Vocab::kEos);
  }
  return out;
}

Matrix MatcherModel::node_table() const {
  const std::size_t n = res_->graph().num_nodes();
  if (n == 0) return Matrix(0, config_.dim);
  Tape t(false);
  std::vector<NodeId> all(n);
  std::iota(all.begin(), all.end(), NodeId{0});
  Var states = node_states(t, t.param(*embedding_), lexicon_, all);
  GgnnOnTape gg(t, ggnn_);
  return t.value(ggnn_layer(t, gg, view_, states, all, all));
}

namespace {

struct Encoders {
  Var E;
  GruOnTape gru;
};

Var encode_on(Tape& t, const Encoders& enc, const NodeRows& rows, std::span<const TokenId> tokens,
              std::span<const NodeId> concepts, std::size_t dim) {
  std::vector<std::uint32_t> ids(tokens.begin(), tokens.end());
  Var states = gru_sequence(t, enc.gru, ad::rows(t, enc.E, ids));
  if (concepts.empty()) return states;
  const Var parts[2] = {states, rows.get(concepts)};
  return ad::concat_rows(t, parts, dim);
}

}  // namespace

Matrix MatcherModel::encode(std::span<const Utterance> utterances, const Matrix* nodes) const {
  Tape t(false);
  Encoders enc{t.param(*embedding_), GruOnTape(t, gru_)};
  NodeRows rows(t, nodes, config_.dim);
  auto concepts = concept_nodes(utterances);
  if (!nodes && !concepts.empty()) {
    std::vector<NodeId> targets(concepts);
    std::sort(targets.begin(), targets.end());
    targets.erase(std::unique(targets.begin(), targets.end()), targets.end());
    auto support = ggnn_support(res_->graph(), targets);
    GgnnOnTape gg(t, ggnn_);
    rows.compute(ggnn_layer(t, gg, view_, node_states(t, enc.E, lexicon_, support), support, targets), targets);
  }
  return t.value(encode_on(t, enc, rows, flatten(utterances), concepts, config_.dim));
}

Matrix MatcherModel::encode_context(std::span<const Utterance> context, const Matrix* nodes) const {
  if (context.empty()) throw ContractViolation("context encoding needs at least one utterance");
  return encode(context.size() > kMaxRetrievalContext ? context.subspan(context.size() - kMaxRetrievalContext)
                                                      : context,
                nodes);
}

Matrix MatcherModel::encode_candidate(const Utterance& candidate, const Matrix* nodes) const {
  return encode(std::span<const Utterance>(&candidate, 1), nodes);
}

Matrix MatcherModel::keyword_matrix(std::span<const KeywordId> keywords, const Matrix* nodes) const {
  auto kn = keyword_nodes(keywords);
  if (kn.empty()) return Matrix(0, config_.dim);
  if (nodes) {
    Matrix m(kn.size(), config_.dim);
    for (std::size_t i = 0; i < kn.size(); ++i) {
      auto src = nodes->row_span(kn[i]);
      std::copy(src.begin(), src.end(), m.row_span(i).begin());
    }
    return m;
  }
  Tape t(false);
  std::vector<NodeId> targets(kn);
  std::sort(targets.begin(), targets.end());
  targets.erase(std::unique(targets.begin(), targets.end()), targets.end());
  auto support = ggnn_support(res_->graph(), targets);
  GgnnOnTape gg(t, ggnn_);
  NodeRows rows(t, nullptr, config_.dim);
  rows.compute(ggnn_layer(t, gg, view_, node_states(t, t.param(*embedding_), lexicon_, support), support, targets),
               targets);
  return t.value(rows.get(kn));
}

MatcherModel::TapeScores MatcherModel::scores(Tape& t, std::span<const Utterance> context,
                                              std::span<const Utterance* const> candidates,
                                              std::span<const KeywordId> predicted) const {
  if (context.empty()) throw ContractViolation("matching needs at least one context utterance");
  if (context.size() > kMaxRetrievalContext) context = context.subspan(context.size() - kMaxRetrievalContext);
  const std::size_t d = config_.dim;
  Encoders enc{t.param(*embedding_), GruOnTape(t, gru_)};

  auto ctx_concepts = concept_nodes(context);
  auto kx_nodes = keyword_nodes(predicted);
  std::vector<std::vector<NodeId>> cand_concepts, cand_keywords;
  std::vector<NodeId> targets(ctx_concepts);
  targets.insert(targets.end(), kx_nodes.begin(), kx_nodes.end());
  for (const auto* c : candidates) {
    cand_concepts.push_back(concept_nodes(std::span<const Utterance>(c, 1)));
    cand_keywords.push_back(keyword_nodes(c->keywords));
    targets.insert(targets.end(), cand_concepts.back().begin(), cand_concepts.back().end());
    targets.insert(targets.end(), cand_keywords.back().begin(), cand_keywords.back().end());
  }
  std::sort(targets.begin(), targets.end());
  targets.erase(std::unique(targets.begin(), targets.end()), targets.end());
  NodeRows rows(t, nullptr, d);
  if (!targets.empty()) {
    auto support = ggnn_support(res_->graph(), targets);
    GgnnOnTape gg(t, ggnn_);
    rows.compute(ggnn_layer(t, gg, view_, node_states(t, enc.E, lexicon_, support), support, targets), targets);
  }

  const double lambda = config_.effective_lambda();
  Var xp = ad::max_rows(t, encode_on(t, enc, rows, flatten(context), ctx_concepts, d));
  Var kxp = ad::max_rows(t, rows.get(kx_nodes));
  TapeScores out;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    auto toks = flatten(std::span<const Utterance>(candidates[i], 1));
    Var yp = ad::max_rows(t, encode_on(t, enc, rows, toks, cand_concepts[i], d));
    Var kyp = ad::max_rows(t, rows.get(cand_keywords[i]));
    Var su = ad::dot(t, xp, yp);
    Var sk = ad::dot(t, kxp, kyp);
    out.s_u.push_back(su);
    out.s_k.push_back(sk);
    out.s.push_back(ad::add(t, su, ad::scale(t, sk, lambda)));
  }
  return out;
}

MatchScore MatcherModel::score(std::span<const Utterance> context, const Utterance& candidate,
                               std::span<const KeywordId> predicted) const {
  Tape t(false);
  const Utterance* c = &candidate;
  auto s = scores(t, context, std::span<const Utterance* const>(&c, 1), predicted);
  return {t.scalar(s.s_u[0]), t.scalar(s.s_k[0]), t.scalar(s.s[0])};
}

Var MatcherModel::loss(Tape& t, std::span<const Utterance> context, std::span<const Utterance* const> candidates,
                       std::size_t gold, std::span<const KeywordId> predicted) const {
  if (gold >= candidates.size()) throw ContractViolation("gold index outside the candidate list");
  auto s = scores(t, context, candidates, predicted);
  Var row = s.s.front();
  for (std::size_t i = 1; i < s.s.size(); ++i) row = ad::concat_cols(t, row, s.s[i]);
  std::vector<std::uint32_t> mask(candidates.size());
  std::iota(mask.begin(), mask.end(), 0u);
  const std::uint32_t g[1] = {static_cast<std::uint32_t>(gold)};
  return ad::masked_softmax_nll(t, row, mask, g);
}

void MatcherModel::save(const std::filesystem::path& path, std::uint32_t epoch) const {
  save_checkpoint(path, params_, {config_.seed, epoch, config_.to_json()});
}

MatcherModel MatcherModel::load(const std::filesystem::path& path, const Resources& res) {
  auto meta = read_checkpoint_meta(path);
  MatcherModel m(res, MatcherConfig::from_json(meta.config_json));
  load_checkpoint(path, m.params_);
  return m;
}

// ---------------------------------------------------------------- pool index

PoolIndex PoolIndex::build(const MatcherModel& model, const ResponsePool& pool, std::size_t threads) {
  PoolIndex idx;
  idx.model_ = &model;
  idx.pool_ = &pool;
  idx.nodes_ = model.node_table();
  const std::size_t n = pool.size(), d = model.config().dim;
  idx.y_.resize(n);
  idx.ky_.resize(n);
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, std::max<std::size_t>(n, 1));
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      idx.y_[i] = max_pool(model.encode_candidate(pool.at(i), &idx.nodes_), d);
      idx.ky_[i] = max_pool(model.keyword_matrix(pool.at(i).keywords, &idx.nodes_), d);
    }
  };
  if (threads <= 1) {
    work(0, n);
  } else {
    std::vector<std::thread> pool_threads;
    const std::size_t chunk = (n + threads - 1) / threads;
    for (std::size_t b = 0; b < n; b += chunk) pool_threads.emplace_back(work, b, std::min(n, b + chunk));
    for (auto& th : pool_threads) th.join();
  }
  return idx;
}

PoolIndex::Query PoolIndex::query(std::span<const Utterance> context, std::span<const KeywordId> predicted) const {
  const std::size_t d = model_->config().dim;
  return {max_pool(model_->encode_context(context, &nodes_), d),
          max_pool(model_->keyword_matrix(predicted, &nodes_), d)};
}

MatchScore PoolIndex::score(const Query& q, std::size_t id, double lambda_k) const {
  return match_pooled(q.x, y_.at(id), q.kx, ky_.at(id), lambda_k);
}

ResponseChoice agent_respond(const PoolIndex& index, const RespondRequest& req) {
  if (index.size() == 0) throw ConfigError("the response pool is empty");
  if (req.pool_size == 0) throw ConfigError("pool_size must be at least 1");
  const auto& model = index.model();
  const auto& res = model.resources();
  const double lambda = req.lambda_override.value_or(model.config().effective_lambda());
  auto q = index.query(req.context, req.predicted);

  std::vector<std::size_t> ids;
  ids.reserve(index.size());
  for (std::size_t i = 0; i < index.size(); ++i)
    if (!req.exclude || !req.exclude->contains(i)) ids.push_back(i);
  if (ids.empty()) {
    ids.resize(index.size());
    std::iota(ids.begin(), ids.end(), std::size_t{0});
  }
  std::vector<MatchScore> scores(index.size());
  for (auto i : ids) scores[i] = index.score(q, i, lambda);
  auto better = [&](std::size_t a, std::size_t b) { return scores[a].s != scores[b].s ? scores[a].s > scores[b].s : a < b; };
  const std::size_t keep = std::min(req.pool_size, ids.size());
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(keep), ids.end(), better);
  ids.resize(keep);

  auto choose = [&](std::size_t rank, ResponseTier tier) {
    return ResponseChoice{ids[rank], tier, scores[ids[rank]], rank};
  };
  if (req.keyword_tiers && req.decision) {
    const auto& word = res.keywords().word(req.decision->chosen);
    for (std::size_t r = 0; r < ids.size(); ++r) {
      const auto& words = index.pool().at(ids[r]).words;
      if (std::find(words.begin(), words.end(), word) != words.end()) return choose(r, ResponseTier::kSelectedKeyword);
    }
    if (req.distance) {
      for (std::size_t r = 0; r < ids.size(); ++r) {
        for (auto k : index.pool().at(ids[r]).keywords)
          if ((*req.distance)(k) < req.decision->current_best_dist) return choose(r, ResponseTier::kCloserKeyword);
      }
    }
  }
  return choose(0, ResponseTier::kTopScore);
}

// ---------------------------------------------------------------- training

std::vector<std::vector<KeywordId>> predicted_keywords(const KeywordPredictor& predictor,
                                                       std::span<const RetrievalExample> examples, std::size_t k) {
  std::vector<std::vector<KeywordId>> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) {
    std::vector<KeywordId> ks;
    if (!ex.context.empty()) {
      auto top = predict_topk(predictor.predict({ex.context}), k);
      for (const auto& [kw, _] : top.items) ks.push_back(kw);
    }
    out.push_back(std::move(ks));
  }
  return out;
}

namespace {

void check_split(const RetrievalSplit& s, const char* name) {
  if (!s.examples.empty() && !s.pool) throw ConfigError(std::string(name) + " split has no response pool");
  if (s.predicted.size() != s.examples.size())
    throw ConfigError(std::string(name) + " split needs predicted keywords for every example");
}

}  // namespace

TrainResult train_matcher(MatcherModel& model, const RetrievalSplit& train, const RetrievalSplit& valid,
                          const TrainConfig& config, const EpochCallback& on_epoch) {
  if (train.examples.empty()) throw ConfigError("matcher training set is empty");
  if (config.batch_size == 0) throw ConfigError("batch size must be positive");
  check_split(train, "train");
  check_split(valid, "valid");
  auto& params = model.params();
  Adam adam(params, config.adam);
  Rng rng(config.seed);
  std::vector<std::size_t> order(train.examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  TrainResult result;
  std::vector<Matrix> best;
  std::size_t since_best = 0, batch_id = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_id) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      params.zero_grad();
      for (std::size_t i = start; i < end; ++i) {
        const auto& ex = train.examples[order[i]];
        std::vector<const Utterance*> cands;
        for (auto id : ex.candidates) cands.push_back(&train.pool->at(id));
        Tape t;
        auto l = model.loss(t, ex.context, cands, ex.gold_index, train.predicted[order[i]]);
        const double v = t.scalar(l);
        if (!std::isfinite(v))
          throw DivergenceError("non-finite matcher loss in batch " + std::to_string(batch_id) + " (epoch " +
                                std::to_string(epoch) + ")");
        total += v;
        t.backward(l);
      }
      adam.step(1.0 / static_cast<double>(end - start));
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.mean_loss = total / static_cast<double>(train.examples.size());
    stats.lr = adam.lr();
    adam.end_epoch();
    if (config.eval_train) stats.train_r1 = *evaluate_matcher(model, train).get("R@1");
    if (!valid.examples.empty()) {
      stats.valid_r1 = *evaluate_matcher(model, valid).get("R@1");
      if (best.empty() || stats.valid_r1 > result.best_valid) {
        result.best_valid = stats.valid_r1;
        result.best_epoch = epoch;
        best.clear();
        for (std::size_t i = 0; i < params.size(); ++i) best.push_back(params.at(i).value);
        since_best = 0;
      } else {
        ++since_best;
      }
    } else {
      result.best_epoch = epoch;
    }
    result.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats);
    if (!valid.examples.empty() && since_best >= config.patience) {
      result.stopped_early = true;
      break;
    }
  }
  if (!best.empty())
    for (std::size_t i = 0; i < params.size(); ++i) params.at(i).value = best[i];
  return result;
}

MetricSummary evaluate_matcher(const MatcherModel& model, const RetrievalSplit& split, std::vector<MatchScore>* scores) {
  check_split(split, "evaluation");
  MetricAccumulator acc;
  if (split.examples.empty()) return acc.summary();
  auto index = PoolIndex::build(model, *split.pool);
  const double lambda = model.config().effective_lambda();
  for (std::size_t e = 0; e < split.examples.size(); ++e) {
    const auto& ex = split.examples[e];
    auto q = index.query(ex.context, split.predicted[e]);
    std::vector<double> s;
    s.reserve(ex.candidates.size());
    for (auto id : ex.candidates) {
      auto ms = index.score(q, id, lambda);
      if (scores) scores->push_back(ms);
      s.push_back(ms.s);
    }
    RankedPrediction rp{rank_by_score(s), {static_cast<std::uint32_t>(ex.gold_index)}};
    acc.add("R@1", recall_at_k(rp, 1));
    acc.add("R@3", recall_at_k(rp, 3));
    acc.add("R@5", recall_at_k(rp, 5));
    acc.add("MRR", reciprocal_rank(rp));
  }
  return acc.summary();
}

}  // namespace ckc
