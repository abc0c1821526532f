#include "ckc/predictor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "ckc/errors.hpp"

namespace ckc {
namespace {

std::atomic<std::uint64_t> g_mask_predictions{0};
std::atomic<std::uint64_t> g_mask_violations{0};

std::span<const Utterance> last_two(std::span<const Utterance> context) {
  return context.size() > 2 ? context.subspan(context.size() - 2) : context;
}

std::vector<double> softmax(std::span<const double> scores) {
  std::vector<double> p(scores.size());
  if (scores.empty()) return p;
  const double m = *std::max_element(scores.begin(), scores.end());
  double z = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) z += (p[i] = std::exp(scores[i] - m));
  for (auto& v : p) v /= z;
  return p;
}

std::vector<std::uint32_t> ranking_of(const PredictorOutput& out) {
  std::vector<std::uint32_t> order(out.mask.size());
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return out.probs[a] > out.probs[b]; });
  std::vector<std::uint32_t> ids;
  ids.reserve(order.size());
  for (auto i : order) ids.push_back(out.mask[i]);
  return ids;
}

double r1_of(const PredictorModel& model, std::span<const PredictionExample> examples) {
  if (examples.empty()) return std::numeric_limits<double>::quiet_NaN();
  double sum = 0.0;
  for (const auto& ex : examples) {
    auto out = model.predict({ex.context});
    if (out.empty()) continue;
    sum += recall_at_k({ranking_of(out), ex.gold}, 1);
  }
  return sum / static_cast<double>(examples.size());
}

}  // namespace

double PredictorOutput::prob(KeywordId k) const {
  auto it = std::lower_bound(mask.begin(), mask.end(), k);
  if (it == mask.end() || *it != k) return 0.0;
  return probs[static_cast<std::size_t>(it - mask.begin())];
}

TopK predict_topk(const PredictorOutput& out, std::size_t k) {
  TopK res;
  auto ids = ranking_of(out);
  res.truncated = ids.size() < k;
  for (std::size_t i = 0; i < ids.size() && i < k; ++i) res.items.emplace_back(ids[i], out.prob(ids[i]));
  return res;
}

std::vector<KeywordId> context_keywords(std::span<const Utterance> context) {
  std::vector<KeywordId> out;
  for (const auto& u : last_two(context)) out.insert(out.end(), u.keywords.begin(), u.keywords.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void verify_mask_support(const Resources& res, std::span<const KeywordId> context, const PredictorOutput& out) {
  g_mask_predictions.fetch_add(1, std::memory_order_relaxed);
  auto fail = [&](const std::string& why) {
    g_mask_violations.fetch_add(1, std::memory_order_relaxed);
    throw ContractViolation("mask soundness: " + why);
  };
  if (out.mask.size() != out.probs.size()) fail("mask and probabilities differ in length");
  std::set<KeywordId> ctx(context.begin(), context.end());
  std::set<NodeId> near;
  for (auto k : ctx) {
    if (auto n = res.keyword_node(k))
      for (auto v : res.graph().neighbors(*n)) near.insert(v);
  }
  double total = 0.0;
  for (std::size_t i = 0; i < out.mask.size(); ++i) {
    const double p = out.probs[i];
    if (!(p >= 0.0)) fail("negative or NaN probability");
    total += p;
    if (p == 0.0) continue;
    const KeywordId k = out.mask[i];
    if (ctx.contains(k)) fail("context keyword '" + res.keywords().word(k) + "' has mass");
    auto n = res.keyword_node(k);
    if (!n || !near.contains(*n)) fail("keyword '" + res.keywords().word(k) + "' is not a graph neighbour");
  }
  if (!out.mask.empty() && std::abs(total - 1.0) > 1e-9) fail("probabilities sum to " + std::to_string(total));
}

MaskAuditCounts mask_audit_counts() { return {g_mask_predictions.load(), g_mask_violations.load()}; }

// ---------------------------------------------------------------- config

std::string PredictorConfig::to_json() const {
  nlohmann::json j{{"kind", "predictor"},        {"embed_dim", embed_dim}, {"hidden", hidden},
                   {"top_relations", top_relations}, {"use_concepts", use_concepts}, {"seed", seed}};
  return j.dump();
}

PredictorConfig PredictorConfig::from_json(const std::string& s) {
  try {
    auto j = nlohmann::json::parse(s);
    if (j.value("kind", "") != "predictor") throw ConfigError("checkpoint does not hold a keyword predictor");
    PredictorConfig c;
    c.embed_dim = j.at("embed_dim");
    c.hidden = j.at("hidden");
    c.top_relations = j.at("top_relations");
    c.use_concepts = j.at("use_concepts");
    c.seed = j.at("seed");
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad predictor config: " + std::string(e.what()));
  }
}

// ---------------------------------------------------------------- model

PredictorModel::PredictorModel(const Resources& res, PredictorConfig config)
    : res_(&res),
      config_(config),
      lexicon_(NodeLexicon::build(res.graph(), res.vocab())),
      view_(res.graph(), config.top_relations) {
  if (config.embed_dim == 0 || config.hidden == 0) throw ConfigError("predictor dimensions must be positive");
  if (res.keywords().empty()) throw ConfigError("predictor needs a nonempty keyword vocabulary");
  Rng rng(config.seed);
  const std::size_t d1 = config.hidden, d2 = config.embed_dim;
  embedding_ = &params_.add("embedding", normal_matrix(res.vocab().size(), d2, kEmbeddingInitStd, rng));
  word_gru_ = GruParams::create(params_, "hgru.word", d2, d1, rng);
  utt_gru_ = GruParams::create(params_, "hgru.utterance", d1, d1, rng);
  ggnn_ = GgnnParams::create(params_, "ggnn", d2, config.top_relations + 1, rng);
  out_w_ = &params_.add("out.W", uniform_matrix(d1 + d2, res.keywords().size(), kRecurrentInitBound, rng));
  out_b_ = &params_.add("out.b", Matrix(1, res.keywords().size()));
}

Var PredictorModel::logits(Tape& t, std::span<const Utterance> context) const {
  if (context.empty()) throw ContractViolation("keyword prediction needs at least one context utterance");
  const auto ctx = last_two(context);
  const std::size_t d2 = config_.embed_dim;
  Var E = t.param(*embedding_);
  GruOnTape wg(t, word_gru_), ug(t, utt_gru_);
  std::vector<std::vector<TokenId>> toks;
  for (const auto& u : ctx) toks.push_back(u.tokens);
  Var x = hierarchical_gru(t, E, wg, ug, toks);

  std::vector<NodeId> knodes;
  for (auto k : context_keywords(ctx))
    if (auto n = res_->keyword_node(k)) knodes.push_back(*n);
  std::vector<NodeId> cnodes;
  if (config_.use_concepts)
    for (const auto& u : ctx) cnodes.insert(cnodes.end(), u.concepts.begin(), u.concepts.end());

  std::vector<NodeId> targets(knodes);
  targets.insert(targets.end(), cnodes.begin(), cnodes.end());
  std::sort(targets.begin(), targets.end());
  targets.erase(std::unique(targets.begin(), targets.end()), targets.end());

  Var kc;
  if (targets.empty()) {
    kc = t.constant(Matrix(1, d2));
  } else {
    auto support = ggnn_support(res_->graph(), targets);
    Var states = node_states(t, E, lexicon_, support);
    GgnnOnTape gg(t, ggnn_);
    Var G = ggnn_layer(t, gg, view_, states, support, targets);
    auto pooled = [&](const std::vector<NodeId>& nodes) {
      if (nodes.empty()) return t.constant(Matrix(1, d2));
      std::vector<std::uint32_t> idx;
      for (auto n : nodes)
        idx.push_back(static_cast<std::uint32_t>(std::lower_bound(targets.begin(), targets.end(), n) - targets.begin()));
      return ad::mean_rows(t, ad::rows(t, G, idx));
    };
    kc = ad::maximum(t, pooled(knodes), pooled(cnodes));
  }
  Var feat = ad::concat_cols(t, x, kc);
  return ad::add_row(t, ad::matmul(t, feat, t.param(*out_w_)), t.param(*out_b_));
}

Var PredictorModel::loss(Tape& t, const PredictionExample& ex) const {
  return ad::masked_softmax_nll(t, logits(t, ex.context), ex.mask, ex.gold);
}

PredictorOutput PredictorModel::forward(std::span<const Utterance> context, std::span<const KeywordId> mask) const {
  if (mask.empty()) throw ContractViolation("keyword prediction needs a nonempty candidate mask");
  Tape t(false);
  auto l = logits(t, context);
  PredictorOutput out;
  out.mask.assign(mask.begin(), mask.end());
  out.probs = masked_softmax(t.value(l).data(), out.mask);
  std::vector<double> aligned;
  aligned.reserve(out.mask.size());
  for (auto k : out.mask) aligned.push_back(out.probs[k]);
  out.probs = std::move(aligned);
  return out;
}

PredictorOutput PredictorModel::predict(const PredictRequest& req) const {
  auto ctx = context_keywords(req.context);
  auto mask = res_->candidate_mask(ctx);
  if (mask.empty()) return {};
  auto out = forward(req.context, mask);
  verify_mask_support(*res_, ctx, out);
  return out;
}

void PredictorModel::save(const std::filesystem::path& path, std::uint32_t epoch) const {
  save_checkpoint(path, params_, {config_.seed, epoch, config_.to_json()});
}

PredictorModel PredictorModel::load(const std::filesystem::path& path, const Resources& res) {
  auto meta = read_checkpoint_meta(path);
  PredictorModel m(res, PredictorConfig::from_json(meta.config_json));
  load_checkpoint(path, m.params_);
  return m;
}

std::size_t load_pretrained_embeddings(const std::filesystem::path& path, const Vocab& vocab, Matrix& table) {
  std::ifstream in(path);
  if (!in) throw ConfigError("missing embedding file " + path.string());
  std::string line;
  std::size_t lineno = 0, replaced = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tok;
    if (!(ls >> tok)) continue;
    std::vector<double> v;
    double x;
    while (ls >> x) v.push_back(x);
    if (!ls.eof()) throw ParseError("bad embedding value", lineno);
    if (v.size() != table.cols())
      throw DimensionError("embedding file has width " + std::to_string(v.size()) + ", model expects " +
                           std::to_string(table.cols()));
    if (!vocab.contains(tok)) continue;
    std::copy(v.begin(), v.end(), table.row_span(vocab.encode(tok)).begin());
    ++replaced;
  }
  return replaced;
}

// ---------------------------------------------------------------- training

TrainResult train_predictor(PredictorModel& model, std::span<const PredictionExample> train,
                            std::span<const PredictionExample> valid, const TrainConfig& config,
                            const EpochCallback& on_epoch) {
  if (train.empty()) throw ConfigError("keyword predictor training set is empty");
  if (config.batch_size == 0) throw ConfigError("batch size must be positive");
  auto& params = model.params();
  Adam adam(params, config.adam);
  Rng rng(config.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  TrainResult result;
  std::vector<Matrix> best;
  std::size_t since_best = 0;
  std::size_t batch_id = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_id) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      params.zero_grad();
      for (std::size_t i = start; i < end; ++i) {
        Tape t;
        auto l = model.loss(t, train[order[i]]);
        const double v = t.scalar(l);
        if (!std::isfinite(v))
          throw DivergenceError("non-finite predictor loss in batch " + std::to_string(batch_id) + " (epoch " +
                                std::to_string(epoch) + ")");
        total += v;
        t.backward(l);
      }
      adam.step(1.0 / static_cast<double>(end - start));
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.mean_loss = total / static_cast<double>(train.size());
    stats.lr = adam.lr();
    adam.end_epoch();
    if (config.eval_train) stats.train_r1 = r1_of(model, train);
    if (!valid.empty()) {
      stats.valid_r1 = r1_of(model, valid);
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
    if (!valid.empty() && since_best >= config.patience) {
      result.stopped_early = true;
      break;
    }
  }
  if (!best.empty())
    for (std::size_t i = 0; i < params.size(); ++i) params.at(i).value = best[i];
  return result;
}

MetricSummary evaluate_predictor(const KeywordPredictor& predictor, const Resources& res,
                                 std::span<const PredictionExample> examples) {
  (void)res;
  MetricAccumulator acc;
  for (const auto& ex : examples) {
    auto out = predictor.predict({ex.context});
    RankedPrediction rp{ranking_of(out), ex.gold};
    acc.add("R@1", recall_at_k(rp, 1));
    acc.add("R@3", recall_at_k(rp, 3));
    acc.add("R@5", recall_at_k(rp, 5));
    acc.add("P@1", rp.ranking.empty() ? 0.0 : precision_at_1(rp));
  }
  return acc.summary();
}

// ---------------------------------------------------------------- PMI

PmiTable PmiTable::fit(std::span<const Conversation> convs, double alpha) {
  PmiTable t;
  t.alpha_ = alpha;
  for (const auto& c : convs) {
    for (std::size_t i = 0; i + 1 < c.utterances.size(); ++i) {
      for (auto a : c.utterances[i].keywords) {
        for (auto b : c.utterances[i + 1].keywords) {
          ++t.pair_[{a, b}];
          ++t.src_[a];
          ++t.tgt_[b];
          ++t.total_;
        }
      }
    }
  }
  return t;
}

std::size_t PmiTable::count(KeywordId a, KeywordId b) const {
  auto it = pair_.find({a, b});
  return it == pair_.end() ? 0 : it->second;
}

double PmiTable::pmi(KeywordId a, KeywordId b) const {
  auto lookup = [](const std::map<KeywordId, std::size_t>& m, KeywordId k) {
    auto it = m.find(k);
    return it == m.end() ? 0.0 : static_cast<double>(it->second);
  };
  const double T = static_cast<double>(std::max<std::size_t>(total_, 1));
  return std::log((static_cast<double>(count(a, b)) + alpha_) * T /
                  ((lookup(src_, a) + alpha_) * (lookup(tgt_, b) + alpha_)));
}

void PmiTable::save(std::ostream& out) const {
  out << "#alpha\t" << alpha_ << '\n';
  for (const auto& [k, c] : pair_) out << k.first << '\t' << k.second << '\t' << c << '\n';
}

PmiTable PmiTable::load(std::istream& in) {
  PmiTable t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    if (line[0] == '#') {
      std::string key;
      ls >> key >> t.alpha_;
      if (key != "#alpha" || !ls) throw ParseError("bad PMI header", lineno);
      continue;
    }
    KeywordId a, b;
    std::size_t c;
    if (!(ls >> a >> b >> c)) throw ParseError("PMI line needs src<TAB>tgt<TAB>count", lineno);
    t.pair_[{a, b}] += c;
    t.src_[a] += c;
    t.tgt_[b] += c;
    t.total_ += c;
  }
  return t;
}

PredictorOutput PmiPredictor::predict(const PredictRequest& req) const {
  auto ctx = context_keywords(req.context);
  PredictorOutput out;
  out.mask = res_->candidate_mask(ctx);
  if (out.mask.empty()) return out;
  std::vector<double> scores;
  scores.reserve(out.mask.size());
  for (auto b : out.mask) {
    double s = 0.0;
    for (auto a : ctx) s += table_.pmi(a, b);
    scores.push_back(s / static_cast<double>(ctx.size()));
  }
  out.probs = softmax(scores);
  verify_mask_support(*res_, ctx, out);
  return out;
}

PredictorOutput OraclePredictor::predict(const PredictRequest& req) const {
  auto ctx = context_keywords(req.context);
  PredictorOutput out;
  out.mask = res_->candidate_mask(ctx);
  const std::size_t n = out.mask.size();
  if (n == 0) return out;
  out.probs.assign(n, 1.0 / static_cast<double>(n));
  if (req.target && n > 1) {
    std::size_t best = 0;
    double best_d = kUnreachable;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = req.target->at(*res_->keyword_node(out.mask[i]));
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    const double rest = (1.0 - confidence_) / static_cast<double>(n - 1);
    std::fill(out.probs.begin(), out.probs.end(), rest);
    out.probs[best] = confidence_;
  }
  verify_mask_support(*res_, ctx, out);
  return out;
}

}  // namespace ckc
