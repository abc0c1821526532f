#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "ckc/autodiff.hpp"
#include "ckc/corpus.hpp"
#include "ckc/layers.hpp"
#include "ckc/metrics.hpp"
#include "ckc/params.hpp"
#include "ckc/predictor.hpp"
#include "ckc/strategy.hpp"

namespace ckc {

inline constexpr double kDefaultLambdaK = 0.01;
inline constexpr std::size_t kDefaultPoolSize = 100;

struct MatchScore {
  double s_u = 0.0;
  double s_k = 0.0;
  double s = 0.0;
};

// s_u = <maxpool X, maxpool Y>, s_k = <maxpool Kx, maxpool Ky>,
// s = s_u + lambda_k * s_k. Empty keyword matrices pool to zero.
MatchScore match(const Matrix& X, const Matrix& Y, const Matrix& Kx, const Matrix& Ky, double lambda_k);
// Same combination on already pooled vectors.
MatchScore match_pooled(std::span<const double> x, std::span<const double> y, std::span<const double> kx,
                        std::span<const double> ky, double lambda_k);

struct MatcherConfig {
  std::size_t dim = 200;  // embedding, GRU and GGNN width
  std::size_t top_relations = 12;
  double lambda_k = kDefaultLambdaK;
  bool use_keywords = true;  // off: lambda_k = 0 and keyword rows zeroed
  bool use_concepts = true;  // off: no graph concept rows in X and Y
  std::size_t predicted_keywords = 3;
  std::uint64_t seed = 17;

  double effective_lambda() const { return use_keywords ? lambda_k : 0.0; }
  std::string to_json() const;
  static MatcherConfig from_json(const std::string& s);
};

// Dual GRU encoder with graph-aware concept rows and a keyword matcher.
class MatcherModel {
 public:
  MatcherModel(const Resources& res, MatcherConfig config);

  const MatcherConfig& config() const { return config_; }
  const Resources& resources() const { return *res_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // GGNN states of every graph node (N x dim), computed in one pass.
  Matrix node_table() const;

  // GRU states over the utterances flattened with an EOS after each one,
  // followed by one graph row per matched concept (duplicates kept). A null
  // table recomputes the needed rows.
  Matrix encode(std::span<const Utterance> utterances, const Matrix* nodes = nullptr) const;
  Matrix encode_context(std::span<const Utterance> context, const Matrix* nodes = nullptr) const;
  Matrix encode_candidate(const Utterance& candidate, const Matrix* nodes = nullptr) const;
  // Graph rows of the keywords that are graph nodes (0 rows when none or
  // when keyword matching is disabled).
  Matrix keyword_matrix(std::span<const KeywordId> keywords, const Matrix* nodes = nullptr) const;

  MatchScore score(std::span<const Utterance> context, const Utterance& candidate,
                   std::span<const KeywordId> predicted) const;

  // Negative log-likelihood of `gold` among the candidates.
  Var loss(Tape& t, std::span<const Utterance> context, std::span<const Utterance* const> candidates,
           std::size_t gold, std::span<const KeywordId> predicted) const;
  // Per-candidate scores on the tape (s_u, s_k, s as 1x1 nodes).
  struct TapeScores {
    std::vector<Var> s_u, s_k, s;
  };
  TapeScores scores(Tape& t, std::span<const Utterance> context, std::span<const Utterance* const> candidates,
                    std::span<const KeywordId> predicted) const;

  void save(const std::filesystem::path& path, std::uint32_t epoch = 0) const;
  static MatcherModel load(const std::filesystem::path& path, const Resources& res);

 private:
  const Resources* res_;
  MatcherConfig config_;
  ParamStore params_;
  Parameter* embedding_ = nullptr;
  GruParams gru_;
  GgnnParams ggnn_;
  NodeLexicon lexicon_;
  GgnnGraphView view_;

  std::vector<NodeId> keyword_nodes(std::span<const KeywordId> keywords) const;
  std::vector<NodeId> concept_nodes(std::span<const Utterance> utts) const;
  static std::vector<TokenId> flatten(std::span<const Utterance> utts);
};

// Pooled candidate vectors for every pool entry under a frozen matcher.
class PoolIndex {
 public:
  static PoolIndex build(const MatcherModel& model, const ResponsePool& pool, std::size_t threads = 0);

  struct Query {
    std::vector<double> x;  // maxpool of the context matrix
    std::vector<double> kx;  // maxpool of the predicted keyword rows
  };
  Query query(std::span<const Utterance> context, std::span<const KeywordId> predicted) const;
  MatchScore score(const Query& q, std::size_t id, double lambda_k) const;

  const ResponsePool& pool() const { return *pool_; }
  const MatcherModel& model() const { return *model_; }
  const Matrix& nodes() const { return nodes_; }
  std::size_t size() const { return y_.size(); }

 private:
  const MatcherModel* model_ = nullptr;
  const ResponsePool* pool_ = nullptr;
  Matrix nodes_;
  std::vector<std::vector<double>> y_;
  std::vector<std::vector<double>> ky_;
};

enum class ResponseTier { kSelectedKeyword = 1, kCloserKeyword = 2, kTopScore = 3 };

struct ResponseChoice {
  std::size_t pool_id = 0;
  ResponseTier tier = ResponseTier::kTopScore;
  MatchScore score;
  std::size_t rank = 0;  // 0-based position in the score order
};

struct RespondRequest {
  std::span<const Utterance> context;
  std::span<const KeywordId> predicted;  // top keywords of the predictor
  const TransitionDecision* decision = nullptr;
  const KeywordDistance* distance = nullptr;
  std::size_t pool_size = kDefaultPoolSize;
  const std::unordered_set<std::size_t>* exclude = nullptr;  // pool ids already used
  bool keyword_tiers = true;
  std::optional<double> lambda_override;
};

// Scores the pool, keeps the pool_size best and applies the keyword tiers:
// (1) contains the selected keyword, (2) contains a keyword closer to the
// target than the current best, (3) highest score. Throws ConfigError on an
// empty pool.
ResponseChoice agent_respond(const PoolIndex& index, const RespondRequest& req);

// Predicted top-k keywords for each example's context (frozen predictor).
std::vector<std::vector<KeywordId>> predicted_keywords(const KeywordPredictor& predictor,
                                                       std::span<const RetrievalExample> examples, std::size_t k = 3);

// Examples together with the pool their candidate ids point into and the
// predictor's keywords per example.
struct RetrievalSplit {
  const ResponsePool* pool = nullptr;
  std::span<const RetrievalExample> examples;
  std::span<const std::vector<KeywordId>> predicted;
};

TrainResult train_matcher(MatcherModel& model, const RetrievalSplit& train, const RetrievalSplit& valid,
                          const TrainConfig& config, const EpochCallback& on_epoch = {});

// R@1, R@3, R@5 and MRR over the 20 candidates of each example. Every
// emitted score is appended to `scores` when given.
MetricSummary evaluate_matcher(const MatcherModel& model, const RetrievalSplit& split,
                               std::vector<MatchScore>* scores = nullptr);

}  // namespace ckc
