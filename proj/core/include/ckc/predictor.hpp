#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ckc/autodiff.hpp"
#include "ckc/corpus.hpp"
#include "ckc/layers.hpp"
#include "ckc/metrics.hpp"
#include "ckc/optim.hpp"
#include "ckc/params.hpp"

namespace ckc {

// Probabilities over a candidate mask; keywords outside `mask` have
// probability zero.
struct PredictorOutput {
  std::vector<KeywordId> mask;  // sorted ascending
  std::vector<double> probs;  // aligned with mask

  bool empty() const { return mask.empty(); }
  double prob(KeywordId k) const;
};

struct TopK {
  std::vector<std::pair<KeywordId, double>> items;
  bool truncated = false;  // fewer than k candidates were available
};

// Highest probabilities first, ties by smaller keyword id.
TopK predict_topk(const PredictorOutput& out, std::size_t k = 3);

struct PredictRequest {
  std::span<const Utterance> context;  // oldest first; the last two are used
  const DistanceMap* target = nullptr;  // only oracle predictors look at this
};

class KeywordPredictor {
 public:
  virtual ~KeywordPredictor() = default;
  // Empty output when the context has no keyword on the graph.
  virtual PredictorOutput predict(const PredictRequest& req) const = 0;
};

// Context keywords k_{n-1} u k_n of the last two utterances, sorted.
std::vector<KeywordId> context_keywords(std::span<const Utterance> context);

// Re-derives the support of `out` from graph adjacency and throws
// ContractViolation on any mass outside neighbours(context) \ context or on
// probabilities that do not sum to one. Every call is counted.
void verify_mask_support(const Resources& res, std::span<const KeywordId> context, const PredictorOutput& out);
struct MaskAuditCounts {
  std::uint64_t predictions = 0;
  std::uint64_t violations = 0;
};
MaskAuditCounts mask_audit_counts();

struct PredictorConfig {
  std::size_t embed_dim = 200;  // also the node state width d2
  std::size_t hidden = 200;  // d1
  std::size_t top_relations = 12;
  bool use_concepts = true;
  std::uint64_t seed = 13;

  std::string to_json() const;
  static PredictorConfig from_json(const std::string& s);
};

// HGRU context encoder + one-layer GGNN over the graph + linear classifier
// over the keyword vocabulary.
class PredictorModel final : public KeywordPredictor {
 public:
  PredictorModel(const Resources& res, PredictorConfig config);

  const PredictorConfig& config() const { return config_; }
  const Resources& resources() const { return *res_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // 1 x |KeywordVocab| logits for the last two context utterances.
  Var logits(Tape& t, std::span<const Utterance> context) const;
  // Sum over gold of -log p(gold) under the example's mask.
  Var loss(Tape& t, const PredictionExample& ex) const;

  PredictorOutput forward(std::span<const Utterance> context, std::span<const KeywordId> mask) const;
  PredictorOutput predict(const PredictRequest& req) const override;

  // Rows of the embedding table, by token id.
  const Matrix& embedding() const { return embedding_->value; }

  void save(const std::filesystem::path& path, std::uint32_t epoch = 0) const;
  static PredictorModel load(const std::filesystem::path& path, const Resources& res);

 private:
  const Resources* res_;
  PredictorConfig config_;
  ParamStore params_;
  Parameter* embedding_ = nullptr;
  GruParams word_gru_;
  GruParams utt_gru_;
  GgnnParams ggnn_;
  Parameter* out_w_ = nullptr;
  Parameter* out_b_ = nullptr;
  NodeLexicon lexicon_;
  GgnnGraphView view_;
};

// Copies rows of a whitespace-separated `token v1 ... vd` file into the
// embedding table. Returns the number of rows replaced.
std::size_t load_pretrained_embeddings(const std::filesystem::path& path, const Vocab& vocab, Matrix& table);

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  AdamConfig adam;
  std::size_t patience = 5;
  std::uint64_t seed = 13;
  bool eval_train = false;  // also report train R@1 each epoch
};

struct EpochStats {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double train_r1 = std::numeric_limits<double>::quiet_NaN();
  double valid_r1 = std::numeric_limits<double>::quiet_NaN();
  double lr = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> epochs;
  std::size_t best_epoch = 0;
  double best_valid = std::numeric_limits<double>::quiet_NaN();
  bool stopped_early = false;
};

using EpochCallback = std::function<void(const EpochStats&)>;

// Adam over shuffled mini-batches with gradients averaged per batch. With a
// validation set the best-R@1 parameters are restored at the end and
// training stops after `patience` epochs without improvement.
TrainResult train_predictor(PredictorModel& model, std::span<const PredictionExample> train,
                            std::span<const PredictionExample> valid, const TrainConfig& config,
                            const EpochCallback& on_epoch = {});

// R@1, R@3, R@5 and P@1 over the examples' masks and gold sets.
MetricSummary evaluate_predictor(const KeywordPredictor& predictor, const Resources& res,
                                 std::span<const PredictionExample> examples);

// Smoothed PMI over adjacent-turn keyword transitions:
// log[(c(a->b)+a) T / ((c_src(a)+a) (c_tgt(b)+a))].
class PmiTable {
 public:
  static constexpr double kDefaultAlpha = 1.0;

  static PmiTable fit(std::span<const Conversation> convs, double alpha = kDefaultAlpha);

  double pmi(KeywordId a, KeywordId b) const;
  std::size_t total() const { return total_; }
  std::size_t count(KeywordId a, KeywordId b) const;

  void save(std::ostream& out) const;
  static PmiTable load(std::istream& in);

 private:
  double alpha_ = kDefaultAlpha;
  std::size_t total_ = 0;
  std::map<std::pair<KeywordId, KeywordId>, std::size_t> pair_;
  std::map<KeywordId, std::size_t> src_;
  std::map<KeywordId, std::size_t> tgt_;
};

// Mean PMI from the context keywords, softmax-normalised over the mask.
class PmiPredictor final : public KeywordPredictor {
 public:
  PmiPredictor(const Resources& res, PmiTable table) : res_(&res), table_(std::move(table)) {}
  PredictorOutput predict(const PredictRequest& req) const override;
  const PmiTable& table() const { return table_; }

 private:
  const Resources* res_;
  PmiTable table_;
};

// Test and simulation helper: puts `confidence` on the masked keyword
// closest to the request's target (ties by id) and spreads the rest
// uniformly. Without a target the distribution is uniform.
class OraclePredictor final : public KeywordPredictor {
 public:
  explicit OraclePredictor(const Resources& res, double confidence = 0.9) : res_(&res), confidence_(confidence) {}
  PredictorOutput predict(const PredictRequest& req) const override;

 private:
  const Resources* res_;
  double confidence_;
};

}  // namespace ckc
