#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string_view>
#include <vector>

#include "ckc/corpus.hpp"
#include "ckc/graph.hpp"
#include "ckc/predictor.hpp"

namespace ckc {

enum class RelaxationLevel { kStrict, kRelaxedEq, kFallbackArgmax };
std::string_view to_string(RelaxationLevel level);

struct TransitionDecision {
  KeywordId chosen = 0;
  double probability = 0.0;
  double dist_to_target = kUnreachable;
  double current_best_dist = kUnreachable;
  RelaxationLevel level = RelaxationLevel::kFallbackArgmax;
};

// Distance of a keyword to the current target. Unknown or unreachable
// keywords report kUnreachable.
class KeywordDistance {
 public:
  virtual ~KeywordDistance() = default;
  virtual double operator()(KeywordId k) const = 0;
};

// Reciprocal-weight path length on the graph.
class GraphKeywordDistance final : public KeywordDistance {
 public:
  GraphKeywordDistance(const Resources& res, const DistanceMap& dmap) : res_(&res), dmap_(&dmap) {}
  double operator()(KeywordId k) const override;

 private:
  const Resources* res_;
  const DistanceMap* dmap_;
};

// Ablation: 1 - cosine similarity of embedding rows.
class EmbeddingKeywordDistance final : public KeywordDistance {
 public:
  EmbeddingKeywordDistance(const Resources& res, const Matrix& embedding, KeywordId target)
      : res_(&res), embedding_(&embedding), target_(target) {}
  double operator()(KeywordId k) const override;

 private:
  const Resources* res_;
  const Matrix* embedding_;
  KeywordId target_;
};

struct StrategyConfig {
  bool force_target_when_adjacent = false;
};

// Highest-probability keyword strictly closer to the target than the best
// current keyword; relaxes to "no farther", then to the plain argmax.
// Probability ties go to the smaller keyword id.
TransitionDecision select_keyword(const PredictorOutput& output, std::span<const KeywordId> current,
                                  KeywordId target, const KeywordDistance& dist, const StrategyConfig& config = {});

// Keywords of the most recent utterance that has any.
std::vector<KeywordId> current_keywords(std::span<const Utterance> transcript);

// Thread-safe per-target cache of distance maps.
class DistanceCache {
 public:
  explicit DistanceCache(const CkgGraph& graph) : graph_(&graph) {}
  std::shared_ptr<const DistanceMap> get(NodeId target);
  std::size_t size() const;

 private:
  const CkgGraph* graph_;
  mutable std::shared_mutex mu_;
  std::map<NodeId, std::shared_ptr<const DistanceMap>> cache_;
};

}  // namespace ckc
