#include "ckc/strategy.hpp"

#include <algorithm>
#include <cmath>

#include "ckc/errors.hpp"

namespace ckc {

std::string_view to_string(RelaxationLevel level) {
  switch (level) {
    case RelaxationLevel::kStrict: return "strict";
    case RelaxationLevel::kRelaxedEq: return "relaxed_eq";
    case RelaxationLevel::kFallbackArgmax: return "fallback_argmax";
  }
  return "fallback_argmax";
}

double GraphKeywordDistance::operator()(KeywordId k) const {
  auto n = res_->keyword_node(k);
  return n ? dmap_->at(*n) : kUnreachable;
}

double EmbeddingKeywordDistance::operator()(KeywordId k) const {
  auto a = embedding_->row_span(res_->keywords().token(k));
  auto b = embedding_->row_span(res_->keywords().token(target_));
  const double na = std::sqrt(dot(a, a)), nb = std::sqrt(dot(b, b));
  if (na == 0.0 || nb == 0.0) return kUnreachable;
  return 1.0 - dot(a, b) / (na * nb);
}

TransitionDecision select_keyword(const PredictorOutput& output, std::span<const KeywordId> current,
                                  KeywordId target, const KeywordDistance& dist, const StrategyConfig& config) {
  if (output.mask.empty()) throw ContractViolation("keyword selection needs a nonempty distribution");
  TransitionDecision d;
  for (auto k : current) d.current_best_dist = std::min(d.current_best_dist, dist(k));

  std::vector<double> kd(output.mask.size());
  for (std::size_t i = 0; i < kd.size(); ++i) kd[i] = dist(output.mask[i]);

  auto argmax = [&](auto&& admissible) -> std::optional<std::size_t> {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < output.mask.size(); ++i) {
      if (output.probs[i] <= 0.0 || !admissible(i)) continue;
      // mask is sorted, so the first maximum has the smallest id
      if (!best || output.probs[i] > output.probs[*best]) best = i;
    }
    return best;
  };

  std::optional<std::size_t> pick;
  if (config.force_target_when_adjacent) {
    for (std::size_t i = 0; i < output.mask.size(); ++i)
      if (output.mask[i] == target && output.probs[i] > 0.0 && kd[i] < d.current_best_dist) pick = i;
  }
  d.level = RelaxationLevel::kStrict;
  if (!pick) pick = argmax([&](std::size_t i) { return kd[i] < d.current_best_dist; });
  if (!pick) {
    d.level = RelaxationLevel::kRelaxedEq;
    pick = argmax([&](std::size_t i) { return kd[i] != kUnreachable && kd[i] <= d.current_best_dist; });
  }
  if (!pick) {
    d.level = RelaxationLevel::kFallbackArgmax;
    pick = argmax([](std::size_t) { return true; });
  }
  if (!pick) throw ContractViolation("keyword selection: every candidate has zero probability");
  d.chosen = output.mask[*pick];
  d.probability = output.probs[*pick];
  d.dist_to_target = kd[*pick];
  return d;
}

std::vector<KeywordId> current_keywords(std::span<const Utterance> transcript) {
  for (auto it = transcript.rbegin(); it != transcript.rend(); ++it)
    if (!it->keywords.empty()) return it->keywords;
  return {};
}

std::shared_ptr<const DistanceMap> DistanceCache::get(NodeId target) {
  {
    std::shared_lock lock(mu_);
    auto it = cache_.find(target);
    if (it != cache_.end()) return it->second;
  }
  auto dm = std::make_shared<const DistanceMap>(distance_from_target(*graph_, target));
  std::unique_lock lock(mu_);
  return cache_.try_emplace(target, std::move(dm)).first->second;
}

std::size_t DistanceCache::size() const {
  std::shared_lock lock(mu_);
  return cache_.size();
}

}  // namespace ckc
