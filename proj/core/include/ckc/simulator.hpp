#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "ckc/corpus.hpp"
#include "ckc/matcher.hpp"
#include "ckc/predictor.hpp"
#include "ckc/strategy.hpp"

namespace ckc {

// True iff the target's words occur as a contiguous run of `words`
// (exact lowercase match; multi-word labels use '_').
bool success_check(std::span<const std::string> words, std::string_view target);

struct AgentConfig {
  StrategyConfig strategy;
  std::size_t pool_size = kDefaultPoolSize;
  bool keyword_tiers = true;
  // When set, keyword closeness is 1 - cosine over this table's rows instead
  // of graph distance.
  const Matrix* strategy_embedding = nullptr;
};

struct AgentTurn {
  std::size_t pool_id = 0;
  std::optional<TransitionDecision> decision;
  TopK predicted;
  ResponseChoice choice;
};

// Predict -> select keyword -> retrieve, over a frozen pool index.
class Agent {
 public:
  Agent(const Resources& res, const KeywordPredictor& predictor, const PoolIndex& index, AgentConfig config = {})
      : res_(&res), predictor_(&predictor), index_(&index), config_(config) {}

  AgentTurn respond(std::span<const Utterance> transcript, KeywordId target, const DistanceMap& dmap,
                    const std::unordered_set<std::size_t>& used) const;

  const Resources& resources() const { return *res_; }
  const PoolIndex& index() const { return *index_; }
  const AgentConfig& config() const { return config_; }

 private:
  const Resources* res_;
  const KeywordPredictor* predictor_;
  const PoolIndex* index_;
  AgentConfig config_;
};

struct UserTurn {
  Utterance utterance;
  std::optional<std::size_t> pool_id;
};

class Interlocutor {
 public:
  virtual ~Interlocutor() = default;
  virtual UserTurn reply(std::span<const Utterance> transcript, const std::unordered_set<std::size_t>& used) const = 0;
};

// Passive retrieval user: top utterance score with no keyword matching.
class BaseUser final : public Interlocutor {
 public:
  explicit BaseUser(const PoolIndex& index) : index_(&index) {}
  UserTurn reply(std::span<const Utterance> transcript, const std::unordered_set<std::size_t>& used) const override;

 private:
  const PoolIndex* index_;
};

// Repeats the keywords of the previous utterance back, nothing else.
class KeywordEchoUser final : public Interlocutor {
 public:
  explicit KeywordEchoUser(const Resources& res) : res_(&res) {}
  UserTurn reply(std::span<const Utterance> transcript, const std::unordered_set<std::size_t>& used) const override;

 private:
  const Resources* res_;
};

struct SimulationConfig {
  std::size_t max_agent_turns = 8;
  std::size_t n_dialogues = 1000;
  std::uint64_t seed = 7;
  std::size_t threads = 0;  // 0 = hardware concurrency
  bool no_repeat = true;  // never reuse a pool response within a dialogue
};

enum class Speaker { kUser, kAgent };

struct TranscriptEntry {
  Speaker speaker = Speaker::kUser;
  Utterance utterance;
  std::optional<std::size_t> pool_id;
};

struct TraceStep {
  std::size_t agent_turn = 0;
  TransitionDecision decision;
  TopK predicted;
  ResponseTier tier = ResponseTier::kTopScore;
  MatchScore score;
};

struct SimulationResult {
  KeywordId target = 0;
  bool success = false;
  bool aborted = false;
  std::string error;
  std::size_t agent_turns_used = 0;
  std::vector<TranscriptEntry> transcript;
  std::vector<TraceStep> keyword_trace;
  std::vector<double> distance_trace;
  std::size_t relaxations = 0;  // decisions not taken at the strict level
};

struct DialogueSpec {
  Utterance start;
  KeywordId target = 0;
};

SimulationResult run_dialogue(const Agent& agent, const Interlocutor& user, const DialogueSpec& spec,
                              DistanceCache& distances, const SimulationConfig& config);

// Seeded start/target sampling: starts are drawn from `openers` that have a
// keyword on the graph; targets uniformly from keywords in the same
// connected component that the opener does not mention.
std::vector<DialogueSpec> sample_dialogues(const Resources& res, std::span<const Utterance> openers,
                                           const SimulationConfig& config);

struct SelfPlaySummary {
  std::size_t dialogues = 0;
  std::size_t successes = 0;
  std::size_t aborted = 0;
  std::size_t relaxations = 0;
  double success_rate = 0.0;  // over non-aborted dialogues
  std::optional<double> mean_turns;  // over successful dialogues
  std::vector<SimulationResult> results;
};

// Dialogues run concurrently; results keep spec order.
SelfPlaySummary run_selfplay(const Agent& agent, const Interlocutor& user, std::span<const DialogueSpec> specs,
                             const SimulationConfig& config);

void write_transcripts(std::ostream& out, const Resources& res, const SelfPlaySummary& summary,
                       const SimulationConfig& config);
// Succ. (%) and #Turns columns plus counts.
void write_selfplay_tsv(std::ostream& out, const SelfPlaySummary& summary, const SimulationConfig& config);

std::string_view to_string(Speaker s);

}  // namespace ckc
