#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "ckc/errors.hpp"
#include "ckc/simulator.hpp"
#include "ckc/synthetic.hpp"
#include "oracles.hpp"

namespace ckc {
namespace {

TEST(SuccessCheck, ContiguousWordMatch) {
  std::vector<std::string> w = {"i", "love", "ice", "cream", "today"};
  EXPECT_TRUE(success_check(w, "love"));
  EXPECT_TRUE(success_check(w, "ice_cream"));
  EXPECT_FALSE(success_check(w, "cream_ice"));
  EXPECT_FALSE(success_check(w, "lov"));
  EXPECT_FALSE(success_check(w, ""));
  EXPECT_FALSE(success_check({}, "love"));
}

struct ChainWorld {
  SyntheticCorpus corpus = make_chain_corpus(6);
  Resources res = testing::build_from(corpus);
  std::vector<Conversation> convs = ingest(corpus.train, res, "train").conversations;
  ResponsePool pool = ResponsePool::build(convs);
  MatcherModel matcher{res, [] {
                         MatcherConfig mc;
                         mc.dim = 8;
                         return mc;
                       }()};
  PoolIndex index = PoolIndex::build(matcher, pool, 1);
  OraclePredictor oracle{res};
  Agent agent{res, oracle, index};
  KeywordEchoUser echo{res};

  KeywordId kw(const std::string& w) const { return res.keywords().id(w); }
};

const ChainWorld& chain() {
  static const ChainWorld w;
  return w;
}

TEST(KeywordEchoUser, RepeatsKeywordsOnly) {
  const auto& w = chain();
  std::vector<Utterance> t = {w.res.process("well w2 and then w3 maybe")};
  auto r = w.echo.reply(t, {});
  EXPECT_EQ(r.utterance.words, (std::vector<std::string>{"w2", "w3"}));
  EXPECT_FALSE(r.pool_id);
}

TEST(RunDialogue, OracleWalksTheChain) {
  const auto& w = chain();
  DistanceCache cache(w.res.graph());
  SimulationConfig cfg;
  auto r = run_dialogue(w.agent, w.echo, {w.res.process("tell me about w0"), w.kw("w4")}, cache, cfg);
  ASSERT_FALSE(r.aborted) << r.error;
  EXPECT_TRUE(r.success);
  EXPECT_LE(r.agent_turns_used, 4u);
  for (std::size_t i = 1; i < r.distance_trace.size(); ++i) EXPECT_LT(r.distance_trace[i], r.distance_trace[i - 1]);
  EXPECT_EQ(r.transcript.front().speaker, Speaker::kUser);
  EXPECT_EQ(r.transcript[1].speaker, Speaker::kAgent);
}

TEST(RunDialogue, FailsAfterMaxTurns) {
  const auto& w = chain();
  DistanceCache cache(w.res.graph());
  SimulationConfig cfg;
  cfg.max_agent_turns = 1;
  auto r = run_dialogue(w.agent, w.echo, {w.res.process("tell me about w0"), w.kw("w6")}, cache, cfg);
  EXPECT_FALSE(r.success);
  EXPECT_EQ(r.agent_turns_used, 1u);
  cfg.max_agent_turns = 0;
  EXPECT_THROW(run_dialogue(w.agent, w.echo, {w.res.process("w0"), w.kw("w6")}, cache, cfg), ConfigError);
}

TEST(RunDialogue, NoRepeatKeepsPoolIdsDistinct) {
  const auto& w = chain();
  BaseUser user(w.index);
  DistanceCache cache(w.res.graph());
  SimulationConfig cfg;
  auto r = run_dialogue(w.agent, user, {w.res.process("tell me about w0"), w.kw("w6")}, cache, cfg);
  std::set<std::size_t> seen;
  for (const auto& e : r.transcript)
    if (e.pool_id) EXPECT_TRUE(seen.insert(*e.pool_id).second);
}

TEST(SampleDialogues, SeededAndTargetsAreNotMentioned) {
  const auto& w = chain();
  std::vector<Utterance> openers;
  for (const auto& c : w.convs) openers.push_back(c.utterances.front());
  SimulationConfig cfg;
  cfg.n_dialogues = 50;
  auto a = sample_dialogues(w.res, openers, cfg);
  auto b = sample_dialogues(w.res, openers, cfg);
  ASSERT_EQ(a.size(), 50u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].target, b[i].target);
    EXPECT_EQ(a[i].start, b[i].start);
    EXPECT_FALSE(success_check(a[i].start.words, w.res.keywords().word(a[i].target)));
  }
  cfg.seed = 8;
  auto c = sample_dialogues(w.res, openers, cfg);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) differs |= a[i].target != c[i].target || !(a[i].start == c[i].start);
  EXPECT_TRUE(differs);
  std::vector<Utterance> none = {w.res.process("nothing here")};
  EXPECT_THROW(sample_dialogues(w.res, none, cfg), ConfigError);
}

TEST(RunSelfplay, ThreadCountDoesNotChangeResults) {
  const auto& w = chain();
  std::vector<Utterance> openers;
  for (const auto& c : w.convs) openers.push_back(c.utterances.front());
  SimulationConfig cfg;
  cfg.n_dialogues = 30;
  auto specs = sample_dialogues(w.res, openers, cfg);
  cfg.threads = 1;
  auto one = run_selfplay(w.agent, w.echo, specs, cfg);
  cfg.threads = 3;
  auto three = run_selfplay(w.agent, w.echo, specs, cfg);
  std::ostringstream a, b;
  write_transcripts(a, w.res, one, cfg);
  write_transcripts(b, w.res, three, cfg);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(one.successes, 30u);
  ASSERT_TRUE(one.mean_turns);
  std::ostringstream tsv;
  write_selfplay_tsv(tsv, one, cfg);
  EXPECT_NE(tsv.str().find("Succ.\t#Turns"), std::string::npos);
  EXPECT_NE(tsv.str().find("100.00\t"), std::string::npos);
}

TEST(Agent, EmptyTranscriptIsRejected) {
  const auto& w = chain();
  auto dmap = distance_from_target(w.res.graph(), 0);
  EXPECT_THROW(w.agent.respond({}, 0, dmap, {}), ContractViolation);
}

}  // namespace
}  // namespace ckc
