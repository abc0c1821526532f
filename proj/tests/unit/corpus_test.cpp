#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "ckc/corpus.hpp"
#include "ckc/errors.hpp"
#include "ckc/predictor.hpp"
#include "ckc/synthetic.hpp"
#include "oracles.hpp"

namespace ckc {
namespace {

const Resources& toy() {
  static const Resources res = testing::toy_resources();
  return res;
}

std::vector<Conversation> toy_train() { return ingest(testing::toy_corpus().train, toy(), "train").conversations; }

TEST(Resources, ToyVocabularies) {
  const auto& res = toy();
  EXPECT_EQ(res.keywords().size(), 5u);
  for (KeywordId k = 0; k < res.keywords().size(); ++k) EXPECT_TRUE(res.keyword_node(k));
  EXPECT_FALSE(res.node_keyword(*res.graph().find("red_fruit")));
}

TEST(Resources, ProcessExtractsKeywordsAndConcepts) {
  const auto& res = toy();
  auto u = res.process("I like Apple with red fruit!");
  EXPECT_EQ(u.words, (std::vector<std::string>{"i", "like", "apple", "with", "red", "fruit", "!"}));
  ASSERT_EQ(u.keywords.size(), 1u);
  EXPECT_EQ(res.keywords().word(u.keywords[0]), "apple");
  // concepts exclude the keyword's own node
  ASSERT_EQ(u.concepts.size(), 1u);
  EXPECT_EQ(res.graph().label(u.concepts[0]), "red_fruit");
  EXPECT_EQ(u.tokens.size(), u.words.size());
}

TEST(Resources, ProcessTruncatesToThirtyTokensAndTenKeywords) {
  const auto& res = toy();
  std::string text;
  for (int i = 0; i < 20; ++i) text += "apple banana cherry grape lemon ";
  auto u = res.process(text);
  EXPECT_EQ(u.words.size(), kMaxUtteranceTokens);
  EXPECT_LE(u.keywords.size(), kMaxKeywords);
  EXPECT_EQ(u.keywords.size(), 5u);
}

TEST(Resources, CandidateMaskIsNeighboursMinusContext) {
  const auto& res = toy();
  auto id = [&](const char* w) { return res.keywords().id(w); };
  std::vector<KeywordId> ctx = {id("apple")};
  auto mask = res.candidate_mask(ctx);
  std::vector<KeywordId> expect = {id("banana"), id("cherry")};
  std::sort(expect.begin(), expect.end());
  EXPECT_EQ(mask, expect);
  std::vector<KeywordId> two = {id("apple"), id("banana")};
  std::sort(two.begin(), two.end());
  auto m2 = res.candidate_mask(two);
  EXPECT_EQ(m2, std::vector<KeywordId>{id("cherry")});
  EXPECT_TRUE(res.candidate_mask({}).empty());
}

TEST(Resources, SaveLoadRoundTrip) {
  const auto& res = toy();
  const auto dir = testing::temp_dir("resources");
  res.save(dir);
  auto back = Resources::load(dir);
  EXPECT_EQ(back.vocab().tokens(), res.vocab().tokens());
  EXPECT_EQ(back.keywords().words(), res.keywords().words());
  EXPECT_EQ(back.graph().labels(), res.graph().labels());
  for (const auto* text : {"apple with red fruit", "lemon has a sour taste", "grape and lemon"})
    EXPECT_EQ(back.process(text), res.process(text));
  std::filesystem::remove_all(dir);
}

TEST(ReadConversations, ParsesJsonLinesAndReportsBadLine) {
  std::stringstream ok("{\"utterances\":[\"a\",\"b\"]}\n\n{\"utterances\":[\"c\"]}\n");
  auto convs = read_conversations(ok);
  ASSERT_EQ(convs.size(), 2u);
  EXPECT_EQ(convs[0][1], "b");
  std::stringstream bad("{\"utterances\":[\"a\"]}\n{\"nope\":1}\n");
  try {
    read_conversations(bad);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(Ingest, DropsConversationsShorterThanTwo) {
  std::vector<std::vector<std::string>> raw = {{"apple"}, {"apple", "banana"}, {}};
  auto r = ingest(raw, toy(), "x");
  EXPECT_EQ(r.conversations.size(), 1u);
  EXPECT_EQ(r.dropped, 2u);
  EXPECT_EQ(r.conversations[0].split, "x");
}

// Property: every example obeys the windowing and neighbourhood rules.
TEST(PredictionExamples, WindowAndMaskRulesOnSyntheticCorpus) {
  auto corpus = make_synthetic_corpus();
  auto res = testing::build_from(corpus);
  auto convs = ingest(corpus.train, res, "train").conversations;
  auto set = make_prediction_examples(convs, res);
  ASSERT_FALSE(set.examples.empty());
  std::size_t windows = 0;
  for (const auto& c : convs) windows += c.utterances.size() >= 3 ? c.utterances.size() - 2 : 0;
  EXPECT_EQ(set.examples.size() + set.dropped, windows);
  for (const auto& ex : set.examples) {
    ASSERT_EQ(ex.context.size(), 2u);
    const auto& conv = convs[ex.conversation].utterances;
    ASSERT_GE(ex.position, 1u);
    ASSERT_LT(ex.position + 1, conv.size());
    EXPECT_EQ(ex.context[0], conv[ex.position - 1]);
    EXPECT_EQ(ex.context[1], conv[ex.position]);
    EXPECT_EQ(ex.context_keywords, context_keywords(ex.context));
    EXPECT_EQ(ex.mask, res.candidate_mask(ex.context_keywords));
    EXPECT_FALSE(ex.gold.empty());
    EXPECT_TRUE(std::is_sorted(ex.gold.begin(), ex.gold.end()));
    for (auto g : ex.gold) {
      EXPECT_TRUE(std::binary_search(ex.mask.begin(), ex.mask.end(), g));
      const auto& next = conv[ex.position + 1].keywords;
      EXPECT_NE(std::find(next.begin(), next.end(), g), next.end());
    }
  }
}

TEST(ResponsePool, DeduplicatesByTruncatedTokens) {
  auto convs = toy_train();
  convs.push_back({{toy().process("Apple pie"), toy().process("banana   bread")}, "train"});
  auto pool = ResponsePool::build(convs);
  std::set<std::string> keys;
  for (const auto& e : pool.entries()) EXPECT_TRUE(keys.insert(ResponsePool::key(e)).second);
  auto id = pool.find(toy().process("apple pie"));
  ASSERT_TRUE(id);
  EXPECT_EQ(pool.sources(*id).size(), 2u);
  EXPECT_FALSE(pool.find(toy().process("never said this")));
  std::stringstream s;
  pool.save(s);
  auto back = ResponsePool::load(s);
  ASSERT_EQ(back.size(), pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) EXPECT_EQ(ResponsePool::key(back.at(i)), ResponsePool::key(pool.at(i)));
}

TEST(RetrievalExamples, CandidateRules) {
  auto corpus = make_synthetic_corpus();
  auto res = testing::build_from(corpus);
  auto convs = ingest(corpus.train, res, "train").conversations;
  auto pool = ResponsePool::build(convs);
  auto examples = make_retrieval_examples(convs, pool, 9);
  std::size_t expected = 0;
  for (const auto& c : convs) expected += c.utterances.size() - 1;
  ASSERT_EQ(examples.size(), expected);
  std::set<std::size_t> gold_slots;
  for (const auto& ex : examples) {
    ASSERT_EQ(ex.candidates.size(), kRetrievalCandidates);
    ASSERT_LE(ex.context.size(), kMaxRetrievalContext);
    const auto& conv = convs[ex.conversation].utterances;
    EXPECT_EQ(ex.context.back(), conv[ex.position - 1]);
    EXPECT_EQ(pool.at(ex.candidates[ex.gold_index]), conv[ex.position]);
    std::set<std::size_t> distinct(ex.candidates.begin(), ex.candidates.end());
    EXPECT_EQ(distinct.size(), kRetrievalCandidates);
    for (std::size_t i = 0; i < ex.candidates.size(); ++i) {
      if (i == ex.gold_index) continue;
      const auto& src = pool.sources(ex.candidates[i]);
      EXPECT_EQ(std::find(src.begin(), src.end(), ex.conversation), src.end());
    }
    gold_slots.insert(ex.gold_index);
  }
  EXPECT_GT(gold_slots.size(), 10u);
  auto again = make_retrieval_examples(convs, pool, 9);
  for (std::size_t i = 0; i < examples.size(); ++i) EXPECT_EQ(again[i].candidates, examples[i].candidates);
}

TEST(RetrievalExamples, TooSmallPoolIsAConfigError) {
  auto convs = toy_train();
  auto pool = ResponsePool::build(convs);
  EXPECT_THROW(make_retrieval_examples(convs, pool, 1), ConfigError);
}

TEST(Jsonl, PredictionAndRetrievalExamplesRoundTrip) {
  auto corpus = make_synthetic_corpus();
  auto res = testing::build_from(corpus);
  auto convs = ingest(corpus.train, res, "train").conversations;
  auto preds = make_prediction_examples(convs, res).examples;
  std::stringstream ps;
  save_prediction_examples(ps, preds);
  auto back = load_prediction_examples(ps);
  ASSERT_EQ(back.size(), preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    EXPECT_EQ(back[i].mask, preds[i].mask);
    EXPECT_EQ(back[i].gold, preds[i].gold);
    EXPECT_EQ(back[i].context, preds[i].context);
  }
  auto pool = ResponsePool::build(convs);
  auto rets = make_retrieval_examples(convs, pool, 2);
  std::stringstream rs;
  save_retrieval_examples(rs, rets);
  auto rback = load_retrieval_examples(rs);
  ASSERT_EQ(rback.size(), rets.size());
  for (std::size_t i = 0; i < rets.size(); ++i) {
    EXPECT_EQ(rback[i].candidates, rets[i].candidates);
    EXPECT_EQ(rback[i].gold_index, rets[i].gold_index);
    EXPECT_EQ(rback[i].context, rets[i].context);
  }
  std::stringstream cs;
  save_conversations(cs, convs);
  EXPECT_EQ(load_conversations(cs), convs);
}

TEST(Fixture, TwentyConversationsRespectCaps) {
  auto corpus = make_synthetic_corpus();
  auto res = testing::build_from(corpus);
  auto raw = read_conversations(std::filesystem::path(CKC_FIXTURE_DIR) / "conversations_20.jsonl");
  ASSERT_EQ(raw.size(), 20u);
  auto convs = ingest(raw, res, "fixture").conversations;
  bool capped = false;
  for (const auto& c : convs)
    for (const auto& u : c.utterances) {
      EXPECT_LE(u.words.size(), kMaxUtteranceTokens);
      EXPECT_LE(u.keywords.size(), kMaxKeywords);
      capped |= u.words.size() == kMaxUtteranceTokens;
    }
  EXPECT_TRUE(capped);
}

}  // namespace
}  // namespace ckc
