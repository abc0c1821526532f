#include <gtest/gtest.h>

#include <numeric>
#include <random>
#include <sstream>

#include "ckc/errors.hpp"
#include "ckc/metrics.hpp"
#include "oracles.hpp"

namespace ckc {
namespace {

TEST(Metrics, SmallExamples) {
  RankedPrediction p{{4, 2, 7, 1, 0}, {2, 0}};
  EXPECT_DOUBLE_EQ(recall_at_k(p, 1), 0.0);
  EXPECT_DOUBLE_EQ(recall_at_k(p, 2), 0.5);
  EXPECT_DOUBLE_EQ(recall_at_k(p, 5), 1.0);
  EXPECT_DOUBLE_EQ(recall_at_k(p, 50), 1.0);
  EXPECT_DOUBLE_EQ(precision_at_1(p), 0.0);
  EXPECT_DOUBLE_EQ(precision_at_1({{2, 4}, {2, 0}}), 1.0);
  EXPECT_DOUBLE_EQ(reciprocal_rank({{4, 2, 7}, {7}}), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(reciprocal_rank({{4, 2, 7}, {4}}), 1.0);
}

TEST(Metrics, ReciprocalRankNeedsGoldInRanking) {
  EXPECT_THROW(reciprocal_rank({{1, 2}, {3}}), ContractViolation);
}

TEST(Metrics, RankByScoreBreaksTiesBySmallerId) {
  std::vector<double> s = {0.5, 0.9, 0.5, 0.9, 0.1};
  EXPECT_EQ(rank_by_score(s), (std::vector<std::uint32_t>{1, 3, 0, 2, 4}));
}

TEST(Metrics, MatchBruteForceOnRandomLists) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 500; ++i) {
    const std::size_t n = 1 + rng() % 25;
    std::vector<std::uint32_t> ranking(n);
    std::iota(ranking.begin(), ranking.end(), 0u);
    std::shuffle(ranking.begin(), ranking.end(), rng);
    std::vector<std::uint32_t> gold = {static_cast<std::uint32_t>(rng() % n)};
    if (n > 1 && rng() % 2) gold.push_back((gold[0] + 1) % n);
    RankedPrediction p{ranking, gold};
    for (std::size_t k = 1; k <= n + 1; ++k)
      ASSERT_EQ(recall_at_k(p, k), testing::oracle_recall_at_k(ranking, gold, k));
    ASSERT_EQ(precision_at_1(p), testing::oracle_precision_at_1(ranking, gold));
    ASSERT_EQ(reciprocal_rank({ranking, {gold[0]}}), testing::oracle_reciprocal_rank(ranking, gold[0]));
  }
}

TEST(Metrics, RecallIsMonotoneInK) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 200; ++i) {
    std::vector<std::uint32_t> ranking(10);
    std::iota(ranking.begin(), ranking.end(), 0u);
    std::shuffle(ranking.begin(), ranking.end(), rng);
    RankedPrediction p{ranking, {0, 1, 2}};
    for (std::size_t k = 1; k < 10; ++k) ASSERT_LE(recall_at_k(p, k), recall_at_k(p, k + 1));
  }
}

TEST(MetricAccumulator, AveragesInInsertionOrder) {
  MetricAccumulator acc;
  acc.add("R@1", 1.0);
  acc.add("MRR", 0.5);
  acc.add("R@1", 0.0);
  auto s = acc.summary();
  ASSERT_EQ(s.rows.size(), 2u);
  EXPECT_EQ(s.rows[0].name, "R@1");
  EXPECT_DOUBLE_EQ(s.rows[0].value, 0.5);
  EXPECT_EQ(s.rows[0].n, 2u);
  EXPECT_DOUBLE_EQ(*s.get("MRR"), 0.5);
  EXPECT_FALSE(s.get("P@1"));
  std::ostringstream out;
  write_metric_tsv(out, s);
  EXPECT_NE(out.str().find("R@1\t0.500000\t2"), std::string::npos);
  EXPECT_NE(metric_json(s).find("\"MRR\""), std::string::npos);
}

}  // namespace
}  // namespace ckc
