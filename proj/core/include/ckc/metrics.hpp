#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ckc {

// Item ids in descending score order plus the gold set.
struct RankedPrediction {
  std::vector<std::uint32_t> ranking;
  std::vector<std::uint32_t> gold;
};

// |gold n top-k| / |gold|
double recall_at_k(const RankedPrediction& p, std::size_t k);
// 1 if the top item is gold.
double precision_at_1(const RankedPrediction& p);
// 1 / rank of the single gold item. Throws ContractViolation when absent.
double reciprocal_rank(const RankedPrediction& p);

// Ranks ids 0..n-1 by descending score; ties go to the smaller id.
std::vector<std::uint32_t> rank_by_score(std::span<const double> scores);

struct MetricRow {
  std::string name;
  double value = 0.0;
  std::size_t n = 0;
};

struct MetricSummary {
  std::vector<MetricRow> rows;
  std::uint64_t seed = 0;
  std::string checkpoint_hash;

  std::optional<double> get(const std::string& name) const;
};

// Averages over a dataset.
class MetricAccumulator {
 public:
  void add(const std::string& name, double value);
  MetricSummary summary() const;

 private:
  std::vector<std::string> order_;
  std::map<std::string, std::pair<double, std::size_t>> sums_;
};

// metric<TAB>value<TAB>n lines.
void write_metric_tsv(std::ostream& out, const MetricSummary& s);
std::string metric_json(const MetricSummary& s);

}  // namespace ckc
