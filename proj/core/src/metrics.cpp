#include "ckc/metrics.hpp"

#include <algorithm>
#include <iomanip>
#include <numeric>
#include <ostream>

#include "json.hpp"

#include "ckc/errors.hpp"

namespace ckc {

double recall_at_k(const RankedPrediction& p, std::size_t k) {
  if (p.gold.empty()) throw ContractViolation("recall needs a nonempty gold set");
  if (k == 0) throw ContractViolation("recall needs k >= 1");
  const std::size_t top = std::min(k, p.ranking.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < top; ++i)
    if (std::find(p.gold.begin(), p.gold.end(), p.ranking[i]) != p.gold.end()) ++hits;
  return static_cast<double>(hits) / static_cast<double>(p.gold.size());
}

double precision_at_1(const RankedPrediction& p) {
  if (p.ranking.empty()) throw ContractViolation("precision needs a nonempty ranking");
  return std::find(p.gold.begin(), p.gold.end(), p.ranking.front()) != p.gold.end() ? 1.0 : 0.0;
}

double reciprocal_rank(const RankedPrediction& p) {
  if (p.gold.size() != 1) throw ContractViolation("reciprocal rank needs exactly one gold item");
  auto it = std::find(p.ranking.begin(), p.ranking.end(), p.gold.front());
  if (it == p.ranking.end()) throw ContractViolation("gold item missing from the ranking");
  return 1.0 / static_cast<double>(it - p.ranking.begin() + 1);
}

std::vector<std::uint32_t> rank_by_score(std::span<const double> scores) {
  std::vector<std::uint32_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return scores[a] > scores[b]; });
  return order;
}

std::optional<double> MetricSummary::get(const std::string& name) const {
  for (const auto& r : rows)
    if (r.name == name) return r.value;
  return std::nullopt;
}

void MetricAccumulator::add(const std::string& name, double value) {
  auto [it, inserted] = sums_.try_emplace(name, 0.0, 0);
  if (inserted) order_.push_back(name);
  it->second.first += value;
  ++it->second.second;
}

MetricSummary MetricAccumulator::summary() const {
  MetricSummary s;
  for (const auto& name : order_) {
    const auto& [sum, n] = sums_.at(name);
    s.rows.push_back({name, n ? sum / static_cast<double>(n) : 0.0, n});
  }
  return s;
}

void write_metric_tsv(std::ostream& out, const MetricSummary& s) {
  out << "metric\tvalue\tn_examples\n";
  for (const auto& r : s.rows) out << r.name << '\t' << std::fixed << std::setprecision(6) << r.value << '\t' << r.n << '\n';
  out.unsetf(std::ios::floatfield);
}

std::string metric_json(const MetricSummary& s) {
  nlohmann::json metrics = nlohmann::json::object();
  for (const auto& r : s.rows) metrics[r.name] = {{"value", r.value}, {"n", r.n}};
  nlohmann::json j{{"metrics", metrics}, {"seed", s.seed}, {"checkpoint_sha256", s.checkpoint_hash}};
  return j.dump(2);
}

}  // namespace ckc
