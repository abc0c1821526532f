#include "ckc/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <iomanip>
#include <map>
#include <set>
#include <numeric>
#include <ostream>
#include <thread>

#include "json.hpp"

#include "ckc/errors.hpp"
#include "trace_json.hpp"

namespace ckc {
namespace detail {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

nlohmann::json distance_json(double d) { return d == kUnreachable ? nlohmann::json(nullptr) : nlohmann::json(d); }

nlohmann::json trace_step_json(const Resources& res, const TraceStep& s) {
  nlohmann::json top = nlohmann::json::array();
  for (const auto& [k, p] : s.predicted.items) top.push_back({{"keyword", res.keywords().word(k)}, {"prob", p}});
  return {{"agent_turn", s.agent_turn},
          {"chosen", res.keywords().word(s.decision.chosen)},
          {"probability", s.decision.probability},
          {"dist_to_target", distance_json(s.decision.dist_to_target)},
          {"current_best_dist", distance_json(s.decision.current_best_dist)},
          {"level", to_string(s.decision.level)},
          {"tier", static_cast<int>(s.tier)},
          {"s_u", s.score.s_u},
          {"s_k", s.score.s_k},
          {"s", s.score.s},
          {"predicted", top}};
}

}  // namespace detail

namespace {

std::vector<std::size_t> components(const CkgGraph& g) {
  std::vector<std::size_t> parent(g.num_nodes());
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& e : g.edges()) {
    auto a = find(e.head), b = find(e.tail);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
  for (std::size_t i = 0; i < parent.size(); ++i) parent[i] = find(i);
  return parent;
}

}  // namespace

std::string_view to_string(Speaker s) { return s == Speaker::kAgent ? "agent" : "user"; }

bool success_check(std::span<const std::string> words, std::string_view target) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    auto pos = target.find('_', start);
    auto part = target.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
    if (!part.empty()) parts.push_back(part);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  if (parts.empty() || parts.size() > words.size()) return false;
  for (std::size_t i = 0; i + parts.size() <= words.size(); ++i) {
    bool ok = true;
    for (std::size_t j = 0; j < parts.size() && ok; ++j) ok = words[i + j] == parts[j];
    if (ok) return true;
  }
  return false;
}

AgentTurn Agent::respond(std::span<const Utterance> transcript, KeywordId target, const DistanceMap& dmap,
                         const std::unordered_set<std::size_t>& used) const {
  if (transcript.empty()) throw ContractViolation("the agent needs something to respond to");
  GraphKeywordDistance graph_dist(*res_, dmap);
  std::optional<EmbeddingKeywordDistance> emb_dist;
  if (config_.strategy_embedding) emb_dist.emplace(*res_, *config_.strategy_embedding, target);
  const KeywordDistance& dist = emb_dist ? static_cast<const KeywordDistance&>(*emb_dist) : graph_dist;

  AgentTurn turn;
  auto output = predictor_->predict({transcript, &dmap});
  std::vector<KeywordId> predicted;
  if (!output.empty()) {
    auto current = current_keywords(transcript);
    turn.decision = select_keyword(output, current, target, dist, config_.strategy);
    turn.predicted = predict_topk(output, 3);
    for (const auto& [k, _] : turn.predicted.items) predicted.push_back(k);
  }
  RespondRequest req;
  req.context = transcript.size() > kMaxRetrievalContext ? transcript.subspan(transcript.size() - kMaxRetrievalContext)
                                                         : transcript;
  req.predicted = predicted;
  req.decision = turn.decision ? &*turn.decision : nullptr;
  req.distance = &dist;
  req.pool_size = config_.pool_size;
  req.exclude = &used;
  req.keyword_tiers = config_.keyword_tiers;
  turn.choice = agent_respond(*index_, req);
  turn.pool_id = turn.choice.pool_id;
  return turn;
}

UserTurn BaseUser::reply(std::span<const Utterance> transcript, const std::unordered_set<std::size_t>& used) const {
  RespondRequest req;
  req.context = transcript.size() > kMaxRetrievalContext ? transcript.subspan(transcript.size() - kMaxRetrievalContext)
                                                         : transcript;
  req.pool_size = index_->size();
  req.exclude = &used;
  req.keyword_tiers = false;
  req.lambda_override = 0.0;
  auto choice = agent_respond(*index_, req);
  return {index_->pool().at(choice.pool_id), choice.pool_id};
}

UserTurn KeywordEchoUser::reply(std::span<const Utterance> transcript, const std::unordered_set<std::size_t>&) const {
  std::string text;
  if (!transcript.empty()) {
    for (auto k : transcript.back().keywords) {
      if (!text.empty()) text += ' ';
      text += res_->keywords().word(k);
    }
  }
  return {res_->process(text), std::nullopt};
}

SimulationResult run_dialogue(const Agent& agent, const Interlocutor& user, const DialogueSpec& spec,
                              DistanceCache& distances, const SimulationConfig& config) {
  if (config.max_agent_turns == 0) throw ConfigError("max_agent_turns must be at least 1");
  const auto& res = agent.resources();
  SimulationResult r;
  r.target = spec.target;
  const auto& target_word = res.keywords().word(spec.target);
  auto node = res.keyword_node(spec.target);
  try {
    if (!node) throw ConfigError("target '" + target_word + "' is not a graph node");
    auto dmap = distances.get(*node);
    std::vector<Utterance> history{spec.start};
    r.transcript.push_back({Speaker::kUser, spec.start, agent.index().pool().find(spec.start)});
    std::unordered_set<std::size_t> used;
    if (config.no_repeat && r.transcript.back().pool_id) used.insert(*r.transcript.back().pool_id);
    static const std::unordered_set<std::size_t> kNone;
    for (std::size_t turn = 1; turn <= config.max_agent_turns; ++turn) {
      auto a = agent.respond(history, spec.target, *dmap, config.no_repeat ? used : kNone);
      const auto& utt = agent.index().pool().at(a.pool_id);
      history.push_back(utt);
      r.transcript.push_back({Speaker::kAgent, utt, a.pool_id});
      if (config.no_repeat) used.insert(a.pool_id);
      if (a.decision) {
        r.keyword_trace.push_back({turn, *a.decision, a.predicted, a.choice.tier, a.choice.score});
        r.distance_trace.push_back(a.decision->dist_to_target);
        if (a.decision->level != RelaxationLevel::kStrict) ++r.relaxations;
      }
      if (success_check(utt.words, target_word)) {
        r.success = true;
        r.agent_turns_used = turn;
        break;
      }
      auto u = user.reply(history, config.no_repeat ? used : kNone);
      history.push_back(u.utterance);
      r.transcript.push_back({Speaker::kUser, u.utterance, u.pool_id});
      if (config.no_repeat && u.pool_id) used.insert(*u.pool_id);
      if (success_check(u.utterance.words, target_word)) {
        r.success = true;
        r.agent_turns_used = turn;
        break;
      }
    }
    if (!r.success) r.agent_turns_used = config.max_agent_turns;
  } catch (const std::exception& e) {
    r.aborted = true;
    r.success = false;
    r.error = e.what();
  }
  return r;
}

std::vector<DialogueSpec> sample_dialogues(const Resources& res, std::span<const Utterance> openers,
                                           const SimulationConfig& config) {
  const auto comp = components(res.graph());
  std::map<std::size_t, std::vector<KeywordId>> comp_keywords;
  for (KeywordId k = 0; k < res.keywords().size(); ++k)
    if (auto n = res.keyword_node(k)) comp_keywords[comp[*n]].push_back(k);

  auto targets_for = [&](const Utterance& u) {
    std::set<std::size_t> comps;
    for (auto k : u.keywords)
      if (auto n = res.keyword_node(k)) comps.insert(comp[*n]);
    std::vector<KeywordId> out;
    for (auto c : comps)
      for (auto k : comp_keywords[c])
        if (!success_check(u.words, res.keywords().word(k))) out.push_back(k);
    std::sort(out.begin(), out.end());
    return out;
  };
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < openers.size(); ++i)
    if (!targets_for(openers[i]).empty()) eligible.push_back(i);
  if (eligible.empty()) throw ConfigError("no opener has a keyword with a reachable target on the graph");

  std::vector<DialogueSpec> specs;
  specs.reserve(config.n_dialogues);
  for (std::size_t i = 0; i < config.n_dialogues; ++i) {
    Rng rng(detail::mix_seed(config.seed, i));
    const auto& start = openers[eligible[std::uniform_int_distribution<std::size_t>(0, eligible.size() - 1)(rng)]];
    auto targets = targets_for(start);
    specs.push_back({start, targets[std::uniform_int_distribution<std::size_t>(0, targets.size() - 1)(rng)]});
  }
  return specs;
}

SelfPlaySummary run_selfplay(const Agent& agent, const Interlocutor& user, std::span<const DialogueSpec> specs,
                             const SimulationConfig& config) {
  SelfPlaySummary s;
  s.dialogues = specs.size();
  s.results.resize(specs.size());
  DistanceCache distances(agent.resources().graph());
  std::size_t threads = config.threads ? config.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, std::max<std::size_t>(specs.size(), 1));
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < specs.size(); i = next++)
      s.results[i] = run_dialogue(agent, user, specs[i], distances, config);
  };
  if (threads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  double turns = 0.0;
  for (const auto& r : s.results) {
    if (r.aborted) {
      ++s.aborted;
      continue;
    }
    s.relaxations += r.relaxations;
    if (r.success) {
      ++s.successes;
      turns += static_cast<double>(r.agent_turns_used);
    }
  }
  const std::size_t counted = s.dialogues - s.aborted;
  s.success_rate = counted ? static_cast<double>(s.successes) / static_cast<double>(counted) : 0.0;
  if (s.successes) s.mean_turns = turns / static_cast<double>(s.successes);
  return s;
}

void write_transcripts(std::ostream& out, const Resources& res, const SelfPlaySummary& summary,
                       const SimulationConfig& config) {
  nlohmann::json cfg{{"max_agent_turns", config.max_agent_turns},
                     {"n_dialogues", config.n_dialogues},
                     {"seed", config.seed},
                     {"no_repeat", config.no_repeat}};
  for (std::size_t i = 0; i < summary.results.size(); ++i) {
    const auto& r = summary.results[i];
    nlohmann::json transcript = nlohmann::json::array();
    for (const auto& e : r.transcript) {
      nlohmann::json t{{"speaker", to_string(e.speaker)}, {"text", e.utterance.text}};
      t["pool_id"] = e.pool_id ? nlohmann::json(*e.pool_id) : nlohmann::json(nullptr);
      transcript.push_back(std::move(t));
    }
    nlohmann::json trace = nlohmann::json::array();
    for (const auto& step : r.keyword_trace) trace.push_back(detail::trace_step_json(res, step));
    nlohmann::json j{{"dialogue", i},
                     {"seed", detail::mix_seed(config.seed, i)},
                     {"config", cfg},
                     {"target", res.keywords().word(r.target)},
                     {"success", r.success},
                     {"aborted", r.aborted},
                     {"agent_turns_used", r.agent_turns_used},
                     {"relaxations", r.relaxations},
                     {"transcript", transcript},
                     {"keyword_trace", trace},
                     {"distance_trace", r.distance_trace}};
    if (r.aborted) j["error"] = r.error;
    out << j.dump() << '\n';
  }
}

void write_selfplay_tsv(std::ostream& out, const SelfPlaySummary& summary, const SimulationConfig& config) {
  out << "# #Turns counts agent turns, averaged over successful dialogues; max_agent_turns="
      << config.max_agent_turns << "\n";
  out << "Succ.\t#Turns\tn_dialogues\taborted\trelaxations\n";
  out << std::fixed << std::setprecision(2) << 100.0 * summary.success_rate << '\t';
  if (summary.mean_turns)
    out << *summary.mean_turns;
  else
    out << "NA";
  out << '\t' << summary.dialogues << '\t' << summary.aborted << '\t' << summary.relaxations << '\n';
  out.unsetf(std::ios::floatfield);
}

}  // namespace ckc
