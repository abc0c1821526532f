#include "ckc/service.hpp"

#include <charconv>
#include <cstdio>

#include "json.hpp"

#include "ckc/errors.hpp"
#include "trace_json.hpp"

namespace ckc {
namespace {

using nlohmann::json;

HttpResponse ok(const json& j) { return {200, j.dump()}; }

HttpResponse error(int status, std::string_view code, const std::string& message) {
  return {status, json{{"error", {{"code", code}, {"message", message}}}}.dump()};
}

HttpResponse not_found(const std::string& id) { return error(404, "not_found", "unknown session '" + id + "'"); }

std::optional<json> parse_body(const std::string& body) {
  if (body.empty()) return json::object();
  auto j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  return j;
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (start <= path.size()) {
    auto pos = path.find('/', start);
    if (pos == std::string::npos) pos = path.size();
    if (pos > start) parts.push_back(path.substr(start, pos - start));
    start = pos + 1;
  }
  return parts;
}

}  // namespace

std::string_view to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::kActive: return "active";
    case SessionStatus::kSuccess: return "success";
    case SessionStatus::kEnded: return "ended";
  }
  return "active";
}

ChatService::ChatService(const Agent& agent, ServiceConfig config)
    : agent_(&agent), config_(std::move(config)), distances_(agent.resources().graph()) {
  if (config_.max_agent_turns == 0) throw ConfigError("max_agent_turns must be at least 1");
  if (!config_.log_path.empty()) {
    if (std::filesystem::exists(config_.log_path)) replay(config_.log_path);
    log_.open(config_.log_path, std::ios::app);
    if (!log_) throw ConfigError("cannot open session log " + config_.log_path.string());
  }
}

ChatService::~ChatService() = default;

std::shared_ptr<ChatService::Entry> ChatService::find(const std::string& id) const {
  std::shared_lock lock(sessions_mu_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

std::optional<ChatSession> ChatService::session(const std::string& id) const {
  auto e = find(id);
  if (!e) return std::nullopt;
  std::lock_guard lock(e->mu);
  return e->session;
}

std::size_t ChatService::session_count() const {
  std::shared_lock lock(sessions_mu_);
  return sessions_.size();
}

void ChatService::append_log(const std::string& line) {
  if (replaying_ || !log_.is_open()) return;
  std::lock_guard lock(log_mu_);
  log_ << line << '\n';
  log_.flush();
}

KeywordId ChatService::sample_target(std::uint64_t index) const {
  const auto& res = agent_->resources();
  std::vector<KeywordId> pool;
  for (KeywordId k = 0; k < res.keywords().size(); ++k)
    if (res.keyword_node(k)) pool.push_back(k);
  if (pool.empty()) throw ConfigError("no keyword is a graph node; cannot sample a target");
  Rng rng(detail::mix_seed(config_.seed, index));
  return pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
}

HttpResponse ChatService::handle(const std::string& method, const std::string& path,
                                 const std::map<std::string, std::string>& query, const std::string& body,
                                 const std::string& idempotency_key) {
  auto parts = split_path(path);
  try {
    if (parts.size() == 1 && parts[0] == "sessions") {
      if (method != "POST") return error(405, "method_not_allowed", method + " " + path);
      return create(body, idempotency_key);
    }
    if (parts.size() == 2 && parts[0] == "graph" && parts[1] == "path") {
      if (method != "GET") return error(405, "method_not_allowed", method + " " + path);
      return this->path(query);
    }
    if (parts.size() == 3 && parts[0] == "sessions") {
      const auto& id = parts[1];
      if (parts[2] == "message") {
        if (method != "POST") return error(405, "method_not_allowed", method + " " + path);
        return message(id, body, idempotency_key);
      }
      if (parts[2] == "trace") {
        if (method != "GET") return error(405, "method_not_allowed", method + " " + path);
        return trace(id);
      }
      if (parts[2] == "rating") {
        if (method != "POST") return error(405, "method_not_allowed", method + " " + path);
        return rate(id, body, idempotency_key);
      }
    }
    return error(404, "not_found", "no route for " + method + " " + path);
  } catch (const std::exception& e) {
    return error(500, "internal", e.what());
  }
}

HttpResponse ChatService::create(const std::string& body, const std::string& key) {
  auto j = parse_body(body);
  if (!j) return error(400, "validation", "body must be a JSON object");
  const auto& res = agent_->resources();
  std::optional<KeywordId> target;
  if (j->contains("target") && !(*j)["target"].is_null()) {
    if (!(*j)["target"].is_string()) return error(400, "validation", "target must be a string");
    auto word = (*j)["target"].get<std::string>();
    const KeywordId* k = res.keywords().find(word);
    if (!k || !res.keyword_node(*k)) return error(400, "validation", "target '" + word + "' is not a graph keyword");
    target = *k;
  }

  std::unique_lock lock(sessions_mu_);
  if (!key.empty()) {
    if (auto it = create_keys_.find(key); it != create_keys_.end()) return it->second;
  }
  const auto index = created_++;
  auto entry = std::make_shared<Entry>();
  char id[32];
  std::snprintf(id, sizeof id, "s%06llu", static_cast<unsigned long long>(index + 1));
  entry->session.id = id;
  entry->session.target = target ? *target : sample_target(index);
  sessions_[id] = entry;
  auto response = ok({{"session_id", entry->session.id},
                      {"target", res.keywords().word(entry->session.target)},
                      {"status", to_string(entry->session.status)}});
  if (!key.empty()) create_keys_[key] = response;
  lock.unlock();
  append_log(json{{"op", "create"},
                  {"id", entry->session.id},
                  {"index", index},
                  {"target", res.keywords().word(entry->session.target)},
                  {"key", key}}
                 .dump());
  return response;
}

HttpResponse ChatService::message(const std::string& id, const std::string& body, const std::string& key) {
  auto entry = find(id);
  if (!entry) return not_found(id);
  auto j = parse_body(body);
  if (!j || !j->contains("text") || !(*j)["text"].is_string())
    return error(400, "validation", "body must be {\"text\": string}");
  const auto text = (*j)["text"].get<std::string>();

  std::lock_guard lock(entry->mu);
  if (!key.empty()) {
    if (auto it = entry->idempotent.find(key); it != entry->idempotent.end()) return it->second;
  }
  auto& s = entry->session;
  if (s.status != SessionStatus::kActive)
    return error(409, "state", "session " + id + " is " + std::string(to_string(s.status)));

  const auto& res = agent_->resources();
  const auto& target_word = res.keywords().word(s.target);
  auto user = res.process(text);
  s.transcript.push_back({Speaker::kUser, user, agent_->index().pool().find(user)});

  json reply = nullptr;
  json diagnostics = nullptr;
  if (success_check(user.words, target_word)) {
    s.status = SessionStatus::kSuccess;
  } else {
    auto node = res.keyword_node(s.target);
    auto dmap = distances_.get(*node);
    std::vector<Utterance> history;
    std::unordered_set<std::size_t> used;
    for (const auto& e : s.transcript) {
      history.push_back(e.utterance);
      if (e.pool_id) used.insert(*e.pool_id);
    }
    auto turn = agent_->respond(history, s.target, *dmap, used);
    const auto& utt = agent_->index().pool().at(turn.pool_id);
    s.transcript.push_back({Speaker::kAgent, utt, turn.pool_id});
    ++s.agent_turns;
    reply = {{"text", utt.text}, {"pool_id", turn.pool_id}};
    diagnostics = {{"tier", static_cast<int>(turn.choice.tier)}, {"s_u", turn.choice.score.s_u},
                   {"s_k", turn.choice.score.s_k}, {"s", turn.choice.score.s}};
    if (turn.decision) {
      TraceStep step{s.agent_turns, *turn.decision, turn.predicted, turn.choice.tier, turn.choice.score};
      s.keyword_trace.push_back(step);
      s.distance_trace.push_back(turn.decision->dist_to_target);
      diagnostics = detail::trace_step_json(res, step);
    }
    if (success_check(utt.words, target_word))
      s.status = SessionStatus::kSuccess;
    else if (s.agent_turns >= config_.max_agent_turns)
      s.status = SessionStatus::kEnded;
  }
  auto response = ok({{"session_id", id},
                      {"reply", reply},
                      {"diagnostics", diagnostics},
                      {"status", to_string(s.status)},
                      {"agent_turns", s.agent_turns}});
  if (!key.empty()) entry->idempotent[key] = response;
  append_log(json{{"op", "message"}, {"id", id}, {"text", text}, {"key", key}}.dump());
  return response;
}

std::string ChatService::trace_json(const ChatSession& s) const {
  const auto& res = agent_->resources();
  json transcript = json::array();
  for (const auto& e : s.transcript) {
    json t{{"speaker", to_string(e.speaker)}, {"text", e.utterance.text}};
    t["pool_id"] = e.pool_id ? json(*e.pool_id) : json(nullptr);
    transcript.push_back(std::move(t));
  }
  json steps = json::array();
  for (const auto& step : s.keyword_trace) steps.push_back(detail::trace_step_json(res, step));
  json dists = json::array();
  for (double d : s.distance_trace) dists.push_back(detail::distance_json(d));
  return json{{"session_id", s.id},
              {"target", res.keywords().word(s.target)},
              {"status", to_string(s.status)},
              {"agent_turns", s.agent_turns},
              {"max_agent_turns", config_.max_agent_turns},
              {"transcript", transcript},
              {"keyword_trace", steps},
              {"distance_trace", dists},
              {"smoothness_rating", s.smoothness_rating ? json(*s.smoothness_rating) : json(nullptr)}}
      .dump();
}

HttpResponse ChatService::trace(const std::string& id) const {
  auto s = session(id);
  if (!s) return not_found(id);
  return {200, trace_json(*s)};
}

HttpResponse ChatService::rate(const std::string& id, const std::string& body, const std::string& key) {
  auto entry = find(id);
  if (!entry) return not_found(id);
  auto j = parse_body(body);
  if (!j || !j->contains("smoothness") || !(*j)["smoothness"].is_number_integer())
    return error(400, "validation", "body must be {\"smoothness\": integer 1-5}");
  const auto value = (*j)["smoothness"].get<long long>();
  if (value < 1 || value > 5) return error(400, "validation", "smoothness must be between 1 and 5");

  std::lock_guard lock(entry->mu);
  if (!key.empty()) {
    if (auto it = entry->idempotent.find(key); it != entry->idempotent.end()) return it->second;
  }
  auto& s = entry->session;
  if (s.status == SessionStatus::kActive) return error(409, "state", "session " + id + " is still active");
  if (s.smoothness_rating) return error(409, "state", "session " + id + " is already rated");
  s.smoothness_rating = static_cast<int>(value);
  auto response = ok({{"session_id", id}, {"smoothness_rating", value}, {"status", to_string(s.status)}});
  if (!key.empty()) entry->idempotent[key] = response;
  append_log(json{{"op", "rating"}, {"id", id}, {"smoothness", value}, {"key", key}}.dump());
  return response;
}

HttpResponse ChatService::path(const std::map<std::string, std::string>& query) const {
  auto from = query.find("from");
  auto to = query.find("to");
  if (from == query.end() || to == query.end()) return error(400, "validation", "from and to are required");
  const auto& g = agent_->resources().graph();
  auto a = g.find(from->second);
  auto b = g.find(to->second);
  if (!a) return error(404, "not_found", "unknown node '" + from->second + "'");
  if (!b) return error(404, "not_found", "unknown node '" + to->second + "'");
  auto p = shortest_path(g, *a, *b);
  json nodes = json::array();
  if (p)
    for (auto n : *p) nodes.push_back(g.label(n));
  auto dmap = distance_from_target(g, *b);
  return ok({{"from", from->second},
             {"to", to->second},
             {"reachable", p.has_value()},
             {"path", nodes},
             {"distance", detail::distance_json(dmap.at(*a))}});
}

void ChatService::replay(const std::filesystem::path& path) {
  std::ifstream in(path);
  replaying_ = true;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    auto j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("op")) {
      replaying_ = false;
      throw ParseError("corrupt session log " + path.string(), n);
    }
    const auto op = j["op"].get<std::string>();
    const auto key = j.value("key", std::string{});
    const auto id = j.value("id", std::string{});
    if (op == "create") {
      const auto& res = agent_->resources();
      const KeywordId* k = res.keywords().find(j["target"].get<std::string>());
      if (!k) {
        replaying_ = false;
        throw ParseError("session log names unknown target", n);
      }
      auto entry = std::make_shared<Entry>();
      entry->session.id = id;
      entry->session.target = *k;
      sessions_[id] = entry;
      created_ = std::max(created_, j["index"].get<std::uint64_t>() + 1);
      if (!key.empty())
        create_keys_[key] = ok({{"session_id", id}, {"target", j["target"]}, {"status", "active"}});
    } else if (op == "message") {
      message(id, json{{"text", j["text"]}}.dump(), key);
    } else if (op == "rating") {
      rate(id, json{{"smoothness", j["smoothness"]}}.dump(), key);
    }
  }
  replaying_ = false;
}

bool ChatService::replay_matches(const std::string& id) const {
  auto s = session(id);
  if (!s) return false;
  ChatService fresh(*agent_, ServiceConfig{config_.max_agent_turns, config_.seed, {}});
  auto entry = std::make_shared<Entry>();
  entry->session.id = s->id;
  entry->session.target = s->target;
  fresh.sessions_[s->id] = entry;
  for (const auto& e : s->transcript)
    if (e.speaker == Speaker::kUser) fresh.message(s->id, json{{"text", e.utterance.text}}.dump(), {});
  const auto& replayed = entry->session;
  if (replayed.transcript.size() != s->transcript.size()) return false;
  for (std::size_t i = 0; i < replayed.transcript.size(); ++i) {
    if (replayed.transcript[i].utterance.text != s->transcript[i].utterance.text) return false;
    if (replayed.transcript[i].pool_id != s->transcript[i].pool_id) return false;
  }
  return replayed.distance_trace == s->distance_trace && replayed.status == s->status;
}

}  // namespace ckc
