#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "ckc/simulator.hpp"

namespace ckc {

enum class SessionStatus { kActive, kSuccess, kEnded };
std::string_view to_string(SessionStatus s);

struct ChatSession {
  std::string id;
  KeywordId target = 0;
  std::vector<TranscriptEntry> transcript;
  std::vector<TraceStep> keyword_trace;
  std::vector<double> distance_trace;
  SessionStatus status = SessionStatus::kActive;
  std::optional<int> smoothness_rating;
  std::size_t agent_turns = 0;
};

struct HttpResponse {
  int status = 200;
  std::string body;  // JSON
};

struct ServiceConfig {
  std::size_t max_agent_turns = 8;
  std::uint64_t seed = 7;  // target sampling
  std::filesystem::path log_path;  // empty: in-memory only
};

// Transport-independent JSON session API. Sessions are serialized per id;
// distinct sessions proceed concurrently. Mutations are logged append-only
// and replayed on construction.
class ChatService {
 public:
  ChatService(const Agent& agent, ServiceConfig config);
  ~ChatService();

  HttpResponse handle(const std::string& method, const std::string& path,
                      const std::map<std::string, std::string>& query, const std::string& body,
                      const std::string& idempotency_key = {});

  std::optional<ChatSession> session(const std::string& id) const;
  std::size_t session_count() const;
  std::string trace_json(const ChatSession& s) const;

  // Re-runs every user message of the session through the agent and checks
  // that the same replies come out.
  bool replay_matches(const std::string& id) const;

 private:
  struct Entry {
    std::mutex mu;
    ChatSession session;
    std::map<std::string, HttpResponse> idempotent;
  };

  const Agent* agent_;
  ServiceConfig config_;
  DistanceCache distances_;
  mutable std::shared_mutex sessions_mu_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::map<std::string, HttpResponse> create_keys_;
  std::uint64_t created_ = 0;
  std::mutex log_mu_;
  std::ofstream log_;
  bool replaying_ = false;

  HttpResponse create(const std::string& body, const std::string& key);
  HttpResponse message(const std::string& id, const std::string& body, const std::string& key);
  HttpResponse trace(const std::string& id) const;
  HttpResponse rate(const std::string& id, const std::string& body, const std::string& key);
  HttpResponse path(const std::map<std::string, std::string>& query) const;

  std::shared_ptr<Entry> find(const std::string& id) const;
  void append_log(const std::string& line);
  void replay(const std::filesystem::path& path);
  KeywordId sample_target(std::uint64_t index) const;
};

}  // namespace ckc
