#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <thread>

#include "ckc/service.hpp"
#include "ckc/synthetic.hpp"
#include "json.hpp"
#include "oracles.hpp"

#ifdef CKC_HAVE_CLI
#include "http_server.hpp"
#include "httplib.h"
#endif

namespace ckc {
namespace {

using nlohmann::json;

struct World {
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
};

const World& world() {
  static const World w;
  return w;
}

json call(ChatService& s, const std::string& method, const std::string& path, const json& body = json::object(),
          int expect = 200, const std::string& key = {}, std::map<std::string, std::string> query = {}) {
  auto r = s.handle(method, path, query, body.is_null() ? "" : body.dump(), key);
  EXPECT_EQ(r.status, expect) << method << " " << path << " -> " << r.body;
  return json::parse(r.body);
}

TEST(ChatService, CreateWithTargetAndConverse) {
  ChatService s(world().agent, {});
  auto created = call(s, "POST", "/sessions", {{"target", "w5"}});
  const auto id = created["session_id"].get<std::string>();
  EXPECT_EQ(created["target"], "w5");
  EXPECT_EQ(created["status"], "active");

  auto reply = call(s, "POST", "/sessions/" + id + "/message", {{"text", "let us talk about w1"}});
  EXPECT_TRUE(reply["reply"]["text"].is_string());
  const auto& diag = reply["diagnostics"];
  EXPECT_TRUE(diag.contains("chosen"));
  EXPECT_TRUE(diag.contains("predicted"));
  EXPECT_TRUE(diag.contains("tier"));
  EXPECT_TRUE(diag.contains("dist_to_target"));
  EXPECT_EQ(reply["agent_turns"], 1);

  auto trace = call(s, "GET", "/sessions/" + id + "/trace", nullptr);
  EXPECT_EQ(trace["transcript"].size(), 2u);
  EXPECT_EQ(trace["distance_trace"].size(), 1u);
  EXPECT_TRUE(s.replay_matches(id));
}

TEST(ChatService, SampledTargetsAreSeeded) {
  ChatService a(world().agent, {.seed = 3}), b(world().agent, {.seed = 3});
  for (int i = 0; i < 5; ++i)
    EXPECT_EQ(call(a, "POST", "/sessions")["target"], call(b, "POST", "/sessions")["target"]);
}

TEST(ChatService, UserMentioningTheTargetSucceedsAndLocksTheSession) {
  ChatService s(world().agent, {});
  const auto id = call(s, "POST", "/sessions", {{"target", "w3"}})["session_id"].get<std::string>();
  auto r = call(s, "POST", "/sessions/" + id + "/message", {{"text", "w3 is great"}});
  EXPECT_EQ(r["status"], "success");
  EXPECT_TRUE(r["reply"].is_null());
  auto again = call(s, "POST", "/sessions/" + id + "/message", {{"text", "hello"}}, 409);
  EXPECT_EQ(again["error"]["code"], "state");
}

TEST(ChatService, EndsAfterMaxAgentTurns) {
  ChatService s(world().agent, {.max_agent_turns = 1});
  const auto id = call(s, "POST", "/sessions", {{"target", "w6"}})["session_id"].get<std::string>();
  auto r = call(s, "POST", "/sessions/" + id + "/message", {{"text", "w0"}});
  EXPECT_EQ(r["status"], "ended");
}

TEST(ChatService, RatingRules) {
  ChatService s(world().agent, {});
  const auto id = call(s, "POST", "/sessions", {{"target", "w2"}})["session_id"].get<std::string>();
  call(s, "POST", "/sessions/" + id + "/rating", {{"smoothness", 4}}, 409);
  call(s, "POST", "/sessions/" + id + "/message", {{"text", "w2"}});
  call(s, "POST", "/sessions/" + id + "/rating", {{"smoothness", 6}}, 400);
  call(s, "POST", "/sessions/" + id + "/rating", {{"smoothness", "4"}}, 400);
  auto ok = call(s, "POST", "/sessions/" + id + "/rating", {{"smoothness", 4}});
  EXPECT_EQ(ok["smoothness_rating"], 4);
  call(s, "POST", "/sessions/" + id + "/rating", {{"smoothness", 5}}, 409);
  EXPECT_EQ(s.session(id)->smoothness_rating, 4);
}

TEST(ChatService, ErrorsAreJsonObjects) {
  ChatService s(world().agent, {});
  EXPECT_EQ(call(s, "GET", "/sessions/nope/trace", nullptr, 404)["error"]["code"], "not_found");
  call(s, "POST", "/sessions/nope/message", {{"text", "hi"}}, 404);
  call(s, "POST", "/sessions", {{"target", "zebra"}}, 400);
  call(s, "POST", "/sessions", {{"target", 3}}, 400);
  EXPECT_EQ(s.handle("POST", "/sessions", {}, "not json", "").status, 400);
  call(s, "GET", "/sessions", nullptr, 405);
  call(s, "GET", "/nowhere", nullptr, 404);
  const auto id = call(s, "POST", "/sessions", {{"target", "w2"}})["session_id"].get<std::string>();
  call(s, "POST", "/sessions/" + id + "/message", {{"words", "hi"}}, 400);
}

TEST(ChatService, GraphPath) {
  ChatService s(world().agent, {});
  auto p = call(s, "GET", "/graph/path", nullptr, 200, {}, {{"from", "w1"}, {"to", "w4"}});
  EXPECT_EQ(p["path"], json({"w1", "w2", "w3", "w4"}));
  EXPECT_TRUE(p["reachable"].get<bool>());
  call(s, "GET", "/graph/path", nullptr, 400, {}, {{"from", "w1"}});
  call(s, "GET", "/graph/path", nullptr, 404, {}, {{"from", "w1"}, {"to", "zebra"}});
}

TEST(ChatService, IdempotencyKeysReturnTheFirstResponse) {
  ChatService s(world().agent, {});
  auto a = call(s, "POST", "/sessions", {{"target", "w6"}}, 200, "k1");
  auto b = call(s, "POST", "/sessions", {{"target", "w6"}}, 200, "k1");
  EXPECT_EQ(a, b);
  EXPECT_EQ(s.session_count(), 1u);
  const auto id = a["session_id"].get<std::string>();
  auto m1 = call(s, "POST", "/sessions/" + id + "/message", {{"text", "w0"}}, 200, "m1");
  auto m2 = call(s, "POST", "/sessions/" + id + "/message", {{"text", "w0"}}, 200, "m1");
  EXPECT_EQ(m1, m2);
  EXPECT_EQ(s.session(id)->agent_turns, 1u);
}

TEST(ChatService, LogReplayRestoresSessions) {
  const auto dir = testing::temp_dir("service");
  const auto log = std::filesystem::path(dir) / "sessions.jsonl";
  std::string id, trace;
  {
    ChatService s(world().agent, {.log_path = log});
    id = call(s, "POST", "/sessions", {{"target", "w6"}}, 200, "create-1")["session_id"].get<std::string>();
    call(s, "POST", "/sessions/" + id + "/message", {{"text", "w0 please"}});
    call(s, "POST", "/sessions/" + id + "/message", {{"text", "and w1"}}, 200, "msg-2");
    trace = s.trace_json(*s.session(id));
  }
  ChatService restarted(world().agent, {.log_path = log});
  ASSERT_TRUE(restarted.session(id));
  EXPECT_EQ(restarted.trace_json(*restarted.session(id)), trace);
  // keys survive the restart, new ids continue after the old ones
  EXPECT_EQ(call(restarted, "POST", "/sessions", {{"target", "w6"}}, 200, "create-1")["session_id"], id);
  EXPECT_NE(call(restarted, "POST", "/sessions", {{"target", "w6"}})["session_id"], id);
  call(restarted, "POST", "/sessions/" + id + "/message", {{"text", "and w1"}}, 200, "msg-2");
  EXPECT_EQ(restarted.session(id)->agent_turns, 2u);

  std::ofstream(log, std::ios::app) << "garbage\n";
  EXPECT_ANY_THROW(ChatService(world().agent, {.log_path = log}));
  std::filesystem::remove_all(dir);
}

TEST(ChatService, ConcurrentSessionsStayIndependent) {
  ChatService s(world().agent, {});
  std::vector<std::string> ids;
  for (int i = 0; i < 4; ++i) ids.push_back(call(s, "POST", "/sessions", {{"target", "w6"}})["session_id"]);
  std::vector<std::thread> threads;
  for (const auto& id : ids)
    threads.emplace_back([&, id] {
      for (int t = 0; t < 3; ++t) s.handle("POST", "/sessions/" + id + "/message", {}, R"({"text":"w0"})", "");
    });
  for (auto& t : threads) t.join();
  for (const auto& id : ids) {
    EXPECT_TRUE(s.replay_matches(id));
    EXPECT_EQ(s.session(id)->transcript.front().utterance.text, "w0");
  }
}

#ifdef CKC_HAVE_CLI
TEST(HttpServer, RoundTripOverLoopback) {
  ChatService s(world().agent, {});
  httplib::Server server;
  cli::install_routes(server, s);
  const int port = server.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  httplib::Client client("127.0.0.1", port);
  auto created = client.Post("/sessions", R"({"target":"w4"})", "application/json");
  ASSERT_TRUE(created);
  EXPECT_EQ(created->status, 200);
  EXPECT_EQ(created->get_header_value("Access-Control-Allow-Origin"), "*");
  const auto id = json::parse(created->body)["session_id"].get<std::string>();

  httplib::Headers key = {{"Idempotency-Key", "abc"}};
  auto m1 = client.Post("/sessions/" + id + "/message", key, R"({"text":"w0"})", "application/json");
  auto m2 = client.Post("/sessions/" + id + "/message", key, R"({"text":"w0"})", "application/json");
  ASSERT_TRUE(m1 && m2);
  EXPECT_EQ(m1->body, m2->body);
  auto path = client.Get("/graph/path?from=w0&to=w2");
  ASSERT_TRUE(path);
  EXPECT_EQ(json::parse(path->body)["path"], json({"w0", "w1", "w2"}));
  auto missing = client.Get("/sessions/none/trace");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);
  auto pre = client.Options("/sessions");
  ASSERT_TRUE(pre);
  EXPECT_EQ(pre->status, 204);

  server.stop();
  th.join();
}
#endif

}  // namespace
}  // namespace ckc
