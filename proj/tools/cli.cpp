#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "httplib.h"
#include "json.hpp"

#include "ckc/corpus.hpp"
#include "ckc/errors.hpp"
#include "ckc/hash.hpp"
#include "ckc/matcher.hpp"
#include "ckc/predictor.hpp"
#include "ckc/service.hpp"
#include "ckc/simulator.hpp"
#include "ckc/synthetic.hpp"
#include "http_server.hpp"

namespace ckc::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<std::string> kSplits = {"train", "valid", "test"};

// Inputs and outputs of one invocation, recorded for the manifest.
class Run {
 public:
  Run(std::string command, Settings settings) : command_(std::move(command)), s(std::move(settings)) {}

  const std::string& command() const { return command_; }
  fs::path artifacts() const { return s.str("data.artifacts"); }
  fs::path artifact(const std::string& name) const { return artifacts() / name; }

  // Path that must already exist; `producer` names the subcommand that makes it.
  fs::path need(const fs::path& p, const std::string& producer) {
    if (!fs::exists(p)) {
      std::string msg = "missing file: " + p.string();
      if (!producer.empty()) msg += " (run `ckc " + producer + "` first)";
      throw ConfigError(msg);
    }
    if (fs::is_directory(p)) {
      for (const auto& e : fs::directory_iterator(p))
        if (e.is_regular_file()) inputs_.push_back(e.path());
    } else {
      inputs_.push_back(p);
    }
    return p;
  }

  fs::path produce(const fs::path& p) {
    outputs_.push_back(p);
    return p;
  }

  fs::path model_path(const std::string& key, const std::string& fallback) const {
    const auto& v = s.str(key);
    return v.empty() ? artifact(fallback) : fs::path(v);
  }

  void write_manifest() const {
    const json sources = s.to_json();
    json config = json::object();
    for (const auto& [k, v] : sources.items()) config[k] = v["value"];
    json seeds = json::object();
    for (const auto& [k, v] : config.items())
      if (k.ends_with("seed")) seeds[k] = v;
    auto files = [](std::vector<fs::path> paths) {
      std::sort(paths.begin(), paths.end());
      paths.erase(std::unique(paths.begin(), paths.end()), paths.end());
      json arr = json::array();
      for (const auto& p : paths) {
        json f{{"path", p.generic_string()}};
        if (fs::is_regular_file(p)) {
          f["sha256"] = sha256_file(p);
          f["bytes"] = fs::file_size(p);
        }
        arr.push_back(f);
      }
      return arr;
    };
    json m{{"manifest_version", 1},    {"command", command_},         {"config", config},
           {"sources", sources},   {"seeds", seeds},              {"inputs", files(inputs_)},
           {"outputs", files(outputs_)}};
    fs::create_directories(artifacts());
    std::ofstream out(artifact("manifest_" + command_ + ".json"));
    out << m.dump(2) << '\n';
  }

 private:
  std::string command_;
  std::vector<fs::path> inputs_;
  std::vector<fs::path> outputs_;

 public:
  Settings s;
};

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + p.string());
  return out;
}

std::ifstream open_in(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + p.string());
  return in;
}

TextConfig text_config(const Settings& s, const fs::path& corpus_config) {
  TextConfig tc;
  tc.vocab_cap = s.count("data.vocab_cap");
  tc.filter.min_weight = s.num("data.min_weight");
  tc.filter.max_match_words = s.count("data.max_match_words");
  if (!s.str("data.keyword_min_freq").empty()) {
    tc.keyword_min_freq = s.count("data.keyword_min_freq");
  } else if (fs::exists(corpus_config)) {
    auto in = open_in(corpus_config);
    auto j = json::parse(in);
    if (j.contains("keyword_min_freq")) tc.keyword_min_freq = j["keyword_min_freq"].get<std::size_t>();
  }
  return tc;
}

Resources load_resources(Run& run) { return Resources::load(run.need(run.artifact("resources"), "prepare")); }

std::vector<Conversation> load_split_conversations(Run& run, const Resources& res, const std::string& split) {
  auto in = open_in(run.need(run.artifact("conversations_" + split + ".jsonl"), "prepare"));
  return load_conversations(in, res.config().max_tokens);
}

std::vector<PredictionExample> load_prediction_split(Run& run, const Resources& res, const std::string& split) {
  auto in = open_in(run.need(run.artifact("prediction_" + split + ".jsonl"), "prepare"));
  return load_prediction_examples(in, res.config().max_tokens);
}

struct RetrievalData {
  ResponsePool pool;
  std::vector<RetrievalExample> examples;
};

RetrievalData load_retrieval_split(Run& run, const Resources& res, const std::string& split) {
  RetrievalData d;
  {
    auto in = open_in(run.need(run.artifact("pool_" + split + ".jsonl"), "prepare"));
    d.pool = ResponsePool::load(in);
  }
  auto in = open_in(run.need(run.artifact("retrieval_" + split + ".jsonl"), "prepare"));
  d.examples = load_retrieval_examples(in, res.config().max_tokens);
  return d;
}

PredictorModel load_predictor(Run& run, const Resources& res) {
  return PredictorModel::load(run.need(run.model_path("model.predictor", "predictor.ckpt"), "train-predictor"), res);
}

MatcherModel load_matcher(Run& run, const Resources& res) {
  return MatcherModel::load(run.need(run.model_path("model.matcher", "matcher.ckpt"), "train-matcher"), res);
}

TrainConfig train_config(const Settings& s) {
  TrainConfig tc;
  tc.epochs = s.count("train.epochs");
  tc.batch_size = s.count("train.batch_size");
  tc.adam.lr = s.num("train.lr");
  tc.adam.epoch_decay = s.num("train.decay");
  tc.patience = s.count("train.patience");
  tc.seed = s.u64("train.seed");
  return tc;
}

void write_epoch_log(const fs::path& p, const std::vector<EpochStats>& epochs) {
  auto out = open_out(p);
  out << "epoch\tloss\tvalid_r1\tlr\n";
  for (const auto& e : epochs) out << e.epoch << '\t' << e.mean_loss << '\t' << e.valid_r1 << '\t' << e.lr << '\n';
}

int cmd_synth(Run& run, std::ostream& out) {
  SyntheticConfig sc;
  sc.seed = run.s.u64("data.synth_seed");
  const fs::path dir = run.s.str("data.corpus");
  write_synthetic(make_synthetic_corpus(sc), dir);
  for (const auto* name : {"conversations_train.jsonl", "conversations_valid.jsonl", "conversations_test.jsonl",
                           "triplets.tsv", "pos_lexicon.tsv", "stopwords.txt", "text_config.json"})
    run.produce(dir / name);
  out << "wrote synthetic corpus to " << dir.string() << '\n';
  return kExitOk;
}

int cmd_prepare(Run& run, std::ostream& out) {
  const fs::path corpus = run.s.str("data.corpus");
  std::map<std::string, std::vector<std::vector<std::string>>> raw;
  for (const auto& split : kSplits) raw[split] = read_conversations(run.need(corpus / ("conversations_" + split + ".jsonl"), ""));
  auto pos = PosLexicon::load(run.need(corpus / "pos_lexicon.tsv", ""));
  auto stop = StopwordList::load(run.need(corpus / "stopwords.txt", ""));
  auto triplets = open_in(run.need(corpus / "triplets.tsv", ""));
  if (fs::exists(corpus / "text_config.json")) run.need(corpus / "text_config.json", "");
  const auto tc = text_config(run.s, corpus / "text_config.json");
  auto res = build_resources(raw["train"], triplets, std::move(pos), std::move(stop), tc);
  res.save(run.produce(run.artifact("resources")));

  json stats{{"vocab", res.vocab().size()},
             {"keywords", res.keywords().size()},
             {"nodes", res.graph().num_nodes()},
             {"edges", res.graph().num_edges()},
             {"relations", res.graph().num_relations()}};
  const auto seed = run.s.u64("data.seed");
  for (std::size_t i = 0; i < kSplits.size(); ++i) {
    const auto& split = kSplits[i];
    auto ing = ingest(raw[split], res, split);
    auto pred = make_prediction_examples(ing.conversations, res);
    auto pool = ResponsePool::build(ing.conversations);
    auto ret = make_retrieval_examples(ing.conversations, pool, seed + i);
    {
      auto f = open_out(run.produce(run.artifact("conversations_" + split + ".jsonl")));
      save_conversations(f, ing.conversations);
    }
    {
      auto f = open_out(run.produce(run.artifact("prediction_" + split + ".jsonl")));
      save_prediction_examples(f, pred.examples);
    }
    {
      auto f = open_out(run.produce(run.artifact("pool_" + split + ".jsonl")));
      pool.save(f);
    }
    {
      auto f = open_out(run.produce(run.artifact("retrieval_" + split + ".jsonl")));
      save_retrieval_examples(f, ret);
    }
    stats[split] = {{"conversations", ing.conversations.size()},
                    {"dropped_conversations", ing.dropped},
                    {"prediction_examples", pred.examples.size()},
                    {"dropped_prediction_examples", pred.dropped},
                    {"pool", pool.size()},
                    {"retrieval_examples", ret.size()}};
  }
  {
    auto f = open_out(run.produce(run.artifact("stats.json")));
    f << stats.dump(2) << '\n';
  }
  out << "vocab\t" << res.vocab().size() << "\nkeywords\t" << res.keywords().size() << "\nnodes\t"
      << res.graph().num_nodes() << "\nedges\t" << res.graph().num_edges() << '\n';
  for (const auto& split : kSplits)
    out << split << "\tconversations " << stats[split]["conversations"] << "\tprediction "
        << stats[split]["prediction_examples"] << "\tretrieval " << stats[split]["retrieval_examples"] << '\n';
  return kExitOk;
}

PredictorConfig predictor_config(const Settings& s) {
  PredictorConfig pc;
  pc.embed_dim = pc.hidden = s.count("model.predictor_dim");
  pc.top_relations = s.count("model.top_relations");
  pc.use_concepts = s.flag("model.use_concepts");
  pc.seed = s.u64("model.seed");
  return pc;
}

MatcherConfig matcher_config(const Settings& s) {
  MatcherConfig mc;
  mc.dim = s.count("model.matcher_dim");
  mc.top_relations = s.count("model.top_relations");
  mc.lambda_k = s.num("model.lambda_k");
  mc.use_keywords = s.flag("model.use_keywords");
  mc.use_concepts = s.flag("model.use_concepts");
  mc.seed = s.u64("model.seed");
  return mc;
}

EpochCallback epoch_printer(std::ostream& out) {
  return [&out](const EpochStats& e) {
    out << "epoch " << e.epoch << "\tloss " << e.mean_loss << "\tvalid R@1 " << e.valid_r1 << "\tlr " << e.lr << '\n';
  };
}

int cmd_train_predictor(Run& run, std::ostream& out) {
  auto res = load_resources(run);
  auto train = load_prediction_split(run, res, "train");
  auto valid = load_prediction_split(run, res, "valid");
  PredictorModel model(res, predictor_config(run.s));
  if (const auto& emb = run.s.str("model.embeddings"); !emb.empty()) {
    auto n = load_pretrained_embeddings(run.need(emb, ""), res.vocab(), model.params().get("embedding").value);
    out << "pretrained rows\t" << n << '\n';
  }
  auto result = train_predictor(model, train, valid, train_config(run.s), epoch_printer(out));
  const auto ckpt = run.produce(run.model_path("model.predictor", "predictor.ckpt"));
  if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());
  model.save(ckpt, static_cast<std::uint32_t>(result.best_epoch));
  write_epoch_log(run.produce(run.artifact("predictor_train.tsv")), result.epochs);
  out << "best epoch " << result.best_epoch << "\tvalid R@1 " << result.best_valid << '\n';
  return kExitOk;
}

int cmd_train_matcher(Run& run, std::ostream& out) {
  auto res = load_resources(run);
  auto predictor = load_predictor(run, res);
  auto train = load_retrieval_split(run, res, "train");
  auto valid = load_retrieval_split(run, res, "valid");
  MatcherModel model(res, matcher_config(run.s));
  const auto k = model.config().predicted_keywords;
  auto ktrain = predicted_keywords(predictor, train.examples, k);
  auto kvalid = predicted_keywords(predictor, valid.examples, k);
  auto result = train_matcher(model, {&train.pool, train.examples, ktrain}, {&valid.pool, valid.examples, kvalid},
                              train_config(run.s), epoch_printer(out));
  const auto ckpt = run.produce(run.model_path("model.matcher", "matcher.ckpt"));
  if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());
  model.save(ckpt, static_cast<std::uint32_t>(result.best_epoch));
  write_epoch_log(run.produce(run.artifact("matcher_train.tsv")), result.epochs);
  out << "best epoch " << result.best_epoch << "\tvalid R@1 " << result.best_valid << '\n';
  return kExitOk;
}

void report(Run& run, std::ostream& out, const MetricSummary& m, const std::string& name) {
  write_metric_tsv(out, m);
  auto f = open_out(run.produce(run.artifact(name)));
  write_metric_tsv(f, m);
}

int cmd_eval_predictor(Run& run, std::ostream& out) {
  auto res = load_resources(run);
  auto model = load_predictor(run, res);
  const auto split = run.s.str("data.split");
  auto examples = load_prediction_split(run, res, split);
  auto m = evaluate_predictor(model, res, examples);
  m.checkpoint_hash = sha256_file(run.model_path("model.predictor", "predictor.ckpt"));
  report(run, out, m, "eval_predictor_" + split + ".tsv");
  return kExitOk;
}

int cmd_eval_matcher(Run& run, std::ostream& out) {
  auto res = load_resources(run);
  auto predictor = load_predictor(run, res);
  auto model = load_matcher(run, res);
  const auto split = run.s.str("data.split");
  auto data = load_retrieval_split(run, res, split);
  auto kw = predicted_keywords(predictor, data.examples, model.config().predicted_keywords);
  auto m = evaluate_matcher(model, {&data.pool, data.examples, kw});
  m.checkpoint_hash = sha256_file(run.model_path("model.matcher", "matcher.ckpt"));
  report(run, out, m, "eval_matcher_" + split + ".tsv");
  return kExitOk;
}

// Everything an agent needs, kept alive together.
struct AgentStack {
  Resources res;
  PredictorModel predictor;
  MatcherModel matcher;
  ResponsePool pool;
  std::unique_ptr<PoolIndex> index;
  std::unique_ptr<Agent> agent;

  AgentStack(Resources r, Run& run)
      : res(std::move(r)), predictor(load_predictor(run, res)), matcher(load_matcher(run, res)) {
    auto in = open_in(run.need(run.artifact("pool_train.jsonl"), "prepare"));
    pool = ResponsePool::load(in);
    index = std::make_unique<PoolIndex>(PoolIndex::build(matcher, pool, run.s.count("sim.threads")));
    AgentConfig cfg;
    cfg.pool_size = run.s.count("sim.pool_size");
    cfg.keyword_tiers = run.s.flag("sim.keyword_tiers");
    const auto& strategy = run.s.str("sim.strategy");
    if (strategy == "embedding")
      cfg.strategy_embedding = &predictor.embedding();
    else if (strategy != "graph")
      throw ConfigError("sim.strategy must be graph or embedding, got '" + strategy + "'");
    agent = std::make_unique<Agent>(res, predictor, *index, cfg);
  }
};

SimulationConfig sim_config(const Settings& s) {
  SimulationConfig sc;
  sc.n_dialogues = s.count("sim.n");
  sc.max_agent_turns = s.count("sim.max_turns");
  sc.seed = s.u64("sim.seed");
  sc.threads = s.count("sim.threads");
  return sc;
}

int cmd_selfplay(Run& run, std::ostream& out) {
  // Resources must outlive the stack's raw pointers, so build it in place.
  auto stack = std::make_unique<AgentStack>(load_resources(run), run);
  const auto& res = stack->res;
  auto convs = load_split_conversations(run, res, run.s.str("data.split"));
  std::vector<Utterance> openers;
  for (const auto& c : convs)
    if (!c.utterances.empty()) openers.push_back(c.utterances.front());
  const auto cfg = sim_config(run.s);
  auto specs = sample_dialogues(res, openers, cfg);
  std::unique_ptr<Interlocutor> user;
  const auto& kind = run.s.str("sim.user");
  if (kind == "base")
    user = std::make_unique<BaseUser>(*stack->index);
  else if (kind == "echo")
    user = std::make_unique<KeywordEchoUser>(res);
  else
    throw ConfigError("sim.user must be base or echo, got '" + kind + "'");
  auto summary = run_selfplay(*stack->agent, *user, specs, cfg);
  {
    auto f = open_out(run.produce(run.artifact("selfplay_transcripts.jsonl")));
    write_transcripts(f, res, summary, cfg);
  }
  {
    auto f = open_out(run.produce(run.artifact("selfplay.tsv")));
    write_selfplay_tsv(f, summary, cfg);
  }
  write_selfplay_tsv(out, summary, cfg);
  return kExitOk;
}

int cmd_serve(Run& run, std::ostream& out) {
  auto stack = std::make_unique<AgentStack>(load_resources(run), run);
  ServiceConfig sc;
  sc.max_agent_turns = run.s.count("sim.max_turns");
  sc.seed = run.s.u64("sim.seed");
  sc.log_path = run.s.str("serve.log").empty() ? run.artifact("sessions.jsonl") : fs::path(run.s.str("serve.log"));
  run.produce(sc.log_path);
  ChatService service(*stack->agent, sc);
  httplib::Server server;
  install_routes(server, service);
  run.write_manifest();
  const auto host = run.s.str("serve.host");
  const auto port = static_cast<int>(run.s.count("serve.port"));
  out << "listening on " << host << ':' << port << " (" << service.session_count() << " sessions restored)"
      << std::endl;
  if (!server.listen(host, port)) throw ConfigError("cannot listen on " + host + ":" + std::to_string(port));
  return kExitOk;
}

json read_input(Run& run, const std::string& path) {
  try {
    if (path == "-") return json::parse(std::cin);
    auto in = open_in(run.need(path, ""));
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("input is not valid JSON: " + std::string(e.what()));
  }
}

std::vector<Utterance> read_context(const Resources& res, const json& j) {
  if (!j.contains("context") || !j["context"].is_array()) throw ConfigError("input needs a \"context\" array of strings");
  std::vector<Utterance> ctx;
  for (const auto& u : j["context"]) {
    if (!u.is_string()) throw ConfigError("context entries must be strings");
    ctx.push_back(res.process(u.get<std::string>()));
  }
  return ctx;
}

int cmd_predict(Run& run, std::ostream& out, const std::string& input, std::size_t k) {
  auto res = load_resources(run);
  auto model = load_predictor(run, res);
  auto ctx = read_context(res, read_input(run, input));
  auto top = predict_topk(model.predict({ctx, nullptr}), k);
  out << std::setprecision(6);
  for (const auto& [kw, p] : top.items) out << res.keywords().word(kw) << '\t' << p << '\n';
  return kExitOk;
}

int cmd_rank(Run& run, std::ostream& out, const std::string& input) {
  auto res = load_resources(run);
  auto predictor = load_predictor(run, res);
  auto matcher = load_matcher(run, res);
  const auto j = read_input(run, input);
  auto ctx = read_context(res, j);
  if (!j.contains("candidates") || !j["candidates"].is_array()) throw ConfigError("input needs a \"candidates\" array");
  struct Row {
    std::string id;
    MatchScore score;
  };
  std::vector<Row> rows;
  std::vector<KeywordId> predicted;
  for (const auto& [kw, p] : predict_topk(predictor.predict({ctx, nullptr}), matcher.config().predicted_keywords).items)
    predicted.push_back(kw);
  std::size_t i = 0;
  for (const auto& c : j["candidates"]) {
    std::string id = std::to_string(i++), text;
    if (c.is_string()) {
      text = c.get<std::string>();
    } else if (c.is_object() && c.contains("text")) {
      text = c["text"].get<std::string>();
      if (c.contains("id")) id = c["id"].is_string() ? c["id"].get<std::string>() : c["id"].dump();
    } else {
      throw ConfigError("candidates must be strings or {\"id\", \"text\"} objects");
    }
    rows.push_back({id, matcher.score(ctx, res.process(text), predicted)});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.score.s > b.score.s; });
  out << std::setprecision(10);
  for (const auto& r : rows) out << r.id << '\t' << r.score.s_u << '\t' << r.score.s_k << '\t' << r.score.s << '\n';
  return kExitOk;
}

struct Subcommand {
  std::string name;
  std::string help;
  std::vector<std::string> namespaces;
};

const std::vector<Subcommand> kSubcommands = {
    {"synth", "write the synthetic corpus to --data.corpus", {"data"}},
    {"prepare", "ingest, filter, build vocabularies, graph, examples and pools", {"data"}},
    {"train-predictor", "train the keyword predictor", {"data", "model", "train"}},
    {"train-matcher", "train the response matcher", {"data", "model", "train"}},
    {"eval-predictor", "R@1/R@3/R@5/P@1 of the predictor", {"data", "model"}},
    {"eval-matcher", "R@1/R@3/R@5/MRR of the matcher", {"data", "model"}},
    {"selfplay", "run simulated dialogues and report Succ. and #Turns", {"data", "model", "sim"}},
    {"serve", "host chat sessions over HTTP", {"data", "model", "sim", "serve"}},
    {"predict", "top-k next keywords for a context record", {"data", "model"}},
    {"rank", "score candidate responses for a context record", {"data", "model"}},
};

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err, const EnvLookup& env) {
  CLI::App app{"ckc: keyword-guided conversation on a commonsense graph"};
  app.require_subcommand(1);
  struct Bound {
    CLI::App* app;
    std::vector<SettingSpec> specs;
    std::map<std::string, std::string> values;
    std::string config;
    std::string input = "-";
    std::size_t k = 3;
  };
  std::vector<std::unique_ptr<Bound>> bound;
  for (const auto& sc : kSubcommands) {
    auto b = std::make_unique<Bound>();
    b->app = app.add_subcommand(sc.name, sc.help);
    b->specs = settings_in(sc.namespaces);
    b->app->add_option("--config", b->config, "JSON config file (or a manifest from an earlier run)");
    for (const auto& spec : b->specs) {
      auto* v = &b->values;
      const auto key = spec.key;
      auto help = spec.help + " [" + (spec.default_value.empty() ? "unset" : spec.default_value) + ", env " +
                  env_name(spec.key) + "]";
      b->app->add_option_function<std::string>("--" + spec.key, [v, key](const std::string& s) { (*v)[key] = s; },
                                                help);
    }
    if (sc.name == "predict" || sc.name == "rank")
      b->app->add_option("--input", b->input, "context record file, '-' for stdin");
    if (sc.name == "predict") b->app->add_option("--k", b->k, "number of keywords");
    bound.push_back(std::move(b));
  }

  std::vector<std::string> args;
  for (int i = argc - 1; i >= 1; --i) args.emplace_back(argv[i]);
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << "run `ckc --help` for usage\n";
    return kExitUsage;
  }

  for (std::size_t i = 0; i < bound.size(); ++i) {
    auto& b = *bound[i];
    if (!b.app->parsed()) continue;
    const auto& name = kSubcommands[i].name;
    try {
      json config;
      if (!b.config.empty()) {
        config = read_config_file(b.config);
        if (config.is_object() && config.contains("manifest_version")) config = config["config"];
      }
      Run run(name, Settings::resolve(b.specs, b.values, config, env));
      int code = kExitOk;
      if (name == "synth") code = cmd_synth(run, out);
      else if (name == "prepare") code = cmd_prepare(run, out);
      else if (name == "train-predictor") code = cmd_train_predictor(run, out);
      else if (name == "train-matcher") code = cmd_train_matcher(run, out);
      else if (name == "eval-predictor") code = cmd_eval_predictor(run, out);
      else if (name == "eval-matcher") code = cmd_eval_matcher(run, out);
      else if (name == "selfplay") code = cmd_selfplay(run, out);
      else if (name == "serve") code = cmd_serve(run, out);
      else if (name == "predict") code = cmd_predict(run, out, b.input, b.k);
      else if (name == "rank") code = cmd_rank(run, out, b.input);
      if (name != "serve") run.write_manifest();
      return code;
    } catch (const std::exception& e) {
      err << "error: " << e.what() << '\n';
      return kExitFailure;
    }
  }
  err << "usage error: no subcommand\n";
  return kExitUsage;
}

}  // namespace ckc::cli
