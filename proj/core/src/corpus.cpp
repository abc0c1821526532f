#include "ckc/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

#include "ckc/errors.hpp"

namespace ckc {
namespace {

using nlohmann::json;

std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw ConfigError("missing required file " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) throw ConfigError("cannot write " + path.string());
  return out;
}

json utterance_json(const Utterance& u) {
  return json{{"text", u.text}, {"tokens", u.tokens}, {"keywords", u.keywords}, {"concepts", u.concepts}};
}

Utterance utterance_from(const json& j, std::size_t max_tokens) {
  Utterance u;
  u.text = j.at("text").get<std::string>();
  u.words = surface_tokens(u.text, max_tokens);
  u.tokens = j.at("tokens").get<std::vector<TokenId>>();
  u.keywords = j.at("keywords").get<std::vector<KeywordId>>();
  u.concepts = j.at("concepts").get<std::vector<NodeId>>();
  return u;
}

template <typename F>
void for_each_json_line(std::istream& in, F&& f) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    json j;
    try {
      j = json::parse(line);
      f(j, lineno);
    } catch (const json::exception& e) {
      throw ParseError(std::string("malformed record: ") + e.what(), lineno);
    }
  }
}

std::vector<KeywordId> sorted_union(std::span<const Utterance> utts) {
  std::vector<KeywordId> out;
  for (const auto& u : utts) out.insert(out.end(), u.keywords.begin(), u.keywords.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace

std::vector<std::string> surface_tokens(std::string_view text, std::size_t max_tokens) {
  auto words = tokenize(text);
  if (words.size() > max_tokens) words.resize(max_tokens);
  return words;
}

// ---------------------------------------------------------------- Resources

Resources::Resources(Vocab vocab, TfIdfStats stats, PosLexicon pos, StopwordList stopwords, KeywordVocab keywords,
                     CkgGraph graph, TextConfig config)
    : vocab_(std::move(vocab)),
      stats_(std::move(stats)),
      pos_(std::move(pos)),
      stopwords_(std::move(stopwords)),
      keywords_(std::move(keywords)),
      graph_(std::move(graph)),
      config_(config) {
  keyword_node_.resize(keywords_.size());
  node_keyword_.resize(graph_.num_nodes());
  for (KeywordId k = 0; k < keywords_.size(); ++k) {
    if (auto n = graph_.find(keywords_.word(k))) {
      keyword_node_[k] = *n;
      node_keyword_[*n] = k;
    }
  }
}

Utterance Resources::process(std::string_view text) const {
  Utterance u;
  u.text = std::string(text);
  u.words = surface_tokens(text, config_.max_tokens);
  u.tokens = vocab_.encode(u.words);
  KeywordExtractor ex{pos_, stopwords_, stats_, keywords_, config_.max_keywords};
  u.keywords = ex.extract(u.words);
  u.concepts = graph_.extract_concepts(u.words, config_.filter.max_match_words);
  std::erase_if(u.concepts, [&](NodeId n) {
    auto k = node_keyword_.at(n);
    return k && std::find(u.keywords.begin(), u.keywords.end(), *k) != u.keywords.end();
  });
  return u;
}

std::vector<KeywordId> Resources::candidate_mask(std::span<const KeywordId> context_keywords) const {
  std::set<KeywordId> ctx(context_keywords.begin(), context_keywords.end());
  std::set<KeywordId> mask;
  for (auto k : ctx) {
    auto node = keyword_node_.at(k);
    if (!node) continue;
    for (const auto& inc : graph_.incident(*node)) {
      if (auto nk = node_keyword_[inc.other]; nk && !ctx.contains(*nk)) mask.insert(*nk);
    }
  }
  return {mask.begin(), mask.end()};
}

void Resources::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  {
    auto out = open_out(dir / "vocab.txt");
    vocab_.save(out);
  }
  {
    auto out = open_out(dir / "tfidf.tsv");
    stats_.save(out);
  }
  {
    auto out = open_out(dir / "keywords.tsv");
    keywords_.save(out);
  }
  graph_.save(dir / "graph.bin");
  {
    auto out = open_out(dir / "pos_lexicon.tsv");
    std::vector<std::pair<std::string, PosTag>> entries;
    for (const auto& w : vocab_.tokens())
      if (pos_.tag(w) != PosTag::kOther) entries.emplace_back(w, pos_.tag(w));
    std::sort(entries.begin(), entries.end());
    for (const auto& [w, t] : entries) out << w << '\t' << to_string(t) << '\n';
  }
  {
    auto out = open_out(dir / "stopwords.txt");
    std::vector<std::string> words;
    for (const auto& w : vocab_.tokens())
      if (stopwords_.contains(w)) words.push_back(w);
    std::sort(words.begin(), words.end());
    for (const auto& w : words) out << w << '\n';
  }
  {
    auto out = open_out(dir / "text_config.json");
    json j{{"vocab_cap", config_.vocab_cap},
           {"keyword_min_freq", config_.keyword_min_freq},
           {"max_tokens", config_.max_tokens},
           {"max_keywords", config_.max_keywords},
           {"min_weight", config_.filter.min_weight},
           {"max_match_words", config_.filter.max_match_words}};
    out << j.dump(2) << '\n';
  }
}

Resources Resources::load(const std::filesystem::path& dir) {
  auto vin = open_in(dir / "vocab.txt");
  auto vocab = Vocab::load(vin);
  auto sin = open_in(dir / "tfidf.tsv");
  auto stats = TfIdfStats::load(sin);
  auto kin = open_in(dir / "keywords.tsv");
  auto keywords = KeywordVocab::load(kin, vocab);
  auto graph = CkgGraph::load(dir / "graph.bin", vocab.fingerprint(), keywords.fingerprint());
  auto pos = PosLexicon::load(dir / "pos_lexicon.tsv");
  auto stop = StopwordList::load(dir / "stopwords.txt");
  TextConfig cfg;
  auto cin = open_in(dir / "text_config.json");
  try {
    auto j = json::parse(cin);
    cfg.vocab_cap = j.at("vocab_cap");
    cfg.keyword_min_freq = j.at("keyword_min_freq");
    cfg.max_tokens = j.at("max_tokens");
    cfg.max_keywords = j.at("max_keywords");
    cfg.filter.min_weight = j.at("min_weight");
    cfg.filter.max_match_words = j.at("max_match_words");
  } catch (const json::exception& e) {
    throw ConfigError("bad text_config.json: " + std::string(e.what()));
  }
  return Resources(std::move(vocab), std::move(stats), std::move(pos), std::move(stop), std::move(keywords),
                   std::move(graph), cfg);
}

// ---------------------------------------------------------------- ingestion

std::vector<std::vector<std::string>> read_conversations(std::istream& in) {
  std::vector<std::vector<std::string>> out;
  std::string line;
  std::size_t record = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    ++record;
    try {
      auto j = json::parse(line);
      out.push_back(j.at("utterances").get<std::vector<std::string>>());
    } catch (const json::exception& e) {
      throw ParseError("malformed conversation record " + std::to_string(record) + ": " + e.what(), record);
    }
  }
  return out;
}

std::vector<std::vector<std::string>> read_conversations(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_conversations(in);
}

Resources build_resources(std::span<const std::vector<std::string>> train_conversations, std::istream& triplets,
                          PosLexicon pos, StopwordList stopwords, const TextConfig& config) {
  std::vector<std::vector<std::string>> docs;
  for (const auto& conv : train_conversations)
    for (const auto& text : conv) docs.push_back(surface_tokens(text, config.max_tokens));
  auto built = build_vocab(docs, config.vocab_cap);
  auto keywords = KeywordVocab::build(built.vocab, built.stats, pos, stopwords, config.keyword_min_freq);
  if (keywords.empty()) throw ConfigError("no keyword passed the POS, stopword and frequency filters");
  auto graph = load_graph(triplets, built.vocab, keywords, config.filter);
  return Resources(std::move(built.vocab), std::move(built.stats), std::move(pos), std::move(stopwords),
                   std::move(keywords), std::move(graph), config);
}

IngestResult ingest(std::span<const std::vector<std::string>> raw, const Resources& res, std::string split) {
  IngestResult out;
  for (const auto& texts : raw) {
    if (texts.size() < 2) {
      ++out.dropped;
      continue;
    }
    Conversation c;
    c.split = split;
    c.utterances.reserve(texts.size());
    for (const auto& t : texts) c.utterances.push_back(res.process(t));
    out.conversations.push_back(std::move(c));
  }
  return out;
}

// ---------------------------------------------------------------- prediction examples

PredictionSet make_prediction_examples(std::span<const Conversation> convs, const Resources& res) {
  PredictionSet out;
  for (std::uint32_t ci = 0; ci < convs.size(); ++ci) {
    const auto& utts = convs[ci].utterances;
    for (std::uint32_t n = 1; n + 1 < utts.size(); ++n) {
      PredictionExample ex;
      ex.context = {utts[n - 1], utts[n]};
      ex.context_keywords = sorted_union(ex.context);
      ex.mask = res.candidate_mask(ex.context_keywords);
      std::vector<KeywordId> next(utts[n + 1].keywords.begin(), utts[n + 1].keywords.end());
      std::sort(next.begin(), next.end());
      next.erase(std::unique(next.begin(), next.end()), next.end());
      std::set_intersection(next.begin(), next.end(), ex.mask.begin(), ex.mask.end(), std::back_inserter(ex.gold));
      if (ex.mask.empty() || ex.gold.empty()) {
        ++out.dropped;
        continue;
      }
      ex.id = out.examples.size();
      ex.conversation = ci;
      ex.position = n;
      out.examples.push_back(std::move(ex));
    }
  }
  return out;
}

// ---------------------------------------------------------------- response pool

std::string ResponsePool::key(const Utterance& u) {
  std::string k;
  for (const auto& w : u.words) {
    k += w;
    k += ' ';
  }
  return k;
}

void ResponsePool::add(const Utterance& u, std::optional<std::uint32_t> conversation) {
  auto [it, inserted] = index_.emplace(key(u), entries_.size());
  if (inserted) {
    entries_.push_back(u);
    sources_.emplace_back();
  }
  if (conversation) {
    auto& src = sources_[it->second];
    if (src.empty() || src.back() != *conversation) src.push_back(*conversation);
  }
}

ResponsePool ResponsePool::build(std::span<const Conversation> convs) {
  ResponsePool pool;
  for (std::uint32_t ci = 0; ci < convs.size(); ++ci)
    for (const auto& u : convs[ci].utterances) pool.add(u, ci);
  return pool;
}

std::optional<std::size_t> ResponsePool::find(const Utterance& u) const {
  auto it = index_.find(key(u));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

void ResponsePool::save(std::ostream& out) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto j = utterance_json(entries_[i]);
    j["id"] = i;
    j["sources"] = sources_[i];
    out << j.dump() << '\n';
  }
}

ResponsePool ResponsePool::load(std::istream& in) {
  ResponsePool pool;
  for_each_json_line(in, [&](const json& j, std::size_t lineno) {
    if (j.at("id").get<std::size_t>() != pool.size()) throw ParseError("pool ids must be dense and ordered", lineno);
    pool.add(utterance_from(j, kMaxUtteranceTokens), std::nullopt);
    if (pool.size() != lineno) throw ParseError("duplicate pool entry", lineno);
    pool.sources_.back() = j.at("sources").get<std::vector<std::uint32_t>>();
  });
  return pool;
}

// ---------------------------------------------------------------- retrieval examples

std::vector<RetrievalExample> make_retrieval_examples(std::span<const Conversation> convs, const ResponsePool& pool,
                                                      std::uint64_t seed) {
  constexpr std::size_t kNegatives = kRetrievalCandidates - 1;
  if (pool.size() < kRetrievalCandidates)
    throw ConfigError("retrieval needs at least " + std::to_string(kRetrievalCandidates) +
                      " distinct responses, the corpus has " + std::to_string(pool.size()));
  std::mt19937_64 rng(seed);
  std::vector<RetrievalExample> out;
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  for (std::uint32_t ci = 0; ci < convs.size(); ++ci) {
    const auto& utts = convs[ci].utterances;
    for (std::uint32_t n = 1; n < utts.size(); ++n) {
      auto gold = pool.find(utts[n]);
      if (!gold) throw ContractViolation("response pool was not built from these conversations");
      auto eligible = [&](std::size_t id) {
        const auto& src = pool.sources(id);
        return id != *gold && std::find(src.begin(), src.end(), ci) == src.end();
      };
      std::vector<std::size_t> negatives;
      std::set<std::size_t> chosen;
      std::size_t attempts = 0;
      while (negatives.size() < kNegatives && attempts < 64 * kNegatives) {
        ++attempts;
        auto id = pick(rng);
        if (eligible(id) && chosen.insert(id).second) negatives.push_back(id);
      }
      if (negatives.size() < kNegatives) {
        std::vector<std::size_t> rest;
        for (std::size_t id = 0; id < pool.size(); ++id)
          if (eligible(id) && !chosen.contains(id)) rest.push_back(id);
        if (rest.size() < kNegatives - negatives.size())
          throw ConfigError("not enough responses outside conversation " + std::to_string(ci) +
                            " to draw negatives");
        std::shuffle(rest.begin(), rest.end(), rng);
        rest.resize(kNegatives - negatives.size());
        negatives.insert(negatives.end(), rest.begin(), rest.end());
      }
      RetrievalExample ex;
      ex.id = out.size();
      ex.conversation = ci;
      ex.position = n;
      const std::size_t first = n > kMaxRetrievalContext ? n - kMaxRetrievalContext : 0;
      ex.context.assign(utts.begin() + first, utts.begin() + n);
      ex.gold_index = std::uniform_int_distribution<std::size_t>(0, kNegatives)(rng);
      ex.candidates = std::move(negatives);
      ex.candidates.insert(ex.candidates.begin() + static_cast<std::ptrdiff_t>(ex.gold_index), *gold);
      out.push_back(std::move(ex));
    }
  }
  return out;
}

// ---------------------------------------------------------------- persistence

void save_utterance_jsonl(std::ostream& out, const Utterance& u) { out << utterance_json(u).dump() << '\n'; }

void save_prediction_examples(std::ostream& out, std::span<const PredictionExample> examples) {
  for (const auto& ex : examples) {
    json ctx = json::array();
    for (const auto& u : ex.context) ctx.push_back(utterance_json(u));
    json j{{"id", ex.id},
           {"conversation", ex.conversation},
           {"position", ex.position},
           {"context", ctx},
           {"context_keywords", ex.context_keywords},
           {"mask", ex.mask},
           {"gold", ex.gold}};
    out << j.dump() << '\n';
  }
}

std::vector<PredictionExample> load_prediction_examples(std::istream& in, std::size_t max_tokens) {
  std::vector<PredictionExample> out;
  for_each_json_line(in, [&](const json& j, std::size_t) {
    PredictionExample ex;
    ex.id = j.at("id");
    ex.conversation = j.at("conversation");
    ex.position = j.at("position");
    for (const auto& u : j.at("context")) ex.context.push_back(utterance_from(u, max_tokens));
    ex.context_keywords = j.at("context_keywords").get<std::vector<KeywordId>>();
    ex.mask = j.at("mask").get<std::vector<KeywordId>>();
    ex.gold = j.at("gold").get<std::vector<KeywordId>>();
    out.push_back(std::move(ex));
  });
  return out;
}

void save_retrieval_examples(std::ostream& out, std::span<const RetrievalExample> examples) {
  for (const auto& ex : examples) {
    json ctx = json::array();
    for (const auto& u : ex.context) ctx.push_back(utterance_json(u));
    json j{{"id", ex.id},
           {"conversation", ex.conversation},
           {"position", ex.position},
           {"context", ctx},
           {"candidates", ex.candidates},
           {"gold_index", ex.gold_index}};
    out << j.dump() << '\n';
  }
}

std::vector<RetrievalExample> load_retrieval_examples(std::istream& in, std::size_t max_tokens) {
  std::vector<RetrievalExample> out;
  for_each_json_line(in, [&](const json& j, std::size_t lineno) {
    RetrievalExample ex;
    ex.id = j.at("id");
    ex.conversation = j.at("conversation");
    ex.position = j.at("position");
    for (const auto& u : j.at("context")) ex.context.push_back(utterance_from(u, max_tokens));
    ex.candidates = j.at("candidates").get<std::vector<std::size_t>>();
    ex.gold_index = j.at("gold_index");
    if (ex.gold_index >= ex.candidates.size()) throw ParseError("gold_index outside the candidate list", lineno);
    out.push_back(std::move(ex));
  });
  return out;
}

void save_conversations(std::ostream& out, std::span<const Conversation> convs) {
  for (const auto& c : convs) {
    json utts = json::array();
    for (const auto& u : c.utterances) utts.push_back(utterance_json(u));
    out << json{{"split", c.split}, {"utterances", utts}}.dump() << '\n';
  }
}

std::vector<Conversation> load_conversations(std::istream& in, std::size_t max_tokens) {
  std::vector<Conversation> out;
  for_each_json_line(in, [&](const json& j, std::size_t) {
    Conversation c;
    c.split = j.at("split");
    for (const auto& u : j.at("utterances")) c.utterances.push_back(utterance_from(u, max_tokens));
    out.push_back(std::move(c));
  });
  return out;
}

}  // namespace ckc
