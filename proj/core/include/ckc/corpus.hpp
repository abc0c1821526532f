#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ckc/graph.hpp"
#include "ckc/text.hpp"

namespace ckc {

inline constexpr std::size_t kMaxUtteranceTokens = 30;
inline constexpr std::size_t kMaxKeywords = 10;
inline constexpr std::size_t kMaxRetrievalContext = 8;
inline constexpr std::size_t kRetrievalCandidates = 20;

struct Utterance {
  std::string text;
  std::vector<std::string> words;  // surface tokens after truncation
  std::vector<TokenId> tokens;
  std::vector<KeywordId> keywords;
  std::vector<NodeId> concepts;  // matched graph nodes other than the keywords' own nodes

  friend bool operator==(const Utterance&, const Utterance&) = default;
};

struct Conversation {
  std::vector<Utterance> utterances;
  std::string split;

  friend bool operator==(const Conversation&, const Conversation&) = default;
};

struct TextConfig {
  std::size_t vocab_cap = Vocab::kDefaultCap;
  std::size_t keyword_min_freq = KeywordVocab::kDefaultMinFreq;
  std::size_t max_tokens = kMaxUtteranceTokens;
  std::size_t max_keywords = kMaxKeywords;
  GraphFilter filter;
};

// Everything needed to turn raw text into model inputs: vocabularies, the
// filtered graph and the keyword <-> node correspondence.
class Resources {
 public:
  Resources(Vocab vocab, TfIdfStats stats, PosLexicon pos, StopwordList stopwords, KeywordVocab keywords,
            CkgGraph graph, TextConfig config = {});

  const Vocab& vocab() const { return vocab_; }
  const TfIdfStats& stats() const { return stats_; }
  const PosLexicon& pos() const { return pos_; }
  const StopwordList& stopwords() const { return stopwords_; }
  const KeywordVocab& keywords() const { return keywords_; }
  const CkgGraph& graph() const { return graph_; }
  const TextConfig& config() const { return config_; }

  std::optional<NodeId> keyword_node(KeywordId k) const { return keyword_node_.at(k); }
  std::optional<KeywordId> node_keyword(NodeId n) const { return node_keyword_.at(n); }

  // Tokenize, truncate, encode, extract keywords and match concepts.
  Utterance process(std::string_view text) const;

  // Keyword neighbours of the context keywords on the graph, excluding the
  // context keywords themselves. Sorted ascending.
  std::vector<KeywordId> candidate_mask(std::span<const KeywordId> context_keywords) const;

  // vocab.txt, tfidf.tsv, keywords.tsv, graph.bin, pos_lexicon.tsv,
  // stopwords.txt and text_config.json inside `dir`.
  void save(const std::filesystem::path& dir) const;
  static Resources load(const std::filesystem::path& dir);

 private:
  Vocab vocab_;
  TfIdfStats stats_;
  PosLexicon pos_;
  StopwordList stopwords_;
  KeywordVocab keywords_;
  CkgGraph graph_;
  TextConfig config_;
  std::vector<std::optional<NodeId>> keyword_node_;
  std::vector<std::optional<KeywordId>> node_keyword_;
};

// Raw conversations: one JSON object {"utterances": [...]} per line.
std::vector<std::vector<std::string>> read_conversations(std::istream& in);
std::vector<std::vector<std::string>> read_conversations(const std::filesystem::path& path);

// Builds vocabularies from the (tokenized, truncated) training utterances,
// then loads and filters the triplets against them.
Resources build_resources(std::span<const std::vector<std::string>> train_conversations, std::istream& triplets,
                          PosLexicon pos, StopwordList stopwords, const TextConfig& config = {});

// Conversations with fewer than two utterances are dropped.
struct IngestResult {
  std::vector<Conversation> conversations;
  std::size_t dropped = 0;
};
IngestResult ingest(std::span<const std::vector<std::string>> raw, const Resources& res, std::string split);

struct PredictionExample {
  std::uint64_t id = 0;
  std::uint32_t conversation = 0;
  std::uint32_t position = 0;  // 0-based index of x_n
  std::vector<Utterance> context;  // (x_{n-1}, x_n)
  std::vector<KeywordId> context_keywords;  // k_{n-1} u k_n, sorted
  std::vector<KeywordId> mask;  // sorted
  std::vector<KeywordId> gold;  // sorted, subset of mask
};

struct PredictionSet {
  std::vector<PredictionExample> examples;
  std::size_t dropped = 0;
};

PredictionSet make_prediction_examples(std::span<const Conversation> convs, const Resources& res);

// Deduplicated utterances keyed by their truncated token sequence.
class ResponsePool {
 public:
  static ResponsePool build(std::span<const Conversation> convs);

  std::size_t size() const { return entries_.size(); }
  const Utterance& at(std::size_t id) const { return entries_.at(id); }
  const std::vector<Utterance>& entries() const { return entries_; }
  std::optional<std::size_t> find(const Utterance& u) const;
  // Conversations (indices into the build input) an entry appears in.
  const std::vector<std::uint32_t>& sources(std::size_t id) const { return sources_.at(id); }

  void save(std::ostream& out) const;
  static ResponsePool load(std::istream& in);

  static std::string key(const Utterance& u);

 private:
  void add(const Utterance& u, std::optional<std::uint32_t> conversation);

  std::vector<Utterance> entries_;
  std::vector<std::vector<std::uint32_t>> sources_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct RetrievalExample {
  std::uint64_t id = 0;
  std::uint32_t conversation = 0;
  std::uint32_t position = 0;  // index of the gold response
  std::vector<Utterance> context;  // up to 8 utterances, oldest first
  std::vector<std::size_t> candidates;  // pool ids, exactly 20
  std::size_t gold_index = 0;  // position of the gold response in candidates
};

// One example per response position >= 1. Negatives are drawn uniformly
// without replacement from pool entries that never occur in the same
// conversation; the gold slot is placed at a seeded random position.
std::vector<RetrievalExample> make_retrieval_examples(std::span<const Conversation> convs, const ResponsePool& pool,
                                                      std::uint64_t seed);

// Line-delimited JSON persistence. Words are recovered by re-tokenizing text.
void save_utterance_jsonl(std::ostream& out, const Utterance& u);
void save_prediction_examples(std::ostream& out, std::span<const PredictionExample> examples);
std::vector<PredictionExample> load_prediction_examples(std::istream& in, std::size_t max_tokens = kMaxUtteranceTokens);
void save_retrieval_examples(std::ostream& out, std::span<const RetrievalExample> examples);
std::vector<RetrievalExample> load_retrieval_examples(std::istream& in, std::size_t max_tokens = kMaxUtteranceTokens);
void save_conversations(std::ostream& out, std::span<const Conversation> convs);
std::vector<Conversation> load_conversations(std::istream& in, std::size_t max_tokens = kMaxUtteranceTokens);

// Truncated surface tokens, as stored in Utterance::words.
std::vector<std::string> surface_tokens(std::string_view text, std::size_t max_tokens = kMaxUtteranceTokens);

}  // namespace ckc
