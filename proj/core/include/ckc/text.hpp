#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace ckc {

using TokenId = std::uint32_t;
using KeywordId = std::uint32_t;

// Lowercases, splits on whitespace, and breaks punctuation into separate
// tokens. English clitics stay attached to their apostrophe ("i'm" -> i 'm,
// "don't" -> do n't).
std::vector<std::string> tokenize(std::string_view text);

class Vocab {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr TokenId kBos = 2;
  static constexpr TokenId kEos = 3;
  static constexpr std::size_t kNumSpecials = 4;
  static constexpr std::size_t kDefaultCap = 20000;

  Vocab();
  // Specials are prepended; `content` must not contain them or duplicates.
  explicit Vocab(std::span<const std::string> content);

  TokenId encode(std::string_view token) const;
  std::vector<TokenId> encode(std::span<const std::string> tokens) const;
  const std::string& decode(TokenId id) const;
  bool contains(std::string_view token) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::string fingerprint() const;

  // One token per line in id order (specials included).
  void save(std::ostream& out) const;
  static Vocab load(std::istream& in);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

// Document frequencies over utterances.
struct TfIdfStats {
  std::size_t num_docs = 0;
  std::unordered_map<std::string, std::size_t> doc_freq;
  std::unordered_map<std::string, std::size_t> term_freq;  // corpus-wide counts

  std::size_t df(std::string_view token) const;
  // log(T / df); zero for tokens never seen.
  double idf(std::string_view token) const;

  // "#docs<TAB>T" header, then token<TAB>df<TAB>tf lines sorted by token.
  void save(std::ostream& out) const;
  static TfIdfStats load(std::istream& in);
};

// Build a vocabulary of the `cap` most frequent tokens (ties broken
// lexicographically) and record per-utterance document frequencies.
struct VocabBuild {
  Vocab vocab;
  TfIdfStats stats;
};
VocabBuild build_vocab(std::span<const std::vector<std::string>> utterances,
                       std::size_t cap = Vocab::kDefaultCap);

enum class PosTag : std::uint8_t { kNoun, kVerb, kAdj, kOther };

std::string_view to_string(PosTag tag);
PosTag parse_pos_tag(std::string_view s);

// Pluggable part-of-speech oracle.
class PosOracle {
 public:
  virtual ~PosOracle() = default;
  virtual PosTag tag(std::string_view token) const = 0;
};

// token<TAB>tag lexicon; unknown tokens are tagged kOther.
class PosLexicon final : public PosOracle {
 public:
  PosLexicon() = default;
  static PosLexicon load(std::istream& in);
  static PosLexicon load(const std::filesystem::path& path);

  void set(std::string token, PosTag tag) { tags_[std::move(token)] = tag; }
  PosTag tag(std::string_view token) const override;
  std::size_t size() const { return tags_.size(); }

 private:
  std::unordered_map<std::string, PosTag> tags_;
};

class StopwordList {
 public:
  StopwordList() = default;
  static StopwordList load(std::istream& in);
  static StopwordList load(const std::filesystem::path& path);

  void add(std::string word) { words_.insert(std::move(word)); }
  bool contains(std::string_view word) const { return words_.contains(std::string(word)); }
  std::size_t size() const { return words_.size(); }

 private:
  std::unordered_set<std::string> words_;
};

bool is_content_tag(PosTag tag);

// Keywords are a subset of the word vocabulary. KeywordId indexes the
// keyword list; ids follow vocabulary order.
class KeywordVocab {
 public:
  static constexpr std::size_t kDefaultMinFreq = 10;

  KeywordVocab() = default;
  KeywordVocab(const Vocab& vocab, std::span<const std::string> keywords,
               const TfIdfStats& stats);

  // Content words (noun/verb/adj, not stopwords) with corpus frequency
  // >= min_freq.
  static KeywordVocab build(const Vocab& vocab, const TfIdfStats& stats, const PosOracle& pos,
                            const StopwordList& stopwords,
                            std::size_t min_freq = kDefaultMinFreq);

  std::size_t size() const { return words_.size(); }
  bool empty() const { return words_.empty(); }
  bool contains(std::string_view token) const;
  // Throws BoundsError when absent.
  KeywordId id(std::string_view token) const;
  const KeywordId* find(std::string_view token) const;
  const std::string& word(KeywordId id) const;
  TokenId token(KeywordId id) const { return token_ids_.at(id); }
  std::size_t doc_freq(KeywordId id) const { return doc_freq_.at(id); }
  const std::vector<std::string>& words() const { return words_; }

  std::string fingerprint() const;

  // keyword<TAB>doc_freq per line, in id order.
  void save(std::ostream& out) const;
  static KeywordVocab load(std::istream& in, const Vocab& vocab);

 private:
  std::vector<std::string> words_;
  std::vector<TokenId> token_ids_;
  std::vector<std::size_t> doc_freq_;
  std::unordered_map<std::string, KeywordId> index_;
};

struct KeywordExtractor {
  static constexpr std::size_t kDefaultCap = 10;

  const PosOracle& pos;
  const StopwordList& stopwords;
  const TfIdfStats& stats;
  const KeywordVocab& keywords;
  std::size_t cap = kDefaultCap;

  // tf * log(T/df) over keyword-vocabulary content words; top `cap`,
  // score ties resolved by first occurrence.
  std::vector<KeywordId> extract(std::span<const std::string> tokens) const;
};

}  // namespace ckc
