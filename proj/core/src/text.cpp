#include "ckc/text.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "ckc/errors.hpp"
#include "ckc/hash.hpp"

namespace ckc {
namespace {

bool is_word_char(unsigned char c) { return std::isalnum(c) || c == '_' || c >= 0x80; }

char lower(unsigned char c) { return c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c); }

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) out.push_back(std::move(word));
    word.clear();
  };
  const std::size_t n = text.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      flush();
    } else if (is_word_char(c)) {
      word.push_back(lower(c));
    } else if (c == '\'' && !word.empty() && i + 1 < n &&
               std::isalpha(static_cast<unsigned char>(text[i + 1]))) {
      std::size_t j = i + 1;
      std::string suffix;
      while (j < n && std::isalpha(static_cast<unsigned char>(text[j]))) suffix.push_back(lower(text[j++]));
      if (suffix == "t" && word.size() > 1 && word.back() == 'n') {
        word.pop_back();
        flush();
        out.emplace_back("n't");
      } else {
        flush();
        out.push_back("'" + suffix);
      }
      i = j - 1;
    } else {
      flush();
      out.emplace_back(1, static_cast<char>(c));
    }
  }
  flush();
  return out;
}

// ---------------------------------------------------------------- Vocab

Vocab::Vocab() : Vocab(std::span<const std::string>{}) {}

Vocab::Vocab(std::span<const std::string> content) {
  tokens_ = {"<pad>", "<unk>", "<bos>", "<eos>"};
  tokens_.insert(tokens_.end(), content.begin(), content.end());
  for (TokenId i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], i).second)
      throw ConfigError("duplicate vocabulary token '" + tokens_[i] + "'");
  }
}

TokenId Vocab::encode(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

std::vector<TokenId> Vocab::encode(std::span<const std::string> tokens) const {
  std::vector<TokenId> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(encode(t));
  return ids;
}

const std::string& Vocab::decode(TokenId id) const {
  if (id >= tokens_.size()) throw BoundsError("token id " + std::to_string(id) + " out of range");
  return tokens_[id];
}

bool Vocab::contains(std::string_view token) const { return index_.contains(std::string(token)); }

std::string Vocab::fingerprint() const {
  std::ostringstream os;
  save(os);
  return sha256_hex(os.str());
}

void Vocab::save(std::ostream& out) const {
  for (const auto& t : tokens_) out << t << '\n';
}

Vocab Vocab::load(std::istream& in) {
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  if (lines.size() < kNumSpecials || lines[0] != "<pad>" || lines[1] != "<unk>" ||
      lines[2] != "<bos>" || lines[3] != "<eos>")
    throw ParseError("vocabulary snapshot must start with the four special tokens", 1);
  return Vocab(std::span<const std::string>(lines).subspan(kNumSpecials));
}

std::size_t TfIdfStats::df(std::string_view token) const {
  auto it = doc_freq.find(std::string(token));
  return it == doc_freq.end() ? 0 : it->second;
}

double TfIdfStats::idf(std::string_view token) const {
  const auto d = df(token);
  if (d == 0 || num_docs == 0) return 0.0;
  return std::log(static_cast<double>(num_docs) / static_cast<double>(d));
}

void TfIdfStats::save(std::ostream& out) const {
  out << "#docs\t" << num_docs << '\n';
  std::map<std::string_view, std::size_t> sorted(doc_freq.begin(), doc_freq.end());
  for (const auto& [tok, d] : sorted) {
    auto it = term_freq.find(std::string(tok));
    out << tok << '\t' << d << '\t' << (it == term_freq.end() ? d : it->second) << '\n';
  }
}

TfIdfStats TfIdfStats::load(std::istream& in) {
  TfIdfStats stats;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string tok;
    std::size_t a = 0, b = 0;
    if (!std::getline(fields, tok, '\t') || !(fields >> a)) throw ParseError("bad tf-idf record", lineno);
    if (lineno == 1 && tok == "#docs") {
      stats.num_docs = a;
      continue;
    }
    if (!(fields >> b)) b = a;
    stats.doc_freq[tok] = a;
    stats.term_freq[tok] = b;
  }
  return stats;
}

VocabBuild build_vocab(std::span<const std::vector<std::string>> utterances, std::size_t cap) {
  if (utterances.empty()) throw ConfigError("cannot build a vocabulary from an empty corpus");
  TfIdfStats stats;
  stats.num_docs = utterances.size();
  for (const auto& utt : utterances) {
    std::unordered_set<std::string_view> seen;
    for (const auto& tok : utt) {
      ++stats.term_freq[tok];
      if (seen.insert(tok).second) ++stats.doc_freq[tok];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(stats.term_freq.begin(), stats.term_freq.end());
  std::erase_if(ranked, [](const auto& p) {
    return p.first == "<pad>" || p.first == "<unk>" || p.first == "<bos>" || p.first == "<eos>";
  });
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (ranked.size() > cap) ranked.resize(cap);
  std::vector<std::string> content;
  content.reserve(ranked.size());
  for (auto& [tok, _] : ranked) content.push_back(tok);
  return {Vocab(content), std::move(stats)};
}

// ---------------------------------------------------------------- POS

std::string_view to_string(PosTag tag) {
  switch (tag) {
    case PosTag::kNoun: return "noun";
    case PosTag::kVerb: return "verb";
    case PosTag::kAdj: return "adj";
    case PosTag::kOther: return "other";
  }
  return "other";
}

PosTag parse_pos_tag(std::string_view s) {
  if (s == "noun" || s == "n" || s == "NN") return PosTag::kNoun;
  if (s == "verb" || s == "v" || s == "VB") return PosTag::kVerb;
  if (s == "adj" || s == "a" || s == "JJ") return PosTag::kAdj;
  return PosTag::kOther;
}

bool is_content_tag(PosTag tag) { return tag != PosTag::kOther; }

PosLexicon PosLexicon::load(std::istream& in) {
  PosLexicon lex;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError("POS lexicon line needs token<TAB>tag", lineno);
    lex.set(line.substr(0, tab), parse_pos_tag(trim(line.substr(tab + 1))));
  }
  return lex;
}

PosLexicon PosLexicon::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open POS lexicon " + path.string());
  return load(in);
}

PosTag PosLexicon::tag(std::string_view token) const {
  auto it = tags_.find(std::string(token));
  return it == tags_.end() ? PosTag::kOther : it->second;
}

StopwordList StopwordList::load(std::istream& in) {
  StopwordList list;
  std::string line;
  while (std::getline(in, line)) {
    auto w = trim(line);
    if (!w.empty() && w[0] != '#') list.add(std::move(w));
  }
  return list;
}

StopwordList StopwordList::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open stopword list " + path.string());
  return load(in);
}

// ---------------------------------------------------------------- keywords

KeywordVocab::KeywordVocab(const Vocab& vocab, std::span<const std::string> keywords,
                           const TfIdfStats& stats) {
  for (const auto& w : keywords) {
    if (!vocab.contains(w)) throw ConfigError("keyword '" + w + "' is not in the word vocabulary");
    if (index_.contains(w)) throw ConfigError("duplicate keyword '" + w + "'");
    index_.emplace(w, static_cast<KeywordId>(words_.size()));
    words_.push_back(w);
    token_ids_.push_back(vocab.encode(w));
    doc_freq_.push_back(stats.df(w));
  }
}

KeywordVocab KeywordVocab::build(const Vocab& vocab, const TfIdfStats& stats, const PosOracle& pos,
                                 const StopwordList& stopwords, std::size_t min_freq) {
  std::vector<std::string> chosen;
  for (std::size_t i = Vocab::kNumSpecials; i < vocab.size(); ++i) {
    const auto& w = vocab.tokens()[i];
    if (stopwords.contains(w) || !is_content_tag(pos.tag(w))) continue;
    auto it = stats.term_freq.find(w);
    const std::size_t freq = it == stats.term_freq.end() ? 0 : it->second;
    if (freq >= min_freq) chosen.push_back(w);
  }
  return KeywordVocab(vocab, chosen, stats);
}

bool KeywordVocab::contains(std::string_view token) const { return index_.contains(std::string(token)); }

const KeywordId* KeywordVocab::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? nullptr : &it->second;
}

KeywordId KeywordVocab::id(std::string_view token) const {
  if (const auto* k = find(token)) return *k;
  throw BoundsError("'" + std::string(token) + "' is not a keyword");
}

const std::string& KeywordVocab::word(KeywordId id) const {
  if (id >= words_.size()) throw BoundsError("keyword id " + std::to_string(id) + " out of range");
  return words_[id];
}

std::string KeywordVocab::fingerprint() const {
  std::ostringstream os;
  for (const auto& w : words_) os << w << '\n';
  return sha256_hex(os.str());
}

void KeywordVocab::save(std::ostream& out) const {
  for (std::size_t i = 0; i < words_.size(); ++i) out << words_[i] << '\t' << doc_freq_[i] << '\n';
}

KeywordVocab KeywordVocab::load(std::istream& in, const Vocab& vocab) {
  std::vector<std::string> words;
  TfIdfStats stats;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError("keyword line needs keyword<TAB>doc_freq", lineno);
    auto w = line.substr(0, tab);
    try {
      stats.doc_freq[w] = std::stoull(line.substr(tab + 1));
    } catch (const std::exception&) {
      throw ParseError("bad document frequency", lineno);
    }
    words.push_back(std::move(w));
  }
  return KeywordVocab(vocab, words, stats);
}

std::vector<KeywordId> KeywordExtractor::extract(std::span<const std::string> tokens) const {
  struct Candidate {
    KeywordId id;
    std::size_t first;
    double score;
  };
  std::map<KeywordId, std::size_t> tf;
  std::vector<Candidate> cands;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& tok = tokens[i];
    const KeywordId* kid = keywords.find(tok);
    if (!kid || stopwords.contains(tok) || !is_content_tag(pos.tag(tok))) continue;
    if (tf[*kid]++ == 0) cands.push_back({*kid, i, 0.0});
  }
  for (auto& c : cands) c.score = static_cast<double>(tf[c.id]) * stats.idf(keywords.word(c.id));
  std::stable_sort(cands.begin(), cands.end(),
                   [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
  if (cands.size() > cap) cands.resize(cap);
  std::vector<KeywordId> out;
  out.reserve(cands.size());
  for (const auto& c : cands) out.push_back(c.id);
  return out;
}

}  // namespace ckc
