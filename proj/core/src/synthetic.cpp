#include "ckc/synthetic.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

#include "ckc/errors.hpp"

namespace ckc {
namespace {

using Rng64 = std::mt19937_64;

const std::vector<std::string> kKeywords = {"music", "guitar", "concert", "travel", "beach", "ocean",
                                            "fish",  "cooking", "pizza",  "garden", "flower", "dog"};

// The last five are held out as hints in train; their words appear there
// only in closing utterances.
const std::vector<std::string> kConcepts = {
    "blue_paper", "blue_star",  "blue_stone", "blue_light",  "paper_blue", "paper_star", "paper_stone",
    "star_blue",  "star_paper", "star_stone", "stone_blue",  "stone_star", "light_paper", "red_moon",
    "gold_river", "iron_cloud", "silver_wind", "green_hill"};
constexpr std::size_t kHeldOut = 5;

const std::vector<std::string> kRelations = {"RelatedTo", "AtLocation", "UsedFor", "HasA", "PartOf", "CapableOf"};

const std::vector<std::string> kTemplates = {"i really like {k} and {c}", "do you know {k} goes well with {c}",
                                             "my {k} has a {c}", "we talked about {k} and the {c}",
                                             "what about {k} with some {c}", "i think {k} needs a {c}"};

const std::vector<std::string> kFollowups = {"{p} reminds me of {k} and {c}", "speaking of {p} my {k} has a {c}",
                                             "{p} goes well with {k} and some {c}", "after {p} we talked about {k} and the {c}"};

const std::vector<std::string> kFillers = {"i",  "really", "like", "and", "do",   "you",   "know",
                                           "goes", "well", "with", "my",  "has",  "a",     "we",
                                           "talked", "about", "the", "what", "some", "think", "needs",
                                           "reminds", "me", "of", "speaking", "after"};

std::string spaced(const std::string& label) {
  std::string s = label;
  std::replace(s.begin(), s.end(), '_', ' ');
  return s;
}

std::string render(const std::string& tmpl, const std::string& k, const std::string& c, const std::string& p = {}) {
  std::string out = tmpl;
  if (auto at = out.find("{p}"); at != std::string::npos) out.replace(at, 3, spaced(p));
  out.replace(out.find("{k}"), 3, k);
  out.replace(out.find("{c}"), 3, spaced(c));
  return out;
}

double draw_weight(Rng64& rng) {
  return 1.0 + 0.5 * static_cast<double>(std::uniform_int_distribution<int>(0, 18)(rng));
}

// Close weights keep the per-node edge softmax from collapsing onto one neighbour.
double concept_weight(Rng64& rng) {
  return 1.0 + 0.25 * static_cast<double>(std::uniform_int_distribution<int>(0, 4)(rng));
}

template <typename T>
const T& pick(const std::vector<T>& v, Rng64& rng) {
  return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

struct World {
  std::vector<std::set<std::size_t>> kk;  // keyword adjacency
  std::vector<std::vector<std::size_t>> ck;  // concept -> keywords
  std::vector<std::vector<std::size_t>> kc;  // keyword -> concepts
  std::set<std::size_t> held_out;  // concepts never used as a hint in train
};

World build_world(Rng64& rng, std::vector<CkgTriplet>& triplets) {
  const std::size_t nk = kKeywords.size();
  World w;
  w.kk.resize(nk);
  auto link = [&](std::size_t a, std::size_t b) {
    if (a == b || w.kk[a].contains(b)) return;
    w.kk[a].insert(b);
    w.kk[b].insert(a);
    triplets.push_back({kKeywords[a], pick(kRelations, rng), kKeywords[b], draw_weight(rng)});
  };
  std::vector<std::size_t> order(nk);
  for (std::size_t i = 0; i < nk; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t i = 0; i < nk; ++i) link(order[i], order[(i + 1) % nk]);
  for (std::size_t i = 0; i < nk; ++i) link(order[i], order[(i + nk / 2) % nk]);

  w.ck.resize(kConcepts.size());
  w.kc.resize(nk);
  for (std::size_t c = 0; c < kConcepts.size(); ++c) {
    std::vector<std::size_t> ks(order.begin(), order.end());
    std::shuffle(ks.begin(), ks.end(), rng);
    ks.resize(3);
    std::sort(ks.begin(), ks.end());
    for (auto k : ks) {
      w.ck[c].push_back(k);
      w.kc[k].push_back(c);
      triplets.push_back({kConcepts[c], "RelatedTo", kKeywords[k], concept_weight(rng)});
    }
  }
  for (std::size_t c = kConcepts.size() - kHeldOut; c < kConcepts.size(); ++c) w.held_out.insert(c);
  for (std::size_t k = 0; k < nk; ++k)
    if (w.kc[k].empty()) {
      auto c = std::uniform_int_distribution<std::size_t>(0, kConcepts.size() - 1)(rng);
      w.ck[c].push_back(k);
      w.kc[k].push_back(c);
      triplets.push_back({kConcepts[c], "RelatedTo", kKeywords[k], concept_weight(rng)});
    }
  return w;
}

// A concept adjacent to `next`, preferring ones adjacent to no other
// candidate in `rivals`; nullopt when every hint is forbidden.
std::optional<std::size_t> choose_hint(const World& w, std::size_t cur, std::size_t next,
                                       const std::set<std::size_t>& rivals, bool allow_held_out,
                                       bool prefer_held_out, bool bridge, Rng64& rng) {
  std::vector<std::size_t> clean, any, bridging;
  for (auto c : w.kc[next]) {
    const bool held = w.held_out.contains(c);
    if (held && !allow_held_out) continue;
    bool ambiguous = false;
    for (auto k : w.ck[c])
      if (k != next && rivals.contains(k)) ambiguous = true;
    any.push_back(c);
    if (!ambiguous) clean.push_back(c);
    if (!ambiguous && bridge && std::find(w.ck[c].begin(), w.ck[c].end(), cur) != w.ck[c].end())
      bridging.push_back(c);
  }
  auto& from = !bridging.empty() ? bridging : clean.empty() ? any : clean;
  if (from.empty()) return std::nullopt;
  if (prefer_held_out)
    for (auto c : from)
      if (w.held_out.contains(c)) return c;
  return pick(from, rng);
}

std::vector<std::string> make_conversation(const World& w, const SyntheticConfig& cfg, bool train, Rng64& rng) {
  const std::size_t nk = kKeywords.size();
  const auto len = std::uniform_int_distribution<std::size_t>(cfg.min_turns, cfg.max_turns)(rng);
  std::vector<std::size_t> path{std::uniform_int_distribution<std::size_t>(0, nk - 1)(rng)};
  std::vector<std::size_t> hints;
  std::set<std::size_t> visited{path[0]};
  while (path.size() < len) {
    const auto cur = path.back();
    std::set<std::size_t> mask(w.kk[cur].begin(), w.kk[cur].end());
    if (path.size() >= 2)
      for (auto k : w.kk[path[path.size() - 2]]) mask.insert(k);
    for (auto k : path) mask.erase(k);
    std::vector<std::size_t> options;
    for (auto k : w.kk[cur])
      if (!visited.contains(k)) options.push_back(k);
    if (options.empty()) break;
    std::shuffle(options.begin(), options.end(), rng);
    std::optional<std::size_t> hint;
    std::size_t next = options.front();
    for (auto k : options) {
      hint = choose_hint(w, cur, k, mask, !train, !train, cfg.bridge, rng);
      if (hint) {
        next = k;
        break;
      }
    }
    if (!hint) break;
    hints.push_back(*hint);
    path.push_back(next);
    visited.insert(next);
  }
  std::vector<std::size_t> closing;
  for (auto c : w.kc[path.back()])
    if (w.held_out.contains(c)) closing.push_back(c);
  hints.push_back(pick(closing.empty() ? w.kc[path.back()] : closing, rng));
  std::vector<std::string> out;
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (i == 0 || std::uniform_real_distribution<double>(0.0, 1.0)(rng) >= cfg.echo)
      out.push_back(render(pick(kTemplates, rng), kKeywords[path[i]], kConcepts[hints[i]]));
    else
      out.push_back(render(pick(kFollowups, rng), kKeywords[path[i]], kConcepts[hints[i]], kConcepts[hints[i - 1]]));
  }
  return out;
}

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  for (const auto& l : lines) out << l << '\n';
}

}  // namespace

SyntheticCorpus make_synthetic_corpus(const SyntheticConfig& config) {
  if (config.min_turns < 3 || config.max_turns < config.min_turns)
    throw ConfigError("synthetic conversations need min_turns >= 3 and max_turns >= min_turns");
  Rng64 rng(config.seed);
  SyntheticCorpus corpus;
  auto w = build_world(rng, corpus.triplets);
  // rejected by the graph filter: low weight, self-loop, out-of-vocabulary endpoint
  corpus.triplets.push_back({"music", "RelatedTo", "guitar", 0.5});
  corpus.triplets.push_back({"coffee", "RelatedTo", "coffee", 3.0});
  corpus.triplets.push_back({"ocean", "AtLocation", "submarine_base", 2.0});
  corpus.triplets.push_back({"blue_paper", "RelatedTo", "star_stone", 4.0});

  auto fill = [&](std::vector<std::vector<std::string>>& split, std::size_t n, bool train) {
    while (split.size() < n) {
      auto conv = make_conversation(w, config, train, rng);
      if (conv.size() >= config.min_turns) split.push_back(std::move(conv));
    }
  };
  fill(corpus.train, config.train, true);
  fill(corpus.valid, config.valid, false);
  fill(corpus.test, config.test, false);

  for (const auto& k : kKeywords) corpus.pos.emplace_back(k, "noun");
  for (const auto& f : kFillers) corpus.pos.emplace_back(f, "other");
  corpus.stopwords = kFillers;
  return corpus;
}

SyntheticCorpus make_chain_corpus(std::size_t length, std::uint64_t seed) {
  if (length == 0) throw ConfigError("chain length must be at least 1");
  Rng64 rng(seed);
  SyntheticCorpus corpus;
  corpus.keyword_min_freq = 1;
  std::vector<std::string> words;
  for (std::size_t i = 0; i <= length; ++i) words.push_back("w" + std::to_string(i));
  for (std::size_t i = 0; i < length; ++i) corpus.triplets.push_back({words[i], "RelatedTo", words[i + 1], draw_weight(rng)});
  for (std::size_t i = 0; i <= length; ++i) {
    std::vector<std::string> conv{"tell me about " + words[i], "i like " + words[i]};
    if (i < length) conv.push_back("from " + words[i] + " to " + words[i + 1]);
    corpus.train.push_back(std::move(conv));
  }
  for (const auto& w : words) corpus.pos.emplace_back(w, "noun");
  corpus.stopwords = {"tell", "me", "about", "i", "like", "from", "to"};
  return corpus;
}

void write_synthetic(const SyntheticCorpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto write_split = [&](const std::string& name, const std::vector<std::vector<std::string>>& convs) {
    std::vector<std::string> lines;
    for (const auto& c : convs) lines.push_back(nlohmann::json{{"utterances", c}}.dump());
    write_lines(dir / ("conversations_" + name + ".jsonl"), lines);
  };
  write_split("train", corpus.train);
  write_split("valid", corpus.valid);
  write_split("test", corpus.test);
  std::vector<std::string> lines{"# head\trelation\ttail\tweight"};
  for (const auto& t : corpus.triplets) {
    std::ostringstream w;
    w << t.weight;
    lines.push_back(t.head + '\t' + t.relation + '\t' + t.tail + '\t' + w.str());
  }
  write_lines(dir / "triplets.tsv", lines);
  lines.clear();
  for (const auto& [tok, tag] : corpus.pos) lines.push_back(tok + '\t' + tag);
  write_lines(dir / "pos_lexicon.tsv", lines);
  write_lines(dir / "stopwords.txt", corpus.stopwords);
  write_lines(dir / "text_config.json", {nlohmann::json{{"keyword_min_freq", corpus.keyword_min_freq}}.dump(2)});
}

}  // namespace ckc
