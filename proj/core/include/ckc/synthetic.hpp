#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ckc/graph.hpp"

namespace ckc {

struct SyntheticConfig {
  std::uint64_t seed = 2024;
  std::size_t train = 50;
  std::size_t valid = 30;
  std::size_t test = 80;
  std::size_t min_turns = 5;
  std::size_t max_turns = 8;
  double echo = 0.0;  // chance a reply repeats the previous turn's concept
  bool bridge = true;  // prefer hints adjacent to both the current and next keyword
};

// Raw inputs in the same shape `prepare` reads from disk.
struct SyntheticCorpus {
  std::vector<CkgTriplet> triplets;
  std::vector<std::vector<std::string>> train, valid, test;
  std::vector<std::pair<std::string, std::string>> pos;  // token, tag
  std::vector<std::string> stopwords;
  std::size_t keyword_min_freq = 2;
};

// 12 keyword nodes and 18 two-word concept nodes. Each utterance names the
// current keyword and a concept adjacent to the keyword the next turn moves
// to. Five concepts never serve as that hint in train; valid and test use
// them whenever they can.
SyntheticCorpus make_synthetic_corpus(const SyntheticConfig& config = {});

// Path graph w0 - w1 - ... - w{length}, one single-keyword utterance per node
// plus a few two-keyword ones, all in `train`.
SyntheticCorpus make_chain_corpus(std::size_t length, std::uint64_t seed = 1);

// conversations_{train,valid,test}.jsonl, triplets.tsv, pos_lexicon.tsv,
// stopwords.txt and text_config.json.
void write_synthetic(const SyntheticCorpus& corpus, const std::filesystem::path& dir);

}  // namespace ckc
