#include "settings.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>

#include "ckc/errors.hpp"

namespace ckc::cli {

const std::vector<SettingSpec>& all_settings() {
  static const std::vector<SettingSpec> specs = {
      {"data.corpus", "data/synthetic", "directory with raw conversations, triplets, POS lexicon and stopwords"},
      {"data.artifacts", "artifacts", "directory for prepared data, checkpoints and reports"},
      {"data.keyword_min_freq", "", "keyword frequency threshold (default: corpus text_config.json, else 10)"},
      {"data.vocab_cap", "20000", "word vocabulary size"},
      {"data.min_weight", "1", "minimum triplet weight kept in the graph"},
      {"data.max_match_words", "4", "longest concept label matched in text, in words"},
      {"data.seed", "1", "negative sampling seed for retrieval examples"},
      {"data.split", "test", "split used by eval and self-play openers"},
      {"data.synth_seed", "2024", "seed of the synthetic corpus generator"},
      {"model.predictor_dim", "200", "predictor embedding, GRU and node state width"},
      {"model.matcher_dim", "200", "matcher embedding, GRU and node state width"},
      {"model.top_relations", "12", "relations with their own GGNN weights"},
      {"model.use_concepts", "true", "graph concept rows in predictor and matcher"},
      {"model.use_keywords", "true", "keyword matching term in the matcher"},
      {"model.lambda_k", "0.01", "weight of the keyword matching score"},
      {"model.seed", "13", "parameter initialisation seed"},
      {"model.predictor", "", "predictor checkpoint (default: <artifacts>/predictor.ckpt)"},
      {"model.matcher", "", "matcher checkpoint (default: <artifacts>/matcher.ckpt)"},
      {"model.embeddings", "", "optional pretrained word vectors for the predictor"},
      {"train.epochs", "30", "maximum epochs"},
      {"train.batch_size", "32", "examples per Adam step"},
      {"train.lr", "0.001", "Adam learning rate"},
      {"train.decay", "0.9", "learning rate multiplier per epoch"},
      {"train.patience", "5", "epochs without validation gain before stopping"},
      {"train.seed", "13", "shuffling seed"},
      {"sim.n", "1000", "number of self-play dialogues"},
      {"sim.max_turns", "8", "agent turns per dialogue"},
      {"sim.seed", "7", "start/target sampling seed"},
      {"sim.threads", "0", "worker threads (0 = all cores)"},
      {"sim.user", "base", "simulated user: base or echo"},
      {"sim.strategy", "graph", "keyword closeness: graph or embedding"},
      {"sim.pool_size", "100", "top-scored responses considered by the keyword tiers"},
      {"sim.keyword_tiers", "true", "prefer responses with the chosen or a closer keyword"},
      {"serve.host", "127.0.0.1", "listen address"},
      {"serve.port", "8080", "listen port"},
      {"serve.log", "", "session log (default: <artifacts>/sessions.jsonl)"},
  };
  return specs;
}

std::vector<SettingSpec> settings_in(std::span<const std::string> namespaces) {
  std::vector<SettingSpec> out;
  for (const auto& s : all_settings()) {
    const auto ns = s.key.substr(0, s.key.find('.'));
    if (std::find(namespaces.begin(), namespaces.end(), ns) != namespaces.end()) out.push_back(s);
  }
  return out;
}

std::string env_name(const std::string& key) {
  std::string out = "CKC_";
  for (char c : key) out += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

EnvLookup process_env() {
  return [](const std::string& name) -> std::optional<std::string> {
    if (const char* v = std::getenv(name.c_str())) return std::string(v);
    return std::nullopt;
  };
}

namespace {

void flatten_into(const nlohmann::json& j, const std::string& prefix, std::map<std::string, std::string>& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it->is_object())
      flatten_into(*it, key, out);
    else if (it->is_string())
      out[key] = it->get<std::string>();
    else if (it->is_boolean())
      out[key] = it->get<bool>() ? "true" : "false";
    else if (it->is_number_integer() || it->is_number_unsigned())
      out[key] = it->dump();
    else if (it->is_number_float())
      out[key] = it->dump();
    else
      throw ConfigError("config key " + key + " must be a string, number or boolean");
  }
}

}  // namespace

std::map<std::string, std::string> flatten_config(const nlohmann::json& config) {
  std::map<std::string, std::string> out;
  if (config.is_null()) return out;
  if (!config.is_object()) throw ConfigError("config file must hold a JSON object");
  flatten_into(config, "", out);
  return out;
}

nlohmann::json read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
}

Settings Settings::resolve(std::span<const SettingSpec> specs, const std::map<std::string, std::string>& flags,
                           const nlohmann::json& config, const EnvLookup& env) {
  const auto file = flatten_config(config);
  for (const auto& [key, value] : file) {
    const bool known = std::any_of(all_settings().begin(), all_settings().end(),
                                   [&](const SettingSpec& s) { return s.key == key; });
    if (!known) throw ConfigError("unknown config key " + key);
  }
  Settings s;
  for (const auto& spec : specs) {
    Value v{spec.default_value, "default"};
    if (auto it = file.find(spec.key); it != file.end()) v = {it->second, "config"};
    if (env)
      if (auto e = env(env_name(spec.key))) v = {*e, "env"};
    if (auto it = flags.find(spec.key); it != flags.end()) v = {it->second, "flag"};
    s.values_[spec.key] = std::move(v);
  }
  return s;
}

const Settings::Value& Settings::at(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ContractViolation("setting " + key + " is not available here");
  return it->second;
}

const std::string& Settings::str(const std::string& key) const { return at(key).value; }
const std::string& Settings::source(const std::string& key) const { return at(key).source; }

double Settings::num(const std::string& key) const {
  const auto& v = str(key);
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + " expects a number, got '" + v + "'");
  return out;
}

std::size_t Settings::count(const std::string& key) const { return static_cast<std::size_t>(u64(key)); }

std::uint64_t Settings::u64(const std::string& key) const {
  const auto& v = str(key);
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError(key + " expects a non-negative integer, got '" + v + "'");
  return out;
}

bool Settings::flag(const std::string& key) const {
  std::string v = str(key);
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + " expects true or false, got '" + str(key) + "'");
}

nlohmann::json Settings::to_json() const {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [k, v] : values_) out[k] = {{"value", v.value}, {"source", v.source}};
  return out;
}

}  // namespace ckc::cli
