#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace ckc::cli {

struct SettingSpec {
  std::string key;  // namespaced, e.g. "train.lr"
  std::string default_value;
  std::string help;
};

// Every setting the tool knows about, grouped by namespace.
const std::vector<SettingSpec>& all_settings();
std::vector<SettingSpec> settings_in(std::span<const std::string> namespaces);

// "train.batch_size" -> "CKC_TRAIN_BATCH_SIZE"
std::string env_name(const std::string& key);

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
EnvLookup process_env();

// Resolved values with flag > env > config file > default precedence.
class Settings {
 public:
  static Settings resolve(std::span<const SettingSpec> specs, const std::map<std::string, std::string>& flags,
                          const nlohmann::json& config, const EnvLookup& env);

  const std::string& str(const std::string& key) const;
  double num(const std::string& key) const;
  std::size_t count(const std::string& key) const;
  std::uint64_t u64(const std::string& key) const;
  bool flag(const std::string& key) const;
  const std::string& source(const std::string& key) const;
  bool has(const std::string& key) const { return values_.contains(key); }

  nlohmann::json to_json() const;

 private:
  struct Value {
    std::string value;
    std::string source;
  };
  std::map<std::string, Value> values_;
  const Value& at(const std::string& key) const;
};

// Nested objects are flattened to dotted keys; scalars become strings.
std::map<std::string, std::string> flatten_config(const nlohmann::json& config);
nlohmann::json read_config_file(const std::string& path);

}  // namespace ckc::cli
