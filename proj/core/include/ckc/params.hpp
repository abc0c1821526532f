#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ckc/tensor.hpp"

namespace ckc {

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
};

// Named parameters with same-shaped gradient slots. Addresses are stable for
// the lifetime of the store.
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;
  ParamStore(ParamStore&&) = default;
  ParamStore& operator=(ParamStore&&) = default;

  Parameter& add(std::string name, Matrix init);
  Parameter& get(std::string_view name);
  const Parameter& get(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::size_t size() const { return params_.size(); }
  std::size_t num_scalars() const;
  Parameter& at(std::size_t i) { return *params_[i]; }
  const Parameter& at(std::size_t i) const { return *params_[i]; }

  void zero_grad();
  // Values only; names and shapes must match.
  void copy_values_from(const ParamStore& other);

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

using Rng = std::mt19937_64;

Matrix uniform_matrix(std::size_t rows, std::size_t cols, double bound, Rng& rng);
Matrix normal_matrix(std::size_t rows, std::size_t cols, double stddev, Rng& rng);

struct CheckpointMeta {
  std::uint64_t seed = 0;
  std::uint32_t epoch = 0;
  std::string config_json;  // free-form model configuration
};

// Named-tensor archive: magic, version, metadata, then (name, shape, data).
void save_checkpoint(const std::filesystem::path& path, const ParamStore& params, const CheckpointMeta& meta);
// Reads metadata only.
CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path);
// Fills an already-shaped store. Every stored tensor must exist with the same
// shape and vice versa.
CheckpointMeta load_checkpoint(const std::filesystem::path& path, ParamStore& params);

}  // namespace ckc
