#include "ckc/params.hpp"

#include <algorithm>
#include <fstream>

#include "ckc/errors.hpp"

namespace ckc {
namespace {

constexpr char kMagic[8] = {'C', 'K', 'C', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ParseError("truncated checkpoint", 0);
  return v;
}

void put_str(std::ostream& out, const std::string& s) {
  put<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string take_str(std::istream& in) {
  auto n = take<std::uint64_t>(in);
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw ParseError("truncated checkpoint", 0);
  return s;
}

CheckpointMeta read_header(std::istream& in, const std::filesystem::path& path) {
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(std::begin(magic), std::end(magic), std::begin(kMagic)))
    throw ParseError("not a checkpoint: " + path.string(), 0);
  CheckpointMeta meta;
  meta.seed = take<std::uint64_t>(in);
  meta.epoch = take<std::uint32_t>(in);
  meta.config_json = take_str(in);
  return meta;
}

}  // namespace

Parameter& ParamStore::add(std::string name, Matrix init) {
  if (index_.contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->grad = Matrix(init.rows(), init.cols());
  p->value = std::move(init);
  index_.emplace(std::move(name), params_.size());
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter& ParamStore::get(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw ConfigError("unknown parameter '" + std::string(name) + "'");
  return *params_[it->second];
}

const Parameter& ParamStore::get(std::string_view name) const {
  return const_cast<ParamStore*>(this)->get(name);
}

bool ParamStore::contains(std::string_view name) const { return index_.contains(std::string(name)); }

std::size_t ParamStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p->grad.fill(0.0);
}

void ParamStore::copy_values_from(const ParamStore& other) {
  if (other.size() != size()) throw ConfigError("parameter stores differ in size");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& src = other.get(params_[i]->name);
    if (!src.value.same_shape(params_[i]->value))
      throw DimensionError("shape mismatch copying '" + src.name + "'");
    params_[i]->value = src.value;
  }
}

Matrix uniform_matrix(std::size_t rows, std::size_t cols, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (auto& v : m.data()) v = dist(rng);
  return m;
}

Matrix normal_matrix(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (auto& v : m.data()) v = dist(rng);
  return m;
}

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params, const CheckpointMeta& meta) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put(out, meta.seed);
  put(out, meta.epoch);
  put_str(out, meta.config_json);
  put<std::uint64_t>(out, params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params.at(i);
    put_str(out, p.name);
    put<std::uint64_t>(out, p.value.rows());
    put<std::uint64_t>(out, p.value.cols());
    out.write(reinterpret_cast<const char*>(p.value.data().data()),
              static_cast<std::streamsize>(p.value.size() * sizeof(double)));
  }
}

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("missing checkpoint " + path.string());
  return read_header(in, path);
}

CheckpointMeta load_checkpoint(const std::filesystem::path& path, ParamStore& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("missing checkpoint " + path.string());
  auto meta = read_header(in, path);
  const auto count = take<std::uint64_t>(in);
  if (count != params.size())
    throw ConfigError("checkpoint has " + std::to_string(count) + " tensors, model expects " +
                      std::to_string(params.size()));
  for (std::uint64_t i = 0; i < count; ++i) {
    auto name = take_str(in);
    const auto rows = take<std::uint64_t>(in);
    const auto cols = take<std::uint64_t>(in);
    auto& p = params.get(name);
    if (p.value.rows() != rows || p.value.cols() != cols)
      throw DimensionError("checkpoint tensor '" + name + "' has shape " + std::to_string(rows) + "x" +
                           std::to_string(cols) + ", model expects " + p.value.shape_string());
    in.read(reinterpret_cast<char*>(p.value.data().data()),
            static_cast<std::streamsize>(p.value.size() * sizeof(double)));
    if (!in) throw ParseError("truncated checkpoint tensor '" + name + "'", 0);
  }
  return meta;
}

}  // namespace ckc
