#include "memlora/lora.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <set>

namespace memlora {

namespace {

constexpr uint32_t kMagic = 0x4d4c4144;  // "MLAD"
constexpr uint32_t kVersion = 1;

void write_u32(std::ofstream& f, uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); }
void write_i32(std::ofstream& f, int32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); }
uint32_t read_u32(std::ifstream& f) {
  uint32_t v;
  f.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
int32_t read_i32(std::ifstream& f) {
  int32_t v;
  f.read(reinterpret_cast<char*>(&v), 4);
  return v;
}

void write_matrix(std::ofstream& f, const Matrix& m) {
  f.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(sizeof(double)) * m.size());
}

Matrix read_matrix(std::ifstream& f, Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  f.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(double)) * m.size());
  return m;
}

}  // namespace

const Adapter* AdapterSet::find(int layer) const {
  for (const auto& a : adapters_)
    if (a.spec.layer == layer) return &a;
  return nullptr;
}

std::vector<Tensor> AdapterSet::parameters() {
  std::vector<Tensor> out;
  for (auto& a : adapters_) {
    out.push_back(a.A);
    out.push_back(a.B);
  }
  return out;
}

std::vector<AdapterSpec> AdapterSet::specs() const {
  std::vector<AdapterSpec> out;
  for (const auto& a : adapters_) out.push_back(a.spec);
  return out;
}

AdapterSet instantiate(std::vector<AdapterSpec> specs, const ModelConfig& config, uint64_t seed) {
  std::sort(specs.begin(), specs.end(),
            [](const AdapterSpec& a, const AdapterSpec& b) { return a.layer < b.layer; });
  std::set<int> layers;
  for (const auto& s : specs) {
    if (s.layer < 0 || s.layer >= config.n_layers)
      throw std::invalid_argument("instantiate: layer " + std::to_string(s.layer) + " outside [0, " +
                                  std::to_string(config.n_layers) + ")");
    if (s.rank <= 0) throw std::invalid_argument("instantiate: rank must be positive");
    if (!layers.insert(s.layer).second)
      throw std::invalid_argument("instantiate: duplicate adapter on layer " + std::to_string(s.layer));
  }
  std::mt19937_64 rng(seed);
  std::vector<Adapter> adapters;
  for (const auto& s : specs) {
    Adapter a;
    a.spec = s;
    a.A = Tensor::randn(s.rank, config.d_model, 0.02, rng, /*requires_grad=*/true);
    a.B = Tensor::zeros(config.d_ff, s.rank, /*requires_grad=*/true);
    adapters.push_back(std::move(a));
  }
  return AdapterSet(std::move(adapters));
}

long trainable_param_count(const AdapterSet& set, const ModelConfig& config) {
  long total = 0;
  for (const auto& a : set.adapters())
    total += static_cast<long>(a.spec.rank) * (config.d_ff + config.d_model);
  return total;
}

void save_adapters(const AdapterSet& set, const ModelConfig& config, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_adapters: cannot open " + path);
  write_u32(f, kMagic);
  write_u32(f, kVersion);
  write_i32(f, config.d_model);
  write_i32(f, config.d_ff);
  write_u32(f, static_cast<uint32_t>(set.size()));
  for (const auto& a : set.adapters()) {
    write_i32(f, a.spec.layer);
    write_i32(f, a.spec.rank);
    write_matrix(f, a.A.value());
    write_matrix(f, a.B.value());
  }
}

AdapterSet load_adapters(const std::string& path, const ModelConfig& config) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_adapters: cannot open " + path);
  if (read_u32(f) != kMagic) throw std::runtime_error("load_adapters: bad magic in " + path);
  if (read_u32(f) != kVersion) throw std::runtime_error("load_adapters: unsupported version");
  const int d_model = read_i32(f);
  const int d_ff = read_i32(f);
  if (d_model != config.d_model || d_ff != config.d_ff)
    throw std::runtime_error("load_adapters: config mismatch (file " + std::to_string(d_model) + "/" +
                             std::to_string(d_ff) + ", model " + std::to_string(config.d_model) + "/" +
                             std::to_string(config.d_ff) + ")");
  const uint32_t n = read_u32(f);
  std::vector<Adapter> adapters;
  for (uint32_t i = 0; i < n; ++i) {
    Adapter a;
    a.spec.layer = read_i32(f);
    a.spec.rank = read_i32(f);
    a.A = Tensor(read_matrix(f, a.spec.rank, d_model), /*requires_grad=*/true);
    a.B = Tensor(read_matrix(f, d_ff, a.spec.rank), /*requires_grad=*/true);
    adapters.push_back(std::move(a));
  }
  if (!f) throw std::runtime_error("load_adapters: truncated file " + path);
  return AdapterSet(std::move(adapters));
}

}  // namespace memlora
