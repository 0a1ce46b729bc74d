#pragma once

#include "memlora/model_config.hpp"
#include "memlora/tensor.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace memlora {

struct AdapterSpec {
  int layer = 0;  // in [0, n_layers)
  int rank = 8;   // from the rank menu; rank << min(d_ff, d_model)
  bool operator==(const AdapterSpec&) const = default;
};

// One low-rank pair per adapted layer: the up-projection becomes
// h = W_l x + B A x with A (rank x d_model) and B (d_ff x rank).
struct Adapter {
  AdapterSpec spec;
  Tensor A;
  Tensor B;
};

class AdapterSet {
 public:
  AdapterSet() = default;
  explicit AdapterSet(std::vector<Adapter> adapters) : adapters_(std::move(adapters)) {}

  bool empty() const { return adapters_.empty(); }
  size_t size() const { return adapters_.size(); }
  const std::vector<Adapter>& adapters() const { return adapters_; }
  std::vector<Adapter>& adapters() { return adapters_; }
  const Adapter* find(int layer) const;
  std::vector<Tensor> parameters();  // A then B per adapter, layer order
  std::vector<AdapterSpec> specs() const;

 private:
  std::vector<Adapter> adapters_;  // sorted by layer
};

// A ~ N(0, 0.02^2), B = 0; deterministic under seed. Throws on a duplicate
// layer or a layer outside [0, n_layers).
AdapterSet instantiate(std::vector<AdapterSpec> specs, const ModelConfig& config, uint64_t seed);

// Sum over adapters of rank * (d_ff + d_model).
long trainable_param_count(const AdapterSet& set, const ModelConfig& config);

// Flat binary: header with dims + specs, then A/B blobs per adapter,
// little-endian float64. Round-trip is bit-exact.
void save_adapters(const AdapterSet& set, const ModelConfig& config, const std::string& path);
AdapterSet load_adapters(const std::string& path, const ModelConfig& config);

}  // namespace memlora
