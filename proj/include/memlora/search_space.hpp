#pragma once

#include "memlora/lora.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace memlora {

// The configuration factors: which layers carry an adapter, how many, and at
// what rank. The optimizer works on a continuous cube of dimension 2L
// (activation coordinate + rank coordinate per layer); decode() maps cube
// points onto concrete adapter configurations.
struct SearchSpaceDef {
  int n_layers = 8;
  std::vector<int> rank_menu = {8, 16, 32, 64, 96};
  int n_max = 32;

  // Ablation restrictions: a frozen factor is ignored by decode and replaced
  // by its default.
  bool freeze_layers = false;
  std::vector<int> default_layer_order;  // required when freeze_layers
  bool freeze_count = false;
  int default_count = 0;  // required when freeze_count
  bool freeze_rank = false;
  int default_rank = 0;  // required when freeze_rank

  int dim() const { return 2 * n_layers; }
  void validate() const;
};

struct SearchPoint {
  std::vector<double> x;  // in [0,1]^D
  std::vector<AdapterSpec> decoded;
  int n() const { return static_cast<int>(decoded.size()); }
};

// Layer i is active iff x[2i] >= 0.5; rank comes from binning x[2i+1] over the
// menu; if more than n_max layers activate, the largest-activation layers win
// (ties to the lower index). Frozen factors substitute their defaults.
std::vector<AdapterSpec> decode(const std::vector<double>& x, const SearchSpaceDef& def);

SearchPoint make_point(std::vector<double> x, const SearchSpaceDef& def);

// Uniform cube points, deterministic under seed, pairwise distinct.
std::vector<SearchPoint> sample_initial(const SearchSpaceDef& def, int count, uint64_t seed);

enum class Factor { kLayers, kCount, kRank };

struct RestrictionDefaults {
  std::optional<std::vector<int>> layer_order;  // for frozen kLayers
  std::optional<int> count;                     // for frozen kCount
  std::optional<int> rank;                      // for frozen kRank
};

// Returns a copy of `def` with the given factors frozen to their defaults.
// Throws when a default for a frozen factor is missing.
SearchSpaceDef restrict(const SearchSpaceDef& def, const std::vector<Factor>& frozen,
                        const RestrictionDefaults& defaults);

// Canonical text form "l{layer}:r{rank}" joined by commas; "-" when empty.
std::string config_to_string(const std::vector<AdapterSpec>& specs);
std::vector<AdapterSpec> config_from_string(const std::string& text);

}  // namespace memlora
