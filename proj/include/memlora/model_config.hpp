#pragma once

#include <stdexcept>
#include <string>

namespace memlora {

struct ModelConfig {
  int n_layers = 8;
  int d_model = 64;
  int d_ff = 256;
  int n_heads = 4;
  int vocab_size = 0;
  int max_seq_len = 256;

  void validate() const {
    if (n_layers <= 0 || d_model <= 0 || d_ff <= 0 || n_heads <= 0 || vocab_size <= 0 ||
        max_seq_len <= 0)
      throw std::invalid_argument("ModelConfig: all fields must be positive");
    if (d_model % n_heads != 0)
      throw std::invalid_argument("ModelConfig: d_model must be divisible by n_heads");
    if (d_ff <= d_model) throw std::invalid_argument("ModelConfig: d_ff must exceed d_model");
  }

  bool operator==(const ModelConfig&) const = default;
};

}  // namespace memlora
