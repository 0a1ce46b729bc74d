#pragma once

#include <cstdint>
#include <stdexcept>

namespace memlora {

struct TrainConfig {
  long steps = 300;
  int batch_size = 8;
  int seq_len = 64;
  double lr = 5e-4;
  double weight_decay = 1e-4;
  double warmup_fraction = 0.10;
  double clip_norm = 1.0;
  uint64_t seed = 0;

  void validate() const {
    if (steps < 0 || batch_size <= 0 || seq_len <= 0 || lr <= 0 || weight_decay < 0 ||
        clip_norm <= 0)
      throw std::invalid_argument("TrainConfig: fields must be positive");
    if (warmup_fraction <= 0 || warmup_fraction >= 1)
      throw std::invalid_argument("TrainConfig: warmup_fraction must lie in (0,1)");
  }
};

}  // namespace memlora
