#pragma once

#include "memlora/tensor.hpp"

#include <vector>

namespace memlora {

struct AdamWConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
  double warmup_fraction = 0.10;
  long total_steps = 1;
};

struct AdamWState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
};

// Linear warmup over the first warmup_fraction of total_steps, then linear
// decay to zero. `step` is 1-based.
double lr_at(const AdamWConfig& cfg, long step);

// Rescales gradients in place so their global L2 norm is at most max_norm.
// Returns the pre-clip norm.
double clip_global_norm(std::vector<Tensor>& params, double max_norm);

// Decoupled weight-decay AdamW update over params' accumulated gradients.
// Throws std::runtime_error on a non-finite gradient; params are untouched.
void adamw_step(std::vector<Tensor>& params, AdamWState& state, const AdamWConfig& cfg, long step);

}  // namespace memlora
