#pragma once

#include "memlora/lora.hpp"
#include "memlora/model_config.hpp"
#include "memlora/tensor.hpp"
#include "memlora/train_config.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace memlora {

struct LayerParams {
  Tensor ln1_gain, ln1_bias;
  Tensor wq, wk, wv, wo;      // d_model x d_model, right-multiplied
  Tensor ln2_gain, ln2_bias;
  Tensor w_up;                // d_model x d_ff (the LoRA injection site)
  Tensor w_down;              // d_ff x d_model
};

// Pre-norm decoder-only transformer with learned positional embeddings.
class BaseModel {
 public:
  BaseModel() = default;
  BaseModel(const ModelConfig& config, uint64_t seed);

  const ModelConfig& config() const { return config_; }
  bool frozen() const { return frozen_; }
  void set_frozen(bool frozen);

  std::vector<Tensor> parameters();  // declared order, stable across runs
  uint64_t checksum() const;

  Tensor token_emb, pos_emb;
  std::vector<LayerParams> layers;
  Tensor lnf_gain, lnf_bias;
  Tensor w_head;  // d_model x vocab

  void save(const std::string& path) const;
  static BaseModel load(const std::string& path);

 private:
  ModelConfig config_;
  bool frozen_ = false;
};

// Causal logits (seq x vocab). At each adapted layer the up-projection
// computes x W_up + x A^T B^T; pass nullptr or an empty set for the bare model.
Tensor forward(const BaseModel& model, const AdapterSet* adapters, const std::vector<int>& tokens);

// Next-token cross-entropy over `tokens` (positions 0..n-2 predict 1..n-1).
Tensor next_token_loss(const BaseModel& model, const AdapterSet* adapters,
                       const std::vector<int>& tokens);

// Trains every base parameter on random windows of `stream`, then freezes the
// model. Throws on non-finite loss.
void pretrain(BaseModel& model, const std::vector<int>& stream, const TrainConfig& cfg);

// Mean next-token loss over contiguous windows of a held-out stream.
double stream_loss(const BaseModel& model, const AdapterSet* adapters, const std::vector<int>& stream,
                   int seq_len);

// Greedy decode at temperature 0 (deterministic); stops at <eos> or max_new.
std::vector<int> generate(const BaseModel& model, const AdapterSet* adapters,
                          const std::vector<int>& prompt, int max_new, double temperature,
                          uint64_t seed = 0);

}  // namespace memlora
