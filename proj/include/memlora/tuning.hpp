#pragma once

#include "memlora/corpus.hpp"
#include "memlora/lora.hpp"
#include "memlora/model.hpp"
#include "memlora/tokenizer.hpp"
#include "memlora/train_config.hpp"

#include <string>
#include <vector>

namespace memlora {

// Prompt = instruction + formatted history + query; loss covers only the
// target (response + <eos>) span.
struct InstructionExample {
  std::vector<int> prompt;
  std::vector<int> target;
};

constexpr const char* kInstructionText = "reply to the query in your own words";
constexpr size_t kHistoryBudget = 120;

InstructionExample render_example(const UserCorpus& corpus, const Tokenizer& tok, const QaPair& pair,
                                  size_t history_budget = kHistoryBudget);

// Cross-entropy over the target span only, given the prompt context.
Tensor masked_response_loss(const BaseModel& model, const AdapterSet* adapters,
                            const InstructionExample& ex);

struct TuneResult {
  bool ok = true;
  double final_loss = 0.0;
};

// Next-token prediction over the user's profile + history stream; updates
// adapter parameters only (the base stays frozen, checksum-stable). On a
// non-finite loss the last good adapter values are kept and ok is false.
TuneResult inject_memory(const BaseModel& base, AdapterSet& adapters, const UserCorpus& corpus,
                         const Tokenizer& tok, const TrainConfig& cfg);

// Supervised tuning on masked instruction examples; adapter-only as well.
TuneResult instruction_tune(const BaseModel& base, AdapterSet& adapters,
                            const std::vector<InstructionExample>& examples, const TrainConfig& cfg);

// The user's profile + history as one token stream (injection training data).
std::vector<int> user_stream(const UserCorpus& corpus, const Tokenizer& tok);

struct EvalMetrics {
  double cross_entropy = 0.0;
  double rouge_1 = 0.0;
  double rouge_l = 0.0;
  double persona_f1 = 0.0;
  int n_pairs = 0;
};

// Masked cross-entropy plus greedy-decode ROUGE-1/ROUGE-L/Persona-F1 over the
// given split; empty or degenerate decodes score 0 rather than throwing.
EvalMetrics evaluate_split(const BaseModel& model, const AdapterSet* adapters, const UserCorpus& corpus,
                           const Tokenizer& tok, Split split, int max_new = 24);

}  // namespace memlora
