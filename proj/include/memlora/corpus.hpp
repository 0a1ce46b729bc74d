#pragma once

#include "memlora/tokenizer.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace memlora {

enum class Split { kTrain, kValidation, kTest };

struct QaPair {
  std::string query;
  std::string response;
  Split split = Split::kTrain;
};

struct UserCorpus {
  std::string user_id;
  std::string profile;
  std::vector<std::string> history;
  std::vector<QaPair> qa_pairs;

  std::vector<const QaPair*> pairs_in(Split s) const;
  // Profile + all history as one lowercased token sequence (Persona-F1 basis).
  std::vector<std::string> content_tokens() const;
};

struct PersonaSpec {
  int persona_index = 0;
  int n_persona_tokens = 12;  // 8..16 distinctive tokens
  int n_history = 60;
  int n_qa = 40;
  int content_len_mean = 24;
  int response_len_mean = 12;
};

// Deterministic pseudo-word inventory for persona `index`; disjoint across
// indices by construction.
std::vector<std::string> persona_token_inventory(int index, int count);

// Shared function-word pool common to every persona.
const std::vector<std::string>& shared_word_pool();

// Deterministic under seed. Gold responses share persona tokens with the
// history so personalization is learnable and Persona-F1 is meaningful.
UserCorpus generate_user(const PersonaSpec& spec, uint64_t seed);

// Fraction of history entries containing at least one persona token.
double persona_coverage(const UserCorpus& corpus, const std::vector<std::string>& persona_tokens);

// Re-assigns 70/10/20 train/validation/test splits by ranking qa pairs on
// fnv1a(user_id, index); stable across runs and machines.
void assign_splits(UserCorpus& corpus);

// Line-delimited JSON records {user_id, profile?, history[], query, response},
// grouped by user_id. Throws with line numbers on malformed input.
std::vector<UserCorpus> ingest(const std::string& path);
void export_corpus(const std::vector<UserCorpus>& users, const std::string& path);

// Profile first, then history entries newest-first, truncated to `budget`
// tokens; truncation drops whole entries.
std::vector<int> format_history(const UserCorpus& corpus, const Tokenizer& tok, size_t budget);

}  // namespace memlora
