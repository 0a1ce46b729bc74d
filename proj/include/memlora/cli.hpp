#pragma once

#include "memlora/bo.hpp"
#include "memlora/corpus.hpp"
#include "memlora/model.hpp"
#include "memlora/search_space.hpp"
#include "memlora/train_config.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace memlora {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Fully specifies a reproducible run; serialized alongside outputs.
struct RunManifest {
  uint64_t seed = 0;
  std::string out_dir = "out";
  ModelConfig model;  // vocab_size derived from the corpus
  std::vector<int> rank_menu = {8, 16, 32, 64, 96};
  int n_max = 32;
  TrainConfig pretrain_cfg;  // steps default 1500
  TrainConfig inject_cfg;    // steps default 300
  TrainConfig instruct_cfg;  // steps default 200
  BoConfig bo;

  // corpus source: synthetic persona generator or a JSONL ingestion path
  std::string corpus_type = "synthetic";
  int n_personas = 23;
  int n_train_personas = 20;  // personas [0, n_train) pretrain the base
  PersonaSpec persona_defaults;
  std::string ingest_path;

  // ablation settings
  std::vector<uint64_t> ablate_seeds = {1, 2, 3, 4, 5};
  int ablate_default_rank = 16;
  int ablate_default_count = 2;

  SearchSpaceDef space() const;
};

RunManifest load_manifest(const std::string& path);  // UsageError with field path
void save_manifest(const RunManifest& m, const std::string& path);

// Corpus assembly shared by the commands.
Tokenizer build_vocabulary(const RunManifest& m);
std::vector<int> pretrain_stream(const RunManifest& m, const Tokenizer& tok);
UserCorpus eval_user(const RunManifest& m, int user_index);
int n_eval_users(const RunManifest& m);

// Subcommand bodies; each throws UsageError for bad inputs and
// std::runtime_error for runtime failures.
void cmd_pretrain(const RunManifest& m);
RunState cmd_search(const RunManifest& m, int user_index, bool emit_gnuplot);
void cmd_tune_eval(const RunManifest& m, int user_index, const std::string& config_override);
void cmd_ablate(const RunManifest& m, int user_index);

std::string checkpoint_path(const RunManifest& m);
std::string vocab_path(const RunManifest& m);
std::string observations_path(const RunManifest& m, int user_index);
std::string summary_path(const RunManifest& m, int user_index);
std::string report_path(const RunManifest& m, int user_index);

}  // namespace memlora
