#pragma once

#include "memlora/acquisition.hpp"
#include "memlora/search_space.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace memlora {

struct Observation {
  SearchPoint point;
  double loss = 0.0;     // validation cross-entropy (minimized)
  double rouge_l = 0.0;  // validation ROUGE-L (maximized)
  double wall_seconds = 0.0;
  uint64_t train_seed = 0;
  bool failed = false;

  Objectives objectives() const { return {-loss, rouge_l}; }
};

struct BoConfig {
  int budget = 24;       // max evaluations, initial design included
  int init_count = 8;    // desk-scale default; the full-scale default is 100
  int pool_size = 1024;
  int mc_samples = 64;
  int window = 5;        // convergence: stop when hypervolume gained less
  double eps_hv = 1e-3;  // than eps_hv over the last `window` iterations
  int jobs = 1;          // parallelism for the (independent) initial design
};

struct RunState {
  std::vector<Observation> log;
  std::vector<double> hv_history;     // running-front hypervolume per iteration
  std::vector<std::string> notes;     // e.g. GP-fit fallbacks
  std::string last_gp_summary;        // fitted hyperparameters for run reports
  ParetoFront front;                  // over successful observations
  bool converged = false;
};

// Evaluates one configuration; must be a pure function of (point, seed).
using Evaluator = std::function<Observation(const SearchPoint&, uint64_t seed)>;

// Front over the successful entries of `log`; throws when none succeeded.
ParetoFront front_of(const std::vector<Observation>& log);

// Initial random design, then {fit GP -> propose -> evaluate -> append} until
// budget or hypervolume stall. A GP fit failure falls back to one uniform
// random proposal (noted). Entirely reproducible from (inputs, master_seed);
// `resume` entries are trusted and not re-evaluated.
RunState run_search(const SearchSpaceDef& def, const Evaluator& evaluate, const BoConfig& cfg,
                    uint64_t master_seed, std::vector<Observation> resume = {},
                    std::ostream* csv = nullptr);

// Front member with maximal rouge_l, ties to lower loss, then earliest
// iteration. Throws when every observation failed.
const Observation& best_configuration(const RunState& state);

// Observation log as CSV: iteration,config,x,l,rl,status. Wall-clock seconds
// live in a separate timing sidecar so the log is byte-stable across reruns.
void write_csv_header(std::ostream& os);
void write_csv_row(std::ostream& os, size_t iteration, const Observation& obs);
std::vector<Observation> read_csv(const std::string& path, const SearchSpaceDef& def);

}  // namespace memlora
