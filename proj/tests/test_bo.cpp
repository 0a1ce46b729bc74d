#include "memlora/bo.hpp"

#include "memlora/common.hpp"

#include <stdexcept>
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

using namespace memlora;

namespace {

SearchSpaceDef small_def() {
  SearchSpaceDef def;
  def.n_layers = 2;  // cube dimension 4
  def.rank_menu = {8, 16};
  return def;
}

BoConfig fast_cfg() {
  BoConfig cfg;
  cfg.budget = 10;
  cfg.init_count = 4;
  cfg.pool_size = 24;
  cfg.mc_samples = 16;
  cfg.window = 5;
  return cfg;
}

// Smooth analytic stand-in for a training run: loss dips at x=0.3, quality
// peaks at x=0.7, so the two objectives genuinely trade off.
Observation analytic_eval(const SearchPoint& p, uint64_t seed) {
  Observation o;
  o.point = p;
  double a = 0.0, b = 0.0;
  for (double v : p.x) {
    a += (v - 0.3) * (v - 0.3);
    b += (v - 0.7) * (v - 0.7);
  }
  o.loss = 1.0 + a;
  o.rouge_l = 1.0 / (1.0 + b);
  o.train_seed = seed;
  return o;
}

}  // namespace

TEST_CASE("run_search respects the budget and is deterministic") {
  SearchSpaceDef def = small_def();
  BoConfig cfg = fast_cfg();
  cfg.eps_hv = 0.0;  // never stall on this smooth landscape
  RunState a = run_search(def, analytic_eval, cfg, 42);
  RunState b = run_search(def, analytic_eval, cfg, 42);
  CHECK(a.log.size() <= static_cast<size_t>(cfg.budget));
  CHECK(a.log.size() >= static_cast<size_t>(cfg.init_count));
  REQUIRE(a.log.size() == b.log.size());
  for (size_t i = 0; i < a.log.size(); ++i) {
    CHECK(a.log[i].point.x == b.log[i].point.x);
    CHECK(a.log[i].loss == b.log[i].loss);
    CHECK(a.log[i].rouge_l == b.log[i].rouge_l);
  }
  CHECK(a.hv_history.size() == a.log.size());
  // hypervolume of the running front never decreases
  for (size_t i = 1; i < a.hv_history.size(); ++i) CHECK(a.hv_history[i] >= a.hv_history[i - 1]);
  CHECK_FALSE(a.last_gp_summary.empty());
}

TEST_CASE("initial design comes from the dedicated sampling stream") {
  SearchSpaceDef def = small_def();
  BoConfig cfg = fast_cfg();
  RunState state = run_search(def, analytic_eval, cfg, 7);
  auto expected = sample_initial(def, cfg.init_count, mix_seed(7, 0));
  for (int i = 0; i < cfg.init_count; ++i) CHECK(state.log[i].point.x == expected[i].x);
}

TEST_CASE("parallel initial design matches the serial one") {
  SearchSpaceDef def = small_def();
  BoConfig serial = fast_cfg();
  BoConfig parallel = fast_cfg();
  parallel.jobs = 4;
  RunState a = run_search(def, analytic_eval, serial, 13);
  RunState b = run_search(def, analytic_eval, parallel, 13);
  REQUIRE(a.log.size() == b.log.size());
  for (size_t i = 0; i < a.log.size(); ++i) {
    CHECK(a.log[i].point.x == b.log[i].point.x);
    CHECK(a.log[i].loss == b.log[i].loss);
  }
}

TEST_CASE("search stops once the hypervolume stalls") {
  SearchSpaceDef def = small_def();
  BoConfig cfg = fast_cfg();
  cfg.budget = 40;
  cfg.window = 3;
  auto flat = [](const SearchPoint& p, uint64_t) {
    Observation o;
    o.point = p;
    o.loss = 1.0;
    o.rouge_l = 0.5;
    return o;
  };
  RunState state = run_search(def, flat, cfg, 3);
  CHECK(state.converged);
  CHECK(state.log.size() < static_cast<size_t>(cfg.budget));
}

TEST_CASE("failed evaluations are imputed off the front") {
  SearchSpaceDef def = small_def();
  BoConfig cfg = fast_cfg();
  auto flaky = [](const SearchPoint& p, uint64_t seed) {
    Observation o = analytic_eval(p, seed);
    if (p.x[0] < 0.5) {
      o.failed = true;
      o.loss = 0.0;
      o.rouge_l = 0.0;
    }
    return o;
  };
  RunState state = run_search(def, flaky, cfg, 19);
  bool any_failed = false, any_ok = false;
  for (const auto& o : state.log) any_ok |= !o.failed;
  REQUIRE(any_ok);
  for (const auto& o : state.log)
    if (o.failed) {
      any_failed = true;
      CHECK(o.loss > 1.0);  // pessimistic imputation replaced the zeros
      const Objectives obj = o.objectives();
      for (const auto& f : state.front.points) CHECK(f != obj);
    }
  CHECK(any_failed);  // x[0] < 0.5 happens in any uniform design of size 4
}

TEST_CASE("all evaluations failing leaves no best configuration") {
  SearchSpaceDef def = small_def();
  BoConfig cfg = fast_cfg();
  cfg.budget = 5;
  auto broken = [](const SearchPoint& p, uint64_t) {
    Observation o;
    o.point = p;
    o.failed = true;
    return o;
  };
  RunState state = run_search(def, broken, cfg, 23);
  CHECK_THROWS_AS(best_configuration(state), std::runtime_error);
}

TEST_CASE("budget below the initial design is rejected") {
  BoConfig cfg = fast_cfg();
  cfg.budget = cfg.init_count - 1;
  CHECK_THROWS_AS(run_search(small_def(), analytic_eval, cfg, 1), std::invalid_argument);
}

TEST_CASE("best_configuration prefers quality, then loss, then earliest") {
  RunState state;
  auto add = [&](double loss, double rl) {
    Observation o;
    o.point.x = {0.0, 0.0, 0.0, 0.0};
    o.loss = loss;
    o.rouge_l = rl;
    state.log.push_back(o);
  };
  add(1.0, 0.8);
  add(0.5, 0.9);  // best: highest rouge_l
  add(0.6, 0.9);
  state.front = front_of(state.log);
  CHECK(&best_configuration(state) == &state.log[1]);
}

TEST_CASE("observation CSV round-trips at full precision") {
  SearchSpaceDef def = small_def();
  BoConfig cfg = fast_cfg();
  cfg.budget = 6;
  const std::string path = "/tmp/memlora_test_obs.csv";
  {
    std::ofstream csv(path);
    write_csv_header(csv);
    run_search(def, analytic_eval, cfg, 29, {}, &csv);
  }
  RunState reference = run_search(def, analytic_eval, cfg, 29);
  auto loaded = read_csv(path, def);
  REQUIRE(loaded.size() == reference.log.size());
  for (size_t i = 0; i < loaded.size(); ++i) {
    CHECK(loaded[i].point.x == reference.log[i].point.x);
    CHECK(loaded[i].loss == reference.log[i].loss);
    CHECK(loaded[i].rouge_l == reference.log[i].rouge_l);
    CHECK(loaded[i].failed == reference.log[i].failed);
    CHECK(loaded[i].point.decoded == reference.log[i].point.decoded);
  }
  std::remove(path.c_str());
}

TEST_CASE("resuming from a prefix reproduces the uninterrupted run") {
  SearchSpaceDef def = small_def();
  BoConfig cfg = fast_cfg();
  cfg.eps_hv = 0.0;
  RunState full = run_search(def, analytic_eval, cfg, 31);
  REQUIRE(full.log.size() > 6);
  std::vector<Observation> prefix(full.log.begin(), full.log.begin() + 6);
  RunState resumed = run_search(def, analytic_eval, cfg, 31, prefix);
  REQUIRE(resumed.log.size() == full.log.size());
  for (size_t i = 0; i < full.log.size(); ++i) {
    CHECK(resumed.log[i].point.x == full.log[i].point.x);
    CHECK(resumed.log[i].loss == full.log[i].loss);
  }
}
