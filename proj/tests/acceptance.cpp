// Acceptance suite: one pass/fail line per criterion, non-zero exit on any
// failure. Everything here runs end-to-end against the public library API.

#include "memlora/acquisition.hpp"
#include "memlora/bo.hpp"
#include "memlora/cli.hpp"
#include "memlora/common.hpp"
#include "memlora/gp.hpp"
#include "memlora/metrics.hpp"
#include "memlora/model.hpp"
#include "memlora/tuning.hpp"

#include "test_support.hpp"

#include <stdexcept>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

using namespace memlora;
namespace fs = std::filesystem;

namespace {

struct Criterion {
  const char* id;
  const char* title;
  bool (*run)(std::string& detail);
};

double now() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

// ---------------------------------------------------------------------------
// A1: gradient correctness via central finite differences

bool check_a1(std::string& detail) {
  std::mt19937_64 rng(101);
  double worst = 0.0;
  auto track = [&](double err) { worst = std::max(worst, err); };

  {
    Tensor a = Tensor::randn(3, 4, 1.0, rng, true);
    Tensor b = Tensor::randn(4, 2, 1.0, rng, true);
    track(testing::finite_difference_error(
        {a, b}, [&] { return sum(hadamard(matmul(a, b), matmul(a, b))); }));
  }
  {
    Tensor a = Tensor::randn(3, 5, 1.0, rng, true);
    track(testing::finite_difference_error({a}, [&] { return sum(hadamard(gelu(a), gelu(a))); }));
  }
  {
    Tensor a = Tensor::randn(4, 6, 1.0, rng, true);
    Tensor g = Tensor::randn(1, 6, 0.3, rng, true);
    Tensor b = Tensor::randn(1, 6, 0.3, rng, true);
    track(testing::finite_difference_error({a, g, b}, [&] {
      Tensor y = layernorm(a, g, b);
      return sum(hadamard(y, y));
    }));
  }
  {
    Tensor s = Tensor::randn(5, 5, 1.0, rng, true);
    Tensor v = Tensor::randn(5, 3, 1.0, rng);
    track(testing::finite_difference_error({s}, [&] {
      Tensor y = matmul(causal_softmax(s), v);
      return sum(hadamard(y, y));
    }));
  }
  {
    Tensor logits = Tensor::randn(4, 9, 1.0, rng, true);
    std::vector<int> t = {1, 0, 8, 4};
    track(testing::finite_difference_error({logits},
                                           [&] { return softmax_cross_entropy(logits, t); }));
  }
  {
    Tensor table = Tensor::randn(7, 3, 1.0, rng, true);
    std::vector<int> ids = {2, 2, 0, 6};
    track(testing::finite_difference_error({table}, [&] {
      Tensor y = gather_rows(table, ids);
      return sum(hadamard(y, y));
    }));
  }
  {
    Tensor a = Tensor::randn(4, 6, 1.0, rng, true);
    Tensor r = Tensor::randn(1, 6, 1.0, rng, true);
    track(testing::finite_difference_error({a, r}, [&] {
      Tensor y = add_row_broadcast(a, r);
      Tensor z = concat_cols({slice_cols(y, 0, 3), slice_cols(matmul(y, transpose(y)), 0, 3)});
      return sum(hadamard(z, z));
    }));
  }

  // the full toy-transformer loss, adapters included
  ModelConfig cfg;
  cfg.n_layers = 2;
  cfg.d_model = 16;
  cfg.d_ff = 32;
  cfg.n_heads = 2;
  cfg.vocab_size = 11;
  cfg.max_seq_len = 16;
  BaseModel model(cfg, 5);
  AdapterSet adapters = instantiate({{0, 4}, {1, 4}}, cfg, 6);
  // give B signal so its gradient path is exercised
  for (auto& a : adapters.adapters())
    const_cast<Matrix&>(a.B.value()).setRandom();
  std::vector<int> tokens = {1, 4, 2, 6, 3, 9};
  auto params = model.parameters();
  auto ad_params = adapters.parameters();
  params.insert(params.end(), ad_params.begin(), ad_params.end());
  track(testing::finite_difference_error(
      params, [&] { return next_token_loss(model, &adapters, tokens); }));

  std::ostringstream os;
  os << "worst relative error " << worst;
  detail = os.str();
  return worst <= 1e-4;
}

// ---------------------------------------------------------------------------
// A2: zero-B adapters leave logits bitwise identical

bool check_a2(std::string& detail) {
  ModelConfig cfg;
  cfg.n_layers = 4;
  cfg.d_model = 32;
  cfg.d_ff = 64;
  cfg.n_heads = 4;
  cfg.vocab_size = 40;
  cfg.max_seq_len = 32;
  BaseModel model(cfg, 21);
  std::vector<AdapterSpec> specs;
  for (int l = 0; l < cfg.n_layers; ++l) specs.push_back({l, 8});
  AdapterSet adapters = instantiate(specs, cfg, 22);

  std::mt19937_64 rng(23);
  std::uniform_int_distribution<int> tok(0, cfg.vocab_size - 1);
  std::uniform_int_distribution<int> len(4, 24);
  for (int t = 0; t < 20; ++t) {
    std::vector<int> tokens(static_cast<size_t>(len(rng)));
    for (auto& v : tokens) v = tok(rng);
    Matrix base = forward(model, nullptr, tokens).value();
    Matrix with = forward(model, &adapters, tokens).value();
    if ((base - with).cwiseAbs().maxCoeff() != 0.0) {
      detail = "logits diverged on input " + std::to_string(t);
      return false;
    }
  }
  detail = "20/20 inputs bitwise equal";
  return true;
}

// ---------------------------------------------------------------------------
// A3: Pareto / hypervolume oracles

bool check_a3(std::string& detail) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  // pairwise-oracle comparison on 200-point sets
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Objectives> pts;
    for (int i = 0; i < 200; ++i) pts.push_back({u(rng), u(rng)});
    ParetoFront front = pareto_filter(pts);
    std::vector<Objectives> oracle;
    for (const auto& p : pts) {
      bool dominated = false;
      for (const auto& q : pts) dominated |= dominates(q, p);
      if (!dominated) oracle.push_back(p);
    }
    std::sort(oracle.begin(), oracle.end());
    oracle.erase(std::unique(oracle.begin(), oracle.end()), oracle.end());
    if (front.points != oracle) {
      detail = "pareto_filter mismatch on trial " + std::to_string(trial);
      return false;
    }
  }

  // exact value on the hand case
  if (std::abs(hypervolume_2d({{1.0, 2.0}, {2.0, 1.0}}, {0.0, 0.0}) - 3.0) > 1e-12) {
    detail = "hand case {(1,2),(2,1)} != 3.0";
    return false;
  }

  // grid brute force at resolution 1e-3 on 50 random fronts
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Objectives> pts;
    for (int i = 0; i < 10; ++i) pts.push_back({0.05 + 0.95 * u(rng), 0.05 + 0.95 * u(rng)});
    ParetoFront front = pareto_filter(pts);
    const double exact = hypervolume_2d(front);
    // column sweep: for each x cell, the dominated height is the best y among
    // points reaching at least that x
    const double res = 1e-3;
    double hi0 = front.ref[0];
    for (const auto& p : front.points) hi0 = std::max(hi0, p[0]);
    double approx = 0.0;
    for (double x = front.ref[0] + res / 2; x < hi0; x += res) {
      double h = 0.0;
      for (const auto& p : front.points)
        if (p[0] >= x) h = std::max(h, p[1] - front.ref[1]);
      approx += res * h;
    }
    worst = std::max(worst, std::abs(exact - approx));
  }
  std::ostringstream os;
  os << "worst grid deviation " << worst;
  detail = os.str();
  return worst <= 1e-2;
}

// ---------------------------------------------------------------------------
// A4: BO vs random on an analytic configuration benchmark

Objectives bench_objectives(const std::vector<AdapterSpec>& specs, int n_layers) {
  double cap = 0.0;
  for (const auto& s : specs) {
    const double w = 0.5 + static_cast<double>(s.layer) / std::max(1, n_layers - 1);
    cap += w * s.rank / 96.0;
  }
  const double n = static_cast<double>(specs.size());
  const double loss = 0.6 + 1.8 * std::exp(-cap / 2.0) + 0.08 * n;
  const double quality = std::max(0.0, 1.0 - std::exp(-0.8 * cap) - 0.02 * n);
  return {-loss, quality};
}

bool check_a4(std::string& detail) {
  SearchSpaceDef def;
  def.n_layers = 4;  // the desk-scale depth; cube dimension 8
  BoConfig cfg;
  cfg.budget = 24;  // 8 initial + 16 guided
  cfg.init_count = 8;
  cfg.pool_size = 256;
  cfg.mc_samples = 32;
  cfg.eps_hv = 0.0;  // equal budget on both sides

  auto evaluate = [&](const SearchPoint& p, uint64_t) {
    Observation o;
    o.point = p;
    const Objectives obj = bench_objectives(p.decoded, def.n_layers);
    o.loss = -obj[0];
    o.rouge_l = obj[1];
    return o;
  };

  int wins = 0;
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    RunState bo = run_search(def, evaluate, cfg, seed);

    std::vector<Objectives> random_pts;
    for (const auto& p : sample_initial(def, cfg.budget, mix_seed(seed, 777)))
      random_pts.push_back(bench_objectives(p.decoded, def.n_layers));

    // shared reference so the two hypervolumes are comparable
    Objectives ref = random_pts[0];
    for (const auto& p : random_pts) {
      ref[0] = std::min(ref[0], p[0]);
      ref[1] = std::min(ref[1], p[1]);
    }
    for (const auto& o : bo.log) {
      ref[0] = std::min(ref[0], o.objectives()[0]);
      ref[1] = std::min(ref[1], o.objectives()[1]);
    }
    ref[0] -= kRefMargin;
    ref[1] -= kRefMargin;

    const double hv_bo = hypervolume_2d(front_of(bo.log).points, ref);
    const double hv_rand = hypervolume_2d(pareto_filter(random_pts).points, ref);
    if (hv_bo >= hv_rand) ++wins;
  }
  detail = "BO >= random in " + std::to_string(wins) + "/10 paired seeds";
  return wins >= 8;
}

// ---------------------------------------------------------------------------
// A5: end-to-end personalization on held-out users

RunManifest a5_manifest() {
  RunManifest m;
  m.seed = 2024;
  m.out_dir = "/tmp/memlora_accept_a5";
  m.model.n_layers = 4;
  m.model.d_model = 64;
  m.model.d_ff = 256;
  m.model.n_heads = 4;
  m.model.max_seq_len = 256;

  m.pretrain_cfg.steps = 500;
  m.pretrain_cfg.batch_size = 4;
  m.pretrain_cfg.seq_len = 64;
  m.pretrain_cfg.lr = 2e-3;

  // injection keeps a moderate lr (it drives the validation-CE criterion);
  // instruction tuning needs a hotter lr and a long schedule: greedy decodes
  // only beat the base once the tuned model memorizes response structure,
  // and the zero-B adapter start makes that slow
  m.inject_cfg.steps = 200;
  m.inject_cfg.batch_size = 4;
  m.inject_cfg.seq_len = 48;
  m.inject_cfg.lr = 1e-2;

  m.instruct_cfg.steps = 2000;
  m.instruct_cfg.batch_size = 4;
  m.instruct_cfg.lr = 2e-2;

  m.bo.budget = 16;
  m.bo.init_count = 8;
  m.bo.pool_size = 128;
  m.bo.mc_samples = 32;
  m.bo.jobs = 4;

  m.n_personas = 23;
  m.n_train_personas = 20;
  m.persona_defaults.n_history = 20;
  // 28 train pairs: enough for instruction tuning to generalize instead of
  // inflating validation CE by overfitting a handful of examples
  m.persona_defaults.n_qa = 40;
  return m;
}

bool check_a5(std::string& detail) {
  RunManifest m = a5_manifest();
  fs::remove_all(m.out_dir);
  cmd_pretrain(m);

  BaseModel model = BaseModel::load(checkpoint_path(m));
  Tokenizer tok = Tokenizer::load(vocab_path(m));

  std::ostringstream os;
  bool ok = true;
  for (int user = 0; user < 3; ++user) {
    cmd_search(m, user, false);
    cmd_tune_eval(m, user, "");

    UserCorpus corpus = eval_user(m, user);
    AdapterSet adapters =
        load_adapters(m.out_dir + "/user" + std::to_string(user) + "/adapters.bin", model.config());

    EvalMetrics base_val = evaluate_split(model, nullptr, corpus, tok, Split::kValidation);
    EvalMetrics tuned_val = evaluate_split(model, &adapters, corpus, tok, Split::kValidation);
    EvalMetrics base_test = evaluate_split(model, nullptr, corpus, tok, Split::kTest);
    EvalMetrics tuned_test = evaluate_split(model, &adapters, corpus, tok, Split::kTest);

    const bool ce_ok = tuned_val.cross_entropy <= 0.90 * base_val.cross_entropy;
    const bool rl_ok = tuned_test.rouge_l > base_test.rouge_l;
    const bool pf_ok = tuned_test.persona_f1 > base_test.persona_f1;
    ok = ok && ce_ok && rl_ok && pf_ok;
    os << "user" << user << " ce " << tuned_val.cross_entropy << "/" << base_val.cross_entropy
       << (ce_ok ? "" : " [CE FAIL]") << " rl " << tuned_test.rouge_l << ">" << base_test.rouge_l
       << (rl_ok ? "" : " [RL FAIL]") << " pf1 " << tuned_test.persona_f1 << ">"
       << base_test.persona_f1 << (pf_ok ? "" : " [PF1 FAIL]") << "; ";
  }
  detail = os.str();
  return ok;
}

// ---------------------------------------------------------------------------
// A6: ablation direction on a small live model

bool check_a6(std::string& detail) {
  // compact setup: personas 0..5 pretrain the base, persona 6 is the target
  const int kPersonas = 7, kTrainPersonas = 6;
  PersonaSpec defaults;
  defaults.n_history = 16;
  defaults.n_qa = 20;

  Tokenizer tok;
  for (const auto& w : shared_word_pool()) tok.add_word(w);
  tok.add_text(kInstructionText);
  tok.add_text("tell me about my interests are");
  for (int p = 0; p < kPersonas; ++p)
    for (const auto& w : persona_token_inventory(p, defaults.n_persona_tokens)) tok.add_word(w);

  ModelConfig cfg;
  cfg.n_layers = 4;
  cfg.d_model = 32;
  cfg.d_ff = 128;
  cfg.n_heads = 2;
  cfg.vocab_size = tok.vocab_size();
  cfg.max_seq_len = 256;
  BaseModel model(cfg, 61);

  std::vector<int> stream;
  for (int p = 0; p < kTrainPersonas; ++p) {
    PersonaSpec spec = defaults;
    spec.persona_index = p;
    UserCorpus u = generate_user(spec, mix_seed(600, static_cast<uint64_t>(p)));
    auto ids = user_stream(u, tok);
    stream.insert(stream.end(), ids.begin(), ids.end());
  }
  TrainConfig ptc;
  ptc.steps = 150;
  ptc.batch_size = 4;
  ptc.seq_len = 48;
  ptc.lr = 1e-3;
  ptc.seed = 62;
  pretrain(model, stream, ptc);

  PersonaSpec held = defaults;
  held.persona_index = kTrainPersonas;
  UserCorpus target = generate_user(held, mix_seed(600, kTrainPersonas));

  TrainConfig inj;
  inj.steps = 30;
  inj.batch_size = 2;
  inj.seq_len = 48;
  inj.lr = 3e-3;
  auto evaluate = [&](const SearchPoint& point, uint64_t seed) {
    Observation obs;
    obs.point = point;
    try {
      AdapterSet adapters = instantiate(point.decoded, cfg, seed);
      TrainConfig c = inj;
      c.seed = mix_seed(seed, 1);
      if (!inject_memory(model, adapters, target, tok, c).ok) {
        obs.failed = true;
        return obs;
      }
      EvalMetrics val = evaluate_split(model, &adapters, target, tok, Split::kValidation);
      obs.loss = val.cross_entropy;
      obs.rouge_l = val.rouge_l;
      if (!std::isfinite(obs.loss) || obs.loss <= 0.0) obs.failed = true;
    } catch (const std::exception&) {
      obs.failed = true;
    }
    return obs;
  };

  SearchSpaceDef full;
  full.n_layers = cfg.n_layers;
  full.rank_menu = {4, 8, 16};
  RestrictionDefaults rd;
  rd.count = 2;
  rd.rank = 8;
  SearchSpaceDef layer_only = restrict(full, {Factor::kCount, Factor::kRank}, rd);

  BoConfig bo;
  bo.budget = 10;
  bo.init_count = 6;
  bo.pool_size = 128;
  bo.mc_samples = 32;
  bo.eps_hv = 0.0;  // identical budgets across spaces

  std::vector<RunState> full_runs, layer_runs;
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    full_runs.push_back(run_search(full, evaluate, bo, seed));
    layer_runs.push_back(run_search(layer_only, evaluate, bo, seed));
  }

  Objectives ref{1e300, 1e300};
  for (const auto* runs : {&full_runs, &layer_runs})
    for (const auto& run : *runs)
      for (const auto& o : run.log)
        if (!o.failed) {
          ref[0] = std::min(ref[0], o.objectives()[0]);
          ref[1] = std::min(ref[1], o.objectives()[1]);
        }
  ref[0] -= kRefMargin;
  ref[1] -= kRefMargin;

  int seed_wins = 0;
  double mean_full = 0.0, mean_layer = 0.0;
  for (size_t s = 0; s < 5; ++s) {
    const double hf = hypervolume_2d(front_of(full_runs[s].log).points, ref);
    const double hl = hypervolume_2d(front_of(layer_runs[s].log).points, ref);
    mean_full += hf / 5.0;
    mean_layer += hl / 5.0;
    if (hf >= hl) ++seed_wins;
  }
  std::ostringstream os;
  os << "mean hv full " << mean_full << " vs layer-only " << mean_layer << ", full >= layer in "
     << seed_wins << "/5 seeds";
  detail = os.str();
  return mean_full >= mean_layer && seed_wins >= 4;
}

// ---------------------------------------------------------------------------
// A7: text metric oracles

size_t lcs_oracle(const TokenSeq& a, const TokenSeq& b) {
  std::vector<std::vector<size_t>> dp(a.size() + 1, std::vector<size_t>(b.size() + 1, 0));
  for (size_t i = a.size(); i-- > 0;)
    for (size_t j = b.size(); j-- > 0;)
      dp[i][j] = a[i] == b[j] ? dp[i + 1][j + 1] + 1 : std::max(dp[i + 1][j], dp[i][j + 1]);
  return dp[0][0];
}

bool check_a7(std::string& detail) {
  std::mt19937_64 rng(71);
  const std::vector<std::string> words = {"a", "b", "c", "d", "e", "f"};
  std::uniform_int_distribution<int> len(1, 18);
  std::uniform_int_distribution<size_t> pick(0, words.size() - 1);
  auto random_seq = [&] {
    TokenSeq s(static_cast<size_t>(len(rng)));
    for (auto& w : s) w = words[pick(rng)];
    return s;
  };

  for (int t = 0; t < 100; ++t) {
    TokenSeq a = random_seq(), b = random_seq();

    // clipped unigram-multiset oracle
    std::map<std::string, int> ca, cb;
    for (const auto& w : a) ++ca[w];
    for (const auto& w : b) ++cb[w];
    double overlap = 0.0;
    for (const auto& [w, n] : ca)
      if (cb.count(w)) overlap += std::min(n, cb[w]);
    const double p1 = overlap / a.size(), r1 = overlap / b.size();
    const double f1 = p1 + r1 > 0 ? 2 * p1 * r1 / (p1 + r1) : 0.0;
    if (std::abs(rouge_1(a, b) - f1) > 1e-14) {
      detail = "rouge_1 mismatch on pair " + std::to_string(t);
      return false;
    }

    const double lcs = static_cast<double>(lcs_oracle(a, b));
    const double pl = lcs / a.size(), rl = lcs / b.size();
    const double fl = pl + rl > 0 ? 2 * pl * rl / (pl + rl) : 0.0;
    if (std::abs(rouge_l(a, b) - fl) > 1e-14) {
      detail = "rouge_l mismatch on pair " + std::to_string(t);
      return false;
    }
  }

  const double pf = persona_f1({"insulin", "dosage"}, {"diabetes", "insulin", "walking"});
  if (std::abs(pf - 0.4) > 1e-14) {
    detail = "persona_f1 worked example returned " + std::to_string(pf);
    return false;
  }
  detail = "100/100 pairs match, worked example 0.4";
  return true;
}

// ---------------------------------------------------------------------------
// A8: byte-identical observation CSVs across reruns

bool check_a8(std::string& detail) {
  RunManifest m;
  m.seed = 88;
  m.out_dir = "/tmp/memlora_accept_a8";
  m.model.n_layers = 2;
  m.model.d_model = 32;
  m.model.d_ff = 128;
  m.model.n_heads = 2;
  m.model.max_seq_len = 256;
  m.pretrain_cfg.steps = 30;
  m.pretrain_cfg.batch_size = 2;
  m.pretrain_cfg.seq_len = 48;
  m.inject_cfg.steps = 10;
  m.inject_cfg.batch_size = 2;
  m.inject_cfg.seq_len = 48;
  m.bo.budget = 6;
  m.bo.init_count = 4;
  m.bo.pool_size = 64;
  m.bo.mc_samples = 16;
  m.bo.jobs = 2;  // determinism must survive the threaded initial design
  m.n_personas = 4;
  m.n_train_personas = 3;
  m.persona_defaults.n_history = 10;
  m.persona_defaults.n_qa = 12;

  fs::remove_all(m.out_dir);
  cmd_pretrain(m);

  cmd_search(m, 0, false);
  const std::string first = slurp(observations_path(m, 0));
  fs::remove_all(m.out_dir + "/user0");
  cmd_search(m, 0, false);
  const std::string second = slurp(observations_path(m, 0));

  if (first.empty()) {
    detail = "first run produced an empty CSV";
    return false;
  }
  detail = "CSVs " + std::to_string(first.size()) + " bytes, " +
           (first == second ? "identical" : "DIFFERENT");
  return first == second;
}

}  // namespace

// optional args select a subset of criteria by id, e.g. `acceptance A3 A7`
int main(int argc, char** argv) {
  const Criterion criteria[] = {
      {"A1", "gradient correctness (finite differences)", check_a1},
      {"A2", "warm-start equivalence (B = 0 adapters)", check_a2},
      {"A3", "Pareto/hypervolume oracles", check_a3},
      {"A7", "text metric oracles", check_a7},
      {"A4", "BO beats random on the analytic benchmark", check_a4},
      {"A8", "deterministic observation CSVs", check_a8},
      {"A6", "ablation direction (full vs layer-only space)", check_a6},
      {"A5", "end-to-end personalization on held-out users", check_a5},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    if (argc > 1) {
      bool wanted = false;
      for (int i = 1; i < argc; ++i) wanted = wanted || c.id == std::string(argv[i]);
      if (!wanted) continue;
    }
    const double t0 = now();
    std::string detail;
    bool ok = false;
    try {
      ok = c.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    if (!ok) ++failures;
    std::printf("%s %s: %s — %s (%.1fs)\n", c.id, ok ? "PASS" : "FAIL", c.title, detail.c_str(),
                now() - t0);
    std::fflush(stdout);
  }
  if (failures) std::printf("%d criterion(s) failed\n", failures);
  return failures ? 1 : 0;
}
