#include "memlora/cli.hpp"

#include "memlora/common.hpp"
#include "memlora/gp.hpp"
#include "memlora/tuning.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace memlora {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

template <typename T>
void read_field(const json& j, const std::string& path, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw UsageError("manifest: bad value at " + path + "." + key + ": " + e.what());
  }
}

void read_train_cfg(const json& j, const std::string& path, TrainConfig& cfg) {
  read_field(j, path, "steps", cfg.steps);
  read_field(j, path, "batch_size", cfg.batch_size);
  read_field(j, path, "seq_len", cfg.seq_len);
  read_field(j, path, "lr", cfg.lr);
  read_field(j, path, "weight_decay", cfg.weight_decay);
  read_field(j, path, "warmup_fraction", cfg.warmup_fraction);
}

std::string user_dir(const RunManifest& m, int user_index) {
  return m.out_dir + "/user" + std::to_string(user_index);
}

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

Evaluator make_evaluator(const RunManifest& m, const BaseModel& model, const Tokenizer& tok,
                         const UserCorpus& corpus) {
  return [&m, &model, &tok, &corpus](const SearchPoint& point, uint64_t seed) {
    Observation obs;
    obs.point = point;
    const double t0 = now_seconds();
    try {
      AdapterSet adapters = instantiate(point.decoded, model.config(), seed);
      TrainConfig cfg = m.inject_cfg;
      cfg.seed = mix_seed(seed, 1);
      TuneResult tr = inject_memory(model, adapters, corpus, tok, cfg);
      if (!tr.ok) {
        obs.failed = true;
      } else {
        EvalMetrics val = evaluate_split(model, &adapters, corpus, tok, Split::kValidation);
        obs.loss = val.cross_entropy;
        obs.rouge_l = val.rouge_l;
        if (!std::isfinite(obs.loss) || !std::isfinite(obs.rouge_l) || obs.loss <= 0.0)
          obs.failed = true;
      }
    } catch (const std::exception&) {
      obs.failed = true;
    }
    obs.wall_seconds = now_seconds() - t0;
    return obs;
  };
}

void write_summary(const RunManifest& m, int user_index, const RunState& state) {
  std::ofstream f(summary_path(m, user_index), std::ios::binary);
  f << "observations: " << state.log.size() << '\n';
  f << "converged: " << (state.converged ? "yes" : "no") << '\n';
  f << "hypervolume: " << hypervolume_2d(state.front) << '\n';
  f << "reference: " << state.front.ref[0] << ' ' << state.front.ref[1] << '\n';
  f << "front:\n";
  for (const auto& o : state.log) {
    if (o.failed) continue;
    const Objectives obj = o.objectives();
    if (std::find(state.front.points.begin(), state.front.points.end(), obj) !=
        state.front.points.end())
      f << "  l=" << o.loss << " rl=" << o.rouge_l << " config=" << config_to_string(o.point.decoded)
        << '\n';
  }
  const Observation& best = best_configuration(state);
  f << "best_config: " << config_to_string(best.point.decoded) << '\n';
  f << "best_l: " << best.loss << '\n';
  f << "best_rl: " << best.rouge_l << '\n';
  if (!state.last_gp_summary.empty()) f << "gp: " << state.last_gp_summary << '\n';
  for (const auto& n : state.notes) f << "note: " << n << '\n';
}

void write_gnuplot(const RunManifest& m, int user_index, const RunState& state) {
  std::ofstream f(user_dir(m, user_index) + "/pareto.gnuplot", std::ios::binary);
  f << "set title 'Pareto front (validation)'\n"
    << "set xlabel 'cross-entropy'\nset ylabel 'ROUGE-L'\n"
    << "plot '-' with points pt 7 title 'observations', '-' with linespoints pt 5 title 'front'\n";
  for (const auto& o : state.log)
    if (!o.failed) f << o.loss << ' ' << o.rouge_l << '\n';
  f << "e\n";
  for (const auto& p : state.front.points) f << -p[0] << ' ' << p[1] << '\n';
  f << "e\n";
}

}  // namespace

SearchSpaceDef RunManifest::space() const {
  SearchSpaceDef def;
  def.n_layers = model.n_layers;
  def.rank_menu = rank_menu;
  def.n_max = n_max;
  return def;
}

RunManifest load_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw UsageError("manifest: cannot open " + path);
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw UsageError("manifest: parse error in " + path + ": " + e.what());
  }
  RunManifest m;
  m.pretrain_cfg.steps = 1500;
  m.inject_cfg.steps = 300;
  m.instruct_cfg.steps = 200;
  read_field(j, "", "seed", m.seed);
  read_field(j, "", "out_dir", m.out_dir);
  if (j.contains("model")) {
    const auto& jm = j["model"];
    read_field(jm, "model", "n_layers", m.model.n_layers);
    read_field(jm, "model", "d_model", m.model.d_model);
    read_field(jm, "model", "d_ff", m.model.d_ff);
    read_field(jm, "model", "n_heads", m.model.n_heads);
    read_field(jm, "model", "max_seq_len", m.model.max_seq_len);
  }
  if (j.contains("search_space")) {
    const auto& js = j["search_space"];
    read_field(js, "search_space", "rank_menu", m.rank_menu);
    read_field(js, "search_space", "n_max", m.n_max);
  }
  if (j.contains("pretrain")) read_train_cfg(j["pretrain"], "pretrain", m.pretrain_cfg);
  if (j.contains("inject")) read_train_cfg(j["inject"], "inject", m.inject_cfg);
  if (j.contains("instruct")) read_train_cfg(j["instruct"], "instruct", m.instruct_cfg);
  if (j.contains("search")) {
    const auto& js = j["search"];
    read_field(js, "search", "budget", m.bo.budget);
    read_field(js, "search", "init_count", m.bo.init_count);
    read_field(js, "search", "pool_size", m.bo.pool_size);
    read_field(js, "search", "mc_samples", m.bo.mc_samples);
    read_field(js, "search", "window", m.bo.window);
    read_field(js, "search", "eps_hv", m.bo.eps_hv);
  }
  if (j.contains("corpus")) {
    const auto& jc = j["corpus"];
    read_field(jc, "corpus", "type", m.corpus_type);
    read_field(jc, "corpus", "n_personas", m.n_personas);
    read_field(jc, "corpus", "n_train_personas", m.n_train_personas);
    read_field(jc, "corpus", "n_history", m.persona_defaults.n_history);
    read_field(jc, "corpus", "n_qa", m.persona_defaults.n_qa);
    read_field(jc, "corpus", "content_len_mean", m.persona_defaults.content_len_mean);
    read_field(jc, "corpus", "response_len_mean", m.persona_defaults.response_len_mean);
    read_field(jc, "corpus", "path", m.ingest_path);
  }
  if (j.contains("ablate")) {
    const auto& ja = j["ablate"];
    read_field(ja, "ablate", "seeds", m.ablate_seeds);
    read_field(ja, "ablate", "default_rank", m.ablate_default_rank);
    read_field(ja, "ablate", "default_count", m.ablate_default_count);
  }
  if (m.corpus_type != "synthetic" && m.corpus_type != "ingest")
    throw UsageError("manifest: corpus.type must be \"synthetic\" or \"ingest\"");
  if (m.corpus_type == "ingest" && m.ingest_path.empty())
    throw UsageError("manifest: corpus.path required for ingest corpora");
  if (m.corpus_type == "synthetic" && m.n_train_personas >= m.n_personas)
    throw UsageError("manifest: corpus.n_personas must exceed n_train_personas");
  return m;
}

void save_manifest(const RunManifest& m, const std::string& path) {
  json j;
  j["seed"] = m.seed;
  j["out_dir"] = m.out_dir;
  j["model"] = {{"n_layers", m.model.n_layers}, {"d_model", m.model.d_model},
                {"d_ff", m.model.d_ff},         {"n_heads", m.model.n_heads},
                {"max_seq_len", m.model.max_seq_len}};
  j["search_space"] = {{"rank_menu", m.rank_menu}, {"n_max", m.n_max}};
  auto tc = [](const TrainConfig& c) {
    return json{{"steps", c.steps},   {"batch_size", c.batch_size},
                {"seq_len", c.seq_len}, {"lr", c.lr},
                {"weight_decay", c.weight_decay}, {"warmup_fraction", c.warmup_fraction}};
  };
  j["pretrain"] = tc(m.pretrain_cfg);
  j["inject"] = tc(m.inject_cfg);
  j["instruct"] = tc(m.instruct_cfg);
  j["search"] = {{"budget", m.bo.budget},       {"init_count", m.bo.init_count},
                 {"pool_size", m.bo.pool_size}, {"mc_samples", m.bo.mc_samples},
                 {"window", m.bo.window},       {"eps_hv", m.bo.eps_hv}};
  j["corpus"] = {{"type", m.corpus_type},
                 {"n_personas", m.n_personas},
                 {"n_train_personas", m.n_train_personas},
                 {"n_history", m.persona_defaults.n_history},
                 {"n_qa", m.persona_defaults.n_qa},
                 {"content_len_mean", m.persona_defaults.content_len_mean},
                 {"response_len_mean", m.persona_defaults.response_len_mean},
                 {"path", m.ingest_path}};
  j["ablate"] = {{"seeds", m.ablate_seeds},
                 {"default_rank", m.ablate_default_rank},
                 {"default_count", m.ablate_default_count}};
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_manifest: cannot open " + path);
  f << j.dump(2) << '\n';
}

Tokenizer build_vocabulary(const RunManifest& m) {
  Tokenizer tok;
  if (m.corpus_type == "ingest") {
    for (const auto& user : ingest(m.ingest_path)) {
      tok.add_text(user.profile);
      for (const auto& h : user.history) tok.add_text(h);
      for (const auto& p : user.qa_pairs) {
        tok.add_text(p.query);
        tok.add_text(p.response);
      }
    }
  } else {
    for (const auto& w : shared_word_pool()) tok.add_word(w);
    tok.add_text(kInstructionText);
    tok.add_text("tell me about my interests are");
    for (int p = 0; p < m.n_personas; ++p)
      for (const auto& w : persona_token_inventory(p, m.persona_defaults.n_persona_tokens))
        tok.add_word(w);
  }
  tok.add_text(kInstructionText);
  return tok;
}

std::vector<int> pretrain_stream(const RunManifest& m, const Tokenizer& tok) {
  std::vector<int> stream;
  auto append = [&](const std::vector<int>& ids) { stream.insert(stream.end(), ids.begin(), ids.end()); };
  auto append_user = [&](const UserCorpus& u) {
    append(user_stream(u, tok));
    for (const auto& p : u.qa_pairs) {
      append(tok.encode(p.query));
      append(tok.encode(p.response));
      stream.push_back(Tokenizer::kEos);
    }
  };
  if (m.corpus_type == "ingest") {
    // all but the last user pretrain the base; the last is held out
    auto users = ingest(m.ingest_path);
    const size_t n_pretrain = users.size() > 1 ? users.size() - 1 : 1;
    for (size_t i = 0; i < n_pretrain; ++i) append_user(users[i]);
  } else {
    for (int p = 0; p < m.n_train_personas; ++p) {
      PersonaSpec spec = m.persona_defaults;
      spec.persona_index = p;
      append_user(generate_user(spec, mix_seed(m.seed, 100 + static_cast<uint64_t>(p))));
    }
  }
  return stream;
}

int n_eval_users(const RunManifest& m) {
  if (m.corpus_type == "ingest") return 1;
  return m.n_personas - m.n_train_personas;
}

UserCorpus eval_user(const RunManifest& m, int user_index) {
  if (user_index < 0 || user_index >= n_eval_users(m))
    throw UsageError("eval_user: user index " + std::to_string(user_index) + " out of range");
  if (m.corpus_type == "ingest") {
    auto users = ingest(m.ingest_path);
    return users.back();
  }
  PersonaSpec spec = m.persona_defaults;
  spec.persona_index = m.n_train_personas + user_index;
  return generate_user(spec, mix_seed(m.seed, 100 + static_cast<uint64_t>(spec.persona_index)));
}

std::string checkpoint_path(const RunManifest& m) { return m.out_dir + "/model.bin"; }
std::string vocab_path(const RunManifest& m) { return m.out_dir + "/vocab.txt"; }
std::string observations_path(const RunManifest& m, int user_index) {
  return user_dir(m, user_index) + "/observations.csv";
}
std::string summary_path(const RunManifest& m, int user_index) {
  return user_dir(m, user_index) + "/front_summary.txt";
}
std::string report_path(const RunManifest& m, int user_index) {
  return user_dir(m, user_index) + "/report.txt";
}

void cmd_pretrain(const RunManifest& m) {
  fs::create_directories(m.out_dir);
  Tokenizer tok = build_vocabulary(m);
  tok.save(vocab_path(m));
  ModelConfig cfg = m.model;
  cfg.vocab_size = tok.vocab_size();
  cfg.validate();
  BaseModel model(cfg, mix_seed(m.seed, 1));
  TrainConfig tcfg = m.pretrain_cfg;
  tcfg.seed = mix_seed(m.seed, 2);
  pretrain(model, pretrain_stream(m, tok), tcfg);
  model.save(checkpoint_path(m));
  save_manifest(m, m.out_dir + "/manifest.json");
}

RunState cmd_search(const RunManifest& m, int user_index, bool emit_gnuplot) {
  if (!fs::exists(checkpoint_path(m)))
    throw UsageError("cmd_search: no checkpoint at " + checkpoint_path(m) + " (run pretrain first)");
  BaseModel model = BaseModel::load(checkpoint_path(m));
  Tokenizer tok = Tokenizer::load(vocab_path(m));
  UserCorpus corpus = eval_user(m, user_index);
  fs::create_directories(user_dir(m, user_index));

  const SearchSpaceDef def = m.space();
  std::vector<Observation> resume;
  const std::string csv_path = observations_path(m, user_index);
  if (fs::exists(csv_path)) resume = read_csv(csv_path, def);

  std::ofstream csv(csv_path, resume.empty() ? std::ios::binary : std::ios::binary | std::ios::app);
  if (resume.empty()) write_csv_header(csv);

  Evaluator ev = make_evaluator(m, model, tok, corpus);
  RunState state = run_search(def, ev, m.bo, mix_seed(m.seed, 10 + static_cast<uint64_t>(user_index)),
                              std::move(resume), &csv);

  std::ofstream timings(user_dir(m, user_index) + "/timings.csv", std::ios::binary);
  timings << "iteration,wall_seconds\n";
  for (size_t i = 0; i < state.log.size(); ++i)
    timings << i << ',' << state.log[i].wall_seconds << '\n';

  write_summary(m, user_index, state);
  if (emit_gnuplot) write_gnuplot(m, user_index, state);
  return state;
}

void cmd_tune_eval(const RunManifest& m, int user_index, const std::string& config_override) {
  if (!fs::exists(checkpoint_path(m)))
    throw UsageError("cmd_tune_eval: no checkpoint at " + checkpoint_path(m));
  BaseModel model = BaseModel::load(checkpoint_path(m));
  Tokenizer tok = Tokenizer::load(vocab_path(m));
  UserCorpus corpus = eval_user(m, user_index);
  fs::create_directories(user_dir(m, user_index));

  std::string config_text = config_override;
  if (config_text.empty()) {
    std::ifstream f(summary_path(m, user_index));
    if (!f)
      throw UsageError("cmd_tune_eval: no front summary for user " + std::to_string(user_index) +
                       "; pass --config or run search first");
    std::string line;
    while (std::getline(f, line))
      if (line.rfind("best_config: ", 0) == 0) config_text = line.substr(13);
    if (config_text.empty()) throw UsageError("cmd_tune_eval: front summary lacks best_config");
  }

  const auto specs = config_from_string(config_text);
  AdapterSet adapters = instantiate(specs, model.config(), mix_seed(m.seed, 50));
  TrainConfig inj = m.inject_cfg;
  inj.seed = mix_seed(m.seed, 51);
  if (!inject_memory(model, adapters, corpus, tok, inj).ok)
    throw std::runtime_error("cmd_tune_eval: memory injection diverged");

  std::vector<InstructionExample> train_examples;
  for (const QaPair* p : corpus.pairs_in(Split::kTrain))
    train_examples.push_back(render_example(corpus, tok, *p));
  TrainConfig ins = m.instruct_cfg;
  ins.seed = mix_seed(m.seed, 52);
  if (!instruction_tune(model, adapters, train_examples, ins).ok)
    throw std::runtime_error("cmd_tune_eval: instruction tuning diverged");

  EvalMetrics base = evaluate_split(model, nullptr, corpus, tok, Split::kTest);
  EvalMetrics tuned = evaluate_split(model, &adapters, corpus, tok, Split::kTest);
  EvalMetrics base_val = evaluate_split(model, nullptr, corpus, tok, Split::kValidation);
  EvalMetrics tuned_val = evaluate_split(model, &adapters, corpus, tok, Split::kValidation);

  save_adapters(adapters, model.config(), user_dir(m, user_index) + "/adapters.bin");
  std::ofstream f(report_path(m, user_index), std::ios::binary);
  f << "user: " << corpus.user_id << '\n';
  f << "config: " << config_text << '\n';
  f << "trainable_params: " << trainable_param_count(adapters, model.config()) << '\n';
  auto row = [&](const char* name, const EvalMetrics& e) {
    f << name << ": ce=" << e.cross_entropy << " rouge1=" << e.rouge_1 << " rougeL=" << e.rouge_l
      << " personaF1=" << e.persona_f1 << " pairs=" << e.n_pairs << '\n';
  };
  row("base_test", base);
  row("tuned_test", tuned);
  row("base_validation", base_val);
  row("tuned_validation", tuned_val);
}

void cmd_ablate(const RunManifest& m, int user_index) {
  if (!fs::exists(checkpoint_path(m)))
    throw UsageError("cmd_ablate: no checkpoint at " + checkpoint_path(m));
  BaseModel model = BaseModel::load(checkpoint_path(m));
  Tokenizer tok = Tokenizer::load(vocab_path(m));
  UserCorpus corpus = eval_user(m, user_index);
  Evaluator ev = make_evaluator(m, model, tok, corpus);

  const SearchSpaceDef full = m.space();
  RestrictionDefaults defaults;
  defaults.rank = m.ablate_default_rank;
  defaults.count = m.ablate_default_count;
  std::vector<int> order(static_cast<size_t>(full.n_layers));
  for (int i = 0; i < full.n_layers; ++i) order[static_cast<size_t>(i)] = i;
  defaults.layer_order = order;

  struct Row {
    std::string name;
    SearchSpaceDef def;
    std::vector<RunState> runs;
  };
  std::vector<Row> rows;
  rows.push_back({"layer", restrict(full, {Factor::kCount, Factor::kRank}, defaults), {}});
  rows.push_back({"num_size", restrict(full, {Factor::kLayers}, defaults), {}});
  rows.push_back({"num_size_layer", full, {}});

  const std::string dir = m.out_dir + "/ablate";
  for (auto& row : rows) {
    for (size_t s = 0; s < m.ablate_seeds.size(); ++s) {
      fs::create_directories(dir + "/" + row.name);
      std::ofstream csv(dir + "/" + row.name + "/seed" + std::to_string(m.ablate_seeds[s]) + ".csv",
                        std::ios::binary);
      write_csv_header(csv);
      row.runs.push_back(run_search(row.def, ev, m.bo, m.ablate_seeds[s], {}, &csv));
    }
  }

  // shared reference so hypervolumes are comparable across spaces
  Objectives ref{1e300, 1e300};
  for (const auto& row : rows)
    for (const auto& run : row.runs)
      for (const auto& o : run.log)
        if (!o.failed) {
          ref[0] = std::min(ref[0], o.objectives()[0]);
          ref[1] = std::min(ref[1], o.objectives()[1]);
        }
  ref[0] -= kRefMargin;
  ref[1] -= kRefMargin;

  std::ofstream f(dir + "/ablation_table.txt", std::ios::binary);
  f << "space";
  for (uint64_t s : m.ablate_seeds) f << " seed" << s;
  f << " mean\n";
  for (const auto& row : rows) {
    f << row.name;
    double total = 0.0;
    for (const auto& run : row.runs) {
      const double hv = hypervolume_2d(run.front.points, ref);
      f << ' ' << hv;
      total += hv;
    }
    f << ' ' << total / static_cast<double>(row.runs.size()) << '\n';
  }
  f << "reference: " << ref[0] << ' ' << ref[1] << '\n';
}

}  // namespace memlora
