#include "memlora/tuning.hpp"

#include "memlora/metrics.hpp"
#include "memlora/optim.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <stdexcept>

namespace memlora {

namespace {

// Snapshot/restore adapter values around a failing step.
std::vector<Matrix> snapshot(AdapterSet& set) {
  std::vector<Matrix> out;
  for (auto& p : set.parameters()) out.push_back(p.value());
  return out;
}

void restore(AdapterSet& set, const std::vector<Matrix>& snap) {
  auto params = set.parameters();
  for (size_t i = 0; i < params.size(); ++i) params[i].value() = snap[i];
}

TuneResult train_batches(const BaseModel& base, AdapterSet& adapters, const TrainConfig& cfg,
                         const std::function<Tensor(std::mt19937_64&)>& batch_loss) {
  cfg.validate();
  if (!base.frozen()) throw std::logic_error("adapter training requires a frozen base model");
  TuneResult result;
  if (cfg.steps == 0 || adapters.empty()) return result;

  std::mt19937_64 rng(cfg.seed);
  auto params = adapters.parameters();
  AdamWState state;
  AdamWConfig opt{.lr = cfg.lr,
                  .weight_decay = cfg.weight_decay,
                  .warmup_fraction = cfg.warmup_fraction,
                  .total_steps = cfg.steps};
  for (long step = 1; step <= cfg.steps; ++step) {
    auto snap = snapshot(adapters);
    for (auto& p : params) p.zero_grad();
    Tensor loss = batch_loss(rng);
    result.final_loss = loss.value()(0, 0);
    if (!std::isfinite(result.final_loss)) {
      restore(adapters, snap);
      result.ok = false;
      return result;
    }
    backward(loss);
    clip_global_norm(params, cfg.clip_norm);
    adamw_step(params, state, opt, step);
  }
  return result;
}

}  // namespace

std::vector<int> user_stream(const UserCorpus& corpus, const Tokenizer& tok) {
  std::vector<int> stream = tok.encode(corpus.profile);
  for (const auto& h : corpus.history) {
    auto ids = tok.encode(h);
    stream.insert(stream.end(), ids.begin(), ids.end());
  }
  return stream;
}

InstructionExample render_example(const UserCorpus& corpus, const Tokenizer& tok, const QaPair& pair,
                                  size_t history_budget) {
  InstructionExample ex;
  ex.prompt = tok.encode(kInstructionText);
  auto hist = format_history(corpus, tok, history_budget);
  ex.prompt.insert(ex.prompt.end(), hist.begin(), hist.end());
  auto q = tok.encode(pair.query);
  ex.prompt.insert(ex.prompt.end(), q.begin(), q.end());
  ex.target = tok.encode(pair.response);
  ex.target.push_back(Tokenizer::kEos);
  return ex;
}

Tensor masked_response_loss(const BaseModel& model, const AdapterSet* adapters,
                            const InstructionExample& ex) {
  if (ex.prompt.empty() || ex.target.empty())
    throw std::invalid_argument("masked_response_loss: empty prompt or target");
  std::vector<int> input = ex.prompt;
  input.insert(input.end(), ex.target.begin(), ex.target.end() - 1);
  Tensor logits = forward(model, adapters, input);
  // rows prompt_len-1 .. end predict exactly the target tokens
  const auto start = static_cast<Eigen::Index>(ex.prompt.size()) - 1;
  Tensor target_logits = slice_rows(logits, start, static_cast<Eigen::Index>(ex.target.size()));
  return softmax_cross_entropy(target_logits, ex.target);
}

TuneResult inject_memory(const BaseModel& base, AdapterSet& adapters, const UserCorpus& corpus,
                         const Tokenizer& tok, const TrainConfig& cfg) {
  const std::vector<int> stream = user_stream(corpus, tok);
  if (stream.size() < 2) throw std::invalid_argument("inject_memory: user content too small");
  const size_t window = std::min<size_t>(static_cast<size_t>(cfg.seq_len) + 1, stream.size());
  return train_batches(base, adapters, cfg, [&, window](std::mt19937_64& rng) {
    std::uniform_int_distribution<size_t> start(0, stream.size() - window);
    Tensor total;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const size_t s = start(rng);
      std::vector<int> chunk(stream.begin() + static_cast<long>(s),
                             stream.begin() + static_cast<long>(s + window));
      Tensor loss = next_token_loss(base, &adapters, chunk);
      total = total.defined() ? add(total, loss) : loss;
    }
    return scale(total, 1.0 / cfg.batch_size);
  });
}

TuneResult instruction_tune(const BaseModel& base, AdapterSet& adapters,
                            const std::vector<InstructionExample>& examples, const TrainConfig& cfg) {
  if (examples.empty()) return {};
  return train_batches(base, adapters, cfg, [&](std::mt19937_64& rng) {
    std::uniform_int_distribution<size_t> pick(0, examples.size() - 1);
    Tensor total;
    for (int b = 0; b < cfg.batch_size; ++b) {
      Tensor loss = masked_response_loss(base, &adapters, examples[pick(rng)]);
      total = total.defined() ? add(total, loss) : loss;
    }
    return scale(total, 1.0 / cfg.batch_size);
  });
}

EvalMetrics evaluate_split(const BaseModel& model, const AdapterSet* adapters, const UserCorpus& corpus,
                           const Tokenizer& tok, Split split, int max_new) {
  EvalMetrics m;
  const auto pairs = corpus.pairs_in(split);
  if (pairs.empty()) return m;
  const auto user_tokens = corpus.content_tokens();
  for (const QaPair* pair : pairs) {
    InstructionExample ex = render_example(corpus, tok, *pair);
    m.cross_entropy += masked_response_loss(model, adapters, ex).value()(0, 0);

    auto decoded = generate(model, adapters, ex.prompt, max_new, 0.0);
    std::vector<int> new_ids(decoded.begin() + static_cast<long>(ex.prompt.size()), decoded.end());
    const auto cand = metric_tokens(tok.decode(new_ids));
    const auto ref = metric_tokens(pair->response);
    if (!cand.empty() && !ref.empty()) {
      m.rouge_1 += rouge_1(cand, ref);
      m.rouge_l += rouge_l(cand, ref);
    }
    if (!cand.empty() && !user_tokens.empty()) m.persona_f1 += persona_f1(cand, user_tokens);
    ++m.n_pairs;
  }
  m.cross_entropy /= m.n_pairs;
  m.rouge_1 /= m.n_pairs;
  m.rouge_l /= m.n_pairs;
  m.persona_f1 /= m.n_pairs;
  return m;
}

}  // namespace memlora
