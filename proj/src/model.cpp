#include "memlora/model.hpp"

#include "memlora/common.hpp"
#include "memlora/optim.hpp"
#include "memlora/tokenizer.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace memlora {

namespace {

constexpr uint32_t kMagic = 0x4d4c4350;  // "MLCP"
constexpr uint32_t kVersion = 1;

void write_u32(std::ofstream& f, uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); }
void write_i32(std::ofstream& f, int32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); }
uint32_t read_u32(std::ifstream& f) {
  uint32_t v;
  f.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
int32_t read_i32(std::ifstream& f) {
  int32_t v;
  f.read(reinterpret_cast<char*>(&v), 4);
  return v;
}

}  // namespace

BaseModel::BaseModel(const ModelConfig& config, uint64_t seed) : config_(config) {
  config.validate();
  std::mt19937_64 rng(seed);
  const double s = 0.02;
  const int d = config.d_model;
  token_emb = Tensor::randn(config.vocab_size, d, s, rng, true);
  pos_emb = Tensor::randn(config.max_seq_len, d, s, rng, true);
  for (int l = 0; l < config.n_layers; ++l) {
    LayerParams p;
    p.ln1_gain = Tensor(Matrix::Ones(1, d), true);
    p.ln1_bias = Tensor::zeros(1, d, true);
    p.wq = Tensor::randn(d, d, s, rng, true);
    p.wk = Tensor::randn(d, d, s, rng, true);
    p.wv = Tensor::randn(d, d, s, rng, true);
    p.wo = Tensor::randn(d, d, s, rng, true);
    p.ln2_gain = Tensor(Matrix::Ones(1, d), true);
    p.ln2_bias = Tensor::zeros(1, d, true);
    p.w_up = Tensor::randn(d, config.d_ff, s, rng, true);
    p.w_down = Tensor::randn(config.d_ff, d, s, rng, true);
    layers.push_back(std::move(p));
  }
  lnf_gain = Tensor(Matrix::Ones(1, d), true);
  lnf_bias = Tensor::zeros(1, d, true);
  w_head = Tensor::randn(d, config.vocab_size, s, rng, true);
}

std::vector<Tensor> BaseModel::parameters() {
  std::vector<Tensor> out{token_emb, pos_emb};
  for (auto& p : layers)
    for (auto* t : {&p.ln1_gain, &p.ln1_bias, &p.wq, &p.wk, &p.wv, &p.wo, &p.ln2_gain, &p.ln2_bias,
                    &p.w_up, &p.w_down})
      out.push_back(*t);
  out.push_back(lnf_gain);
  out.push_back(lnf_bias);
  out.push_back(w_head);
  return out;
}

void BaseModel::set_frozen(bool frozen) {
  frozen_ = frozen;
  for (auto& p : parameters()) p.set_requires_grad(!frozen);
}

uint64_t BaseModel::checksum() const {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (auto& p : const_cast<BaseModel*>(this)->parameters())
    h = fnv1a(p.value().data(), sizeof(double) * static_cast<size_t>(p.size()), h);
  return h;
}

void BaseModel::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint save: cannot open " + path);
  write_u32(f, kMagic);
  write_u32(f, kVersion);
  for (int v : {config_.n_layers, config_.d_model, config_.d_ff, config_.n_heads,
                config_.vocab_size, config_.max_seq_len})
    write_i32(f, v);
  for (auto& p : const_cast<BaseModel*>(this)->parameters())
    f.write(reinterpret_cast<const char*>(p.value().data()),
            static_cast<std::streamsize>(sizeof(double)) * p.size());
}

BaseModel BaseModel::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint load: cannot open " + path);
  if (read_u32(f) != kMagic) throw std::runtime_error("checkpoint load: bad magic in " + path);
  if (read_u32(f) != kVersion) throw std::runtime_error("checkpoint load: unsupported version");
  ModelConfig cfg;
  cfg.n_layers = read_i32(f);
  cfg.d_model = read_i32(f);
  cfg.d_ff = read_i32(f);
  cfg.n_heads = read_i32(f);
  cfg.vocab_size = read_i32(f);
  cfg.max_seq_len = read_i32(f);
  cfg.validate();
  BaseModel model(cfg, 0);
  for (auto& p : model.parameters())
    f.read(reinterpret_cast<char*>(p.value().data()),
           static_cast<std::streamsize>(sizeof(double)) * p.size());
  if (!f) throw std::runtime_error("checkpoint load: truncated file " + path);
  model.set_frozen(true);
  return model;
}

Tensor forward(const BaseModel& model, const AdapterSet* adapters, const std::vector<int>& tokens) {
  const ModelConfig& cfg = model.config();
  const auto t = static_cast<Eigen::Index>(tokens.size());
  if (t == 0) throw std::invalid_argument("forward: empty token list");
  if (t > cfg.max_seq_len) throw std::invalid_argument("forward: sequence exceeds max_seq_len");
  for (int id : tokens)
    if (id < 0 || id >= cfg.vocab_size)
      throw std::out_of_range("forward: token id " + std::to_string(id) + " outside vocabulary");

  auto& m = const_cast<BaseModel&>(model);
  std::vector<int> positions(tokens.size());
  std::iota(positions.begin(), positions.end(), 0);
  Tensor x = add(gather_rows(m.token_emb, tokens), gather_rows(m.pos_emb, positions));

  const int dh = cfg.d_model / cfg.n_heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int l = 0; l < cfg.n_layers; ++l) {
    auto& p = m.layers[static_cast<size_t>(l)];
    Tensor h = layernorm(x, p.ln1_gain, p.ln1_bias);
    Tensor q = matmul(h, p.wq), k = matmul(h, p.wk), v = matmul(h, p.wv);
    std::vector<Tensor> heads;
    for (int hd = 0; hd < cfg.n_heads; ++hd) {
      Tensor qh = slice_cols(q, hd * dh, dh);
      Tensor kh = slice_cols(k, hd * dh, dh);
      Tensor vh = slice_cols(v, hd * dh, dh);
      Tensor probs = causal_softmax(scale(matmul(qh, transpose(kh)), inv_sqrt_dh));
      heads.push_back(matmul(probs, vh));
    }
    x = add(x, matmul(concat_cols(heads), p.wo));

    Tensor h2 = layernorm(x, p.ln2_gain, p.ln2_bias);
    Tensor up = matmul(h2, p.w_up);
    if (adapters) {
      if (const Adapter* a = adapters->find(l)) {
        auto& adapter = const_cast<Adapter&>(*a);
        up = add(up, matmul(matmul(h2, transpose(adapter.A)), transpose(adapter.B)));
      }
    }
    x = add(x, matmul(gelu(up), p.w_down));
  }
  x = layernorm(x, m.lnf_gain, m.lnf_bias);
  return matmul(x, m.w_head);
}

Tensor next_token_loss(const BaseModel& model, const AdapterSet* adapters,
                       const std::vector<int>& tokens) {
  if (tokens.size() < 2) throw std::invalid_argument("next_token_loss: need at least two tokens");
  std::vector<int> inputs(tokens.begin(), tokens.end() - 1);
  std::vector<int> targets(tokens.begin() + 1, tokens.end());
  return softmax_cross_entropy(forward(model, adapters, inputs), targets);
}

void pretrain(BaseModel& model, const std::vector<int>& stream, const TrainConfig& cfg) {
  cfg.validate();
  if (stream.size() < 2) throw std::invalid_argument("pretrain: corpus too small");
  if (model.frozen()) throw std::logic_error("pretrain: model is frozen");
  if (cfg.steps == 0) {
    model.set_frozen(true);
    return;
  }
  std::mt19937_64 rng(cfg.seed);
  auto params = model.parameters();
  AdamWState state;
  AdamWConfig opt{.lr = cfg.lr,
                  .weight_decay = cfg.weight_decay,
                  .warmup_fraction = cfg.warmup_fraction,
                  .total_steps = cfg.steps};
  const size_t window = std::min<size_t>(static_cast<size_t>(cfg.seq_len) + 1, stream.size());
  std::uniform_int_distribution<size_t> start(0, stream.size() - window);

  for (long step = 1; step <= cfg.steps; ++step) {
    for (auto& p : params) p.zero_grad();
    Tensor total;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const size_t s = start(rng);
      std::vector<int> chunk(stream.begin() + static_cast<long>(s),
                             stream.begin() + static_cast<long>(s + window));
      Tensor loss = next_token_loss(model, nullptr, chunk);
      total = total.defined() ? add(total, loss) : loss;
    }
    total = scale(total, 1.0 / cfg.batch_size);
    if (!std::isfinite(total.value()(0, 0)))
      throw std::runtime_error("pretrain: non-finite loss at step " + std::to_string(step));
    backward(total);
    clip_global_norm(params, cfg.clip_norm);
    adamw_step(params, state, opt, step);
  }
  model.set_frozen(true);
}

double stream_loss(const BaseModel& model, const AdapterSet* adapters, const std::vector<int>& stream,
                   int seq_len) {
  if (stream.size() < 2) throw std::invalid_argument("stream_loss: stream too small");
  double total = 0.0;
  long count = 0;
  const size_t window = std::min<size_t>(static_cast<size_t>(seq_len) + 1, stream.size());
  for (size_t s = 0; s + window <= stream.size(); s += window - 1) {
    std::vector<int> chunk(stream.begin() + static_cast<long>(s),
                           stream.begin() + static_cast<long>(s + window));
    total += next_token_loss(model, adapters, chunk).value()(0, 0);
    ++count;
  }
  if (count == 0) {
    total = next_token_loss(model, adapters, stream).value()(0, 0);
    count = 1;
  }
  return total / static_cast<double>(count);
}

std::vector<int> generate(const BaseModel& model, const AdapterSet* adapters,
                          const std::vector<int>& prompt, int max_new, double temperature,
                          uint64_t seed) {
  if (prompt.empty()) throw std::invalid_argument("generate: empty prompt");
  if (temperature < 0) throw std::invalid_argument("generate: negative temperature");
  std::vector<int> out = prompt;
  std::mt19937_64 rng(seed);
  for (int i = 0; i < max_new; ++i) {
    if (static_cast<int>(out.size()) >= model.config().max_seq_len) break;
    Tensor logits = forward(model, adapters, out);
    const Eigen::RowVectorXd row = logits.value().row(logits.rows() - 1);
    int next;
    if (temperature == 0.0) {
      Eigen::Index arg = 0;
      row.maxCoeff(&arg);  // ties resolve to the lowest index
      next = static_cast<int>(arg);
    } else {
      Vector p = softmax_row(row, temperature);
      std::uniform_real_distribution<double> u(0.0, 1.0);
      double r = u(rng), acc = 0.0;
      next = static_cast<int>(p.size()) - 1;
      for (Eigen::Index j = 0; j < p.size(); ++j) {
        acc += p(j);
        if (r <= acc) {
          next = static_cast<int>(j);
          break;
        }
      }
    }
    out.push_back(next);
    if (next == Tokenizer::kEos) break;
  }
  return out;
}

}  // namespace memlora
