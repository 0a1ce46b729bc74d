#include "memlora/corpus.hpp"

#include "memlora/common.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace memlora {

namespace {

using nlohmann::json;

const std::vector<std::string> kSyllables = {"ba", "de", "ki", "mo", "ru", "sa",
                                             "to", "vu", "ne", "la", "po", "zi"};

std::string pseudo_word(int m) {
  std::string w;
  w += kSyllables[static_cast<size_t>((m / 144) % 12)];
  w += kSyllables[static_cast<size_t>((m / 12) % 12)];
  w += kSyllables[static_cast<size_t>(m % 12)];
  if (m >= 1728) w += kSyllables[static_cast<size_t>((m / 1728) % 12)];
  return w;
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out.push_back(' ');
    out += w;
  }
  return out;
}

int clamp_len(double x, int lo, int hi) {
  return std::min(hi, std::max(lo, static_cast<int>(std::lround(x))));
}

}  // namespace

std::vector<const QaPair*> UserCorpus::pairs_in(Split s) const {
  std::vector<const QaPair*> out;
  for (const auto& p : qa_pairs)
    if (p.split == s) out.push_back(&p);
  return out;
}

std::vector<std::string> UserCorpus::content_tokens() const {
  std::vector<std::string> out = split_words(profile);
  for (const auto& h : history) {
    auto t = split_words(h);
    out.insert(out.end(), t.begin(), t.end());
  }
  return out;
}

std::vector<std::string> persona_token_inventory(int index, int count) {
  std::vector<std::string> out;
  out.reserve(static_cast<size_t>(count));
  for (int k = 0; k < count; ++k) out.push_back(pseudo_word(index * 16 + k));
  return out;
}

const std::vector<std::string>& shared_word_pool() {
  static const std::vector<std::string> pool = {
      "i",     "the",   "a",      "my",    "and",   "about", "today",  "really",
      "like",  "was",   "with",   "again", "think", "some",  "more",   "when",
      "have",  "need",  "always", "been",  "into",  "very",  "good",   "new",
      "time",  "after", "because", "still", "want",  "every"};
  return pool;
}

UserCorpus generate_user(const PersonaSpec& spec, uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto ptoks = persona_token_inventory(spec.persona_index, spec.n_persona_tokens);
  const auto& pool = shared_word_pool();
  std::uniform_int_distribution<size_t> pick_p(0, ptoks.size() - 1);
  std::uniform_int_distribution<size_t> pick_s(0, pool.size() - 1);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::normal_distribution<double> hist_len(static_cast<double>(spec.content_len_mean), 3.0);
  std::normal_distribution<double> resp_len(static_cast<double>(spec.response_len_mean), 2.0);

  UserCorpus c;
  c.user_id = "persona" + std::to_string(spec.persona_index);
  std::vector<std::string> prof = {"my", "interests", "are"};
  for (int k = 0; k < 4; ++k) prof.push_back(ptoks[pick_p(rng)]);
  c.profile = join(prof);

  for (int h = 0; h < spec.n_history; ++h) {
    const int len = clamp_len(hist_len(rng), 8, 40);
    std::vector<std::string> words;
    for (int i = 0; i < len; ++i) {
      // positions 1 and 3 always carry persona tokens so every entry mentions
      // the persona at least twice
      const bool persona = (i == 1 || i == 3) || coin(rng) < 0.5;
      words.push_back(persona ? ptoks[pick_p(rng)] : pool[pick_s(rng)]);
    }
    c.history.push_back(join(words));
  }

  for (int q = 0; q < spec.n_qa; ++q) {
    QaPair pair;
    std::vector<std::string> qw = {"tell", "me", "about"};
    qw.push_back(ptoks[pick_p(rng)]);
    qw.push_back("and");
    qw.push_back(ptoks[pick_p(rng)]);
    pair.query = join(qw);
    const int len = clamp_len(resp_len(rng), 9, 50);
    std::vector<std::string> rw;
    for (int i = 0; i < len; ++i)
      rw.push_back(coin(rng) < 0.7 ? ptoks[pick_p(rng)] : pool[pick_s(rng)]);
    pair.response = join(rw);
    c.qa_pairs.push_back(std::move(pair));
  }
  assign_splits(c);
  return c;
}

double persona_coverage(const UserCorpus& corpus, const std::vector<std::string>& persona_tokens) {
  if (corpus.history.empty()) return 0.0;
  std::unordered_set<std::string> set(persona_tokens.begin(), persona_tokens.end());
  size_t covered = 0;
  for (const auto& h : corpus.history)
    for (const auto& w : split_words(h))
      if (set.count(w)) {
        ++covered;
        break;
      }
  return static_cast<double>(covered) / static_cast<double>(corpus.history.size());
}

void assign_splits(UserCorpus& corpus) {
  const size_t n = corpus.qa_pairs.size();
  if (n == 0) return;
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<uint64_t> keys(n);
  for (size_t i = 0; i < n; ++i)
    keys[i] = fnv1a_str(corpus.user_id + ":" + std::to_string(i));
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return keys[a] != keys[b] ? keys[a] < keys[b] : a < b;
  });
  const size_t n_train = static_cast<size_t>(0.7 * static_cast<double>(n));
  const size_t n_val = static_cast<size_t>(0.8 * static_cast<double>(n)) - n_train;
  for (size_t rank = 0; rank < n; ++rank) {
    Split s = rank < n_train            ? Split::kTrain
              : rank < n_train + n_val  ? Split::kValidation
                                        : Split::kTest;
    corpus.qa_pairs[order[rank]].split = s;
  }
}

std::vector<UserCorpus> ingest(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("ingest: cannot open " + path);
  std::vector<UserCorpus> users;
  std::unordered_map<std::string, size_t> index;
  std::string line;
  size_t line_no = 0, records = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw std::runtime_error("ingest: line " + std::to_string(line_no) + ": " + e.what());
    }
    for (const char* field : {"user_id", "query", "response"})
      if (!rec.contains(field))
        throw std::runtime_error("ingest: line " + std::to_string(line_no) +
                                 ": missing required field \"" + field + "\"");
    const std::string uid = rec["user_id"].get<std::string>();
    auto it = index.find(uid);
    if (it == index.end()) {
      index[uid] = users.size();
      UserCorpus c;
      c.user_id = uid;
      users.push_back(std::move(c));
      it = index.find(uid);
    }
    UserCorpus& c = users[it->second];
    if (c.profile.empty() && rec.contains("profile")) c.profile = rec["profile"].get<std::string>();
    if (c.history.empty() && rec.contains("history"))
      for (const auto& h : rec["history"]) c.history.push_back(h.get<std::string>());
    c.qa_pairs.push_back({rec["query"].get<std::string>(), rec["response"].get<std::string>()});
    ++records;
  }
  if (records == 0) throw std::runtime_error("ingest: no records in " + path);
  for (auto& u : users) assign_splits(u);
  return users;
}

void export_corpus(const std::vector<UserCorpus>& users, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("export: cannot open " + path);
  for (const auto& u : users) {
    for (const auto& p : u.qa_pairs) {
      json rec;
      rec["user_id"] = u.user_id;
      rec["profile"] = u.profile;
      rec["history"] = u.history;
      rec["query"] = p.query;
      rec["response"] = p.response;
      f << rec.dump() << '\n';
    }
  }
}

std::vector<int> format_history(const UserCorpus& corpus, const Tokenizer& tok, size_t budget) {
  std::vector<int> out;
  std::vector<std::vector<int>> entries;
  entries.push_back(tok.encode(corpus.profile));
  for (auto it = corpus.history.rbegin(); it != corpus.history.rend(); ++it)
    entries.push_back(tok.encode(*it));
  for (const auto& e : entries) {
    if (out.size() + e.size() > budget) break;
    out.insert(out.end(), e.begin(), e.end());
  }
  return out;
}

}  // namespace memlora
