#include "memlora/tokenizer.hpp"

#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace memlora {

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) {
        out.push_back(cur);
        cur.clear();
      }
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

Tokenizer::Tokenizer() {
  add_word("<pad>");
  add_word("<unk>");
  add_word("<eos>");
}

void Tokenizer::add_word(const std::string& word) {
  if (ids_.count(word)) return;
  ids_[word] = static_cast<int>(words_.size());
  words_.push_back(word);
}

void Tokenizer::add_text(const std::string& text) {
  for (const auto& w : split_words(text)) add_word(w);
}

std::vector<int> Tokenizer::encode(const std::string& text) const {
  std::vector<int> out;
  for (const auto& w : split_words(text)) {
    auto it = ids_.find(w);
    out.push_back(it == ids_.end() ? kUnk : it->second);
  }
  return out;
}

std::string Tokenizer::decode(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) {
    if (id == kPad || id == kUnk || id == kEos) continue;
    if (id < 0 || id >= vocab_size())
      throw std::out_of_range("decode: id " + std::to_string(id) + " outside vocabulary");
    if (!out.empty()) out.push_back(' ');
    out += words_[static_cast<size_t>(id)];
  }
  return out;
}

void Tokenizer::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("tokenizer save: cannot open " + path);
  for (const auto& w : words_) f << w << '\n';
}

Tokenizer Tokenizer::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("tokenizer load: cannot open " + path);
  Tokenizer t;
  std::string line;
  int idx = 0;
  while (std::getline(f, line)) {
    if (idx >= 3) t.add_word(line);  // first three lines are the specials
    ++idx;
  }
  return t;
}

}  // namespace memlora
