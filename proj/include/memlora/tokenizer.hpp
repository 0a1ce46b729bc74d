#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace memlora {

// Lowercases and splits on whitespace. Shared by the LM and the text metrics.
std::vector<std::string> split_words(const std::string& text);

// Word-level tokenizer with a corpus-built vocabulary and three specials.
class Tokenizer {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kEos = 2;

  Tokenizer();

  // Adds every word of `text` to the vocabulary (insertion order = id order).
  void add_text(const std::string& text);
  void add_word(const std::string& word);

  int vocab_size() const { return static_cast<int>(words_.size()); }
  std::vector<int> encode(const std::string& text) const;  // unknown words -> kUnk
  std::string decode(const std::vector<int>& ids) const;   // specials skipped
  const std::string& word(int id) const { return words_.at(static_cast<size_t>(id)); }

  // One token per line, line index = id.
  void save(const std::string& path) const;
  static Tokenizer load(const std::string& path);

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> ids_;
};

}  // namespace memlora
