#include "memlora/metrics.hpp"

#include "memlora/tokenizer.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace memlora {

namespace {

double f1(double precision, double recall) {
  if (precision + recall <= 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

void require_nonempty(const TokenSeq& a, const TokenSeq& b, const char* name) {
  if (a.empty() || b.empty()) throw std::invalid_argument(std::string(name) + ": empty input");
}

}  // namespace

TokenSeq metric_tokens(const std::string& text) { return split_words(text); }

double rouge_1(const TokenSeq& candidate, const TokenSeq& reference) {
  require_nonempty(candidate, reference, "rouge_1");
  std::unordered_map<std::string, int> ref_counts;
  for (const auto& w : reference) ++ref_counts[w];
  int overlap = 0;
  for (const auto& w : candidate) {
    auto it = ref_counts.find(w);
    if (it != ref_counts.end() && it->second > 0) {
      ++overlap;
      --it->second;
    }
  }
  const double p = static_cast<double>(overlap) / static_cast<double>(candidate.size());
  const double r = static_cast<double>(overlap) / static_cast<double>(reference.size());
  return f1(p, r);
}

size_t lcs_length(const TokenSeq& a, const TokenSeq& b) {
  std::vector<size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (size_t i = 1; i <= a.size(); ++i) {
    for (size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(const TokenSeq& candidate, const TokenSeq& reference) {
  require_nonempty(candidate, reference, "rouge_l");
  const double lcs = static_cast<double>(lcs_length(candidate, reference));
  const double p = lcs / static_cast<double>(candidate.size());
  const double r = lcs / static_cast<double>(reference.size());
  return f1(p, r);
}

double persona_f1(const TokenSeq& response, const TokenSeq& user_content) {
  require_nonempty(response, user_content, "persona_f1");
  std::unordered_set<std::string> resp(response.begin(), response.end());
  std::unordered_set<std::string> user(user_content.begin(), user_content.end());
  size_t overlap = 0;
  for (const auto& w : resp)
    if (user.count(w)) ++overlap;
  const double p = static_cast<double>(overlap) / static_cast<double>(resp.size());
  const double r = static_cast<double>(overlap) / static_cast<double>(user.size());
  return f1(p, r);
}

}  // namespace memlora
