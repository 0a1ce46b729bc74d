#pragma once

#include <string>
#include <vector>

namespace memlora {

// Lowercased word sequence used by all text metrics.
using TokenSeq = std::vector<std::string>;

TokenSeq metric_tokens(const std::string& text);

// Unigram-overlap F1 with clipped multiset counts. Throws on empty input.
double rouge_1(const TokenSeq& candidate, const TokenSeq& reference);

// LCS-based F1 (balanced, beta = 1). Throws on empty input.
double rouge_l(const TokenSeq& candidate, const TokenSeq& reference);

// Set-based unigram F1 between a response and the user's own content
// (profile + history union). Throws on empty input.
double persona_f1(const TokenSeq& response, const TokenSeq& user_content);

size_t lcs_length(const TokenSeq& a, const TokenSeq& b);

}  // namespace memlora
