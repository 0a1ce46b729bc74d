#include "memlora/metrics.hpp"

#include <stdexcept>
#include <doctest.h>

#include <random>

using namespace memlora;

namespace {

// Recursive LCS used only as an independent check (memoized DP below differs
// structurally from the production rolling-array version).
size_t lcs_oracle(const TokenSeq& a, const TokenSeq& b) {
  std::vector<std::vector<size_t>> dp(a.size() + 1, std::vector<size_t>(b.size() + 1, 0));
  for (size_t i = a.size(); i-- > 0;)
    for (size_t j = b.size(); j-- > 0;)
      dp[i][j] = a[i] == b[j] ? dp[i + 1][j + 1] + 1 : std::max(dp[i + 1][j], dp[i][j + 1]);
  return dp[0][0];
}

TokenSeq random_seq(std::mt19937_64& rng, int min_len, int max_len) {
  static const std::vector<std::string> words = {"a", "b", "c", "d", "e", "f", "g", "h"};
  std::uniform_int_distribution<int> len(min_len, max_len);
  std::uniform_int_distribution<size_t> pick(0, words.size() - 1);
  TokenSeq out;
  const int n = len(rng);
  for (int i = 0; i < n; ++i) out.push_back(words[pick(rng)]);
  return out;
}

}  // namespace

TEST_CASE("rouge_1 basics") {
  TokenSeq same = {"x", "y", "z"};
  CHECK(rouge_1(same, same) == doctest::Approx(1.0));
  CHECK(rouge_1({"a", "b"}, {"c", "d"}) == doctest::Approx(0.0));
  // clipped multiset: cand "a b b", ref "a b c" -> overlap 2
  CHECK(rouge_1({"a", "b", "b"}, {"a", "b", "c"}) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("rouge_1 empty input throws") {
  CHECK_THROWS_AS(rouge_1({}, {"a"}), std::invalid_argument);
  CHECK_THROWS_AS(rouge_1({"a"}, {}), std::invalid_argument);
}

TEST_CASE("rouge_l basics") {
  TokenSeq same = {"x", "y", "z"};
  CHECK(rouge_l(same, same) == doctest::Approx(1.0));
  CHECK(rouge_l({"the", "cat", "ran"}, {"the", "cat", "sat"}) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("rouge_l matches independent DP on random pairs") {
  std::mt19937_64 rng(42);
  for (int t = 0; t < 100; ++t) {
    TokenSeq a = random_seq(rng, 1, 20), b = random_seq(rng, 1, 20);
    const double lcs = static_cast<double>(lcs_oracle(a, b));
    const double p = lcs / a.size(), r = lcs / b.size();
    const double expected = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
    CHECK(rouge_l(a, b) == doctest::Approx(expected).epsilon(1e-15));
    CHECK(lcs_length(a, b) == lcs_oracle(a, b));
  }
}

TEST_CASE("lcs length bounded by shorter sequence") {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 50; ++t) {
    TokenSeq a = random_seq(rng, 1, 15), b = random_seq(rng, 1, 15);
    CHECK(lcs_length(a, b) <= std::min(a.size(), b.size()));
  }
}

TEST_CASE("persona_f1 worked example") {
  // user {diabetes, insulin, walking}, response {insulin, dosage}
  CHECK(persona_f1({"insulin", "dosage"}, {"diabetes", "insulin", "walking"}) ==
        doctest::Approx(0.4));
}

TEST_CASE("persona_f1 extremes") {
  TokenSeq user = {"u", "v", "w"};
  CHECK(persona_f1({"u", "v", "w"}, user) == doctest::Approx(1.0));
  CHECK(persona_f1({"x", "y"}, user) == doctest::Approx(0.0));
}

TEST_CASE("metrics symmetry at equal lengths and self-score one") {
  std::mt19937_64 rng(12);
  for (int t = 0; t < 30; ++t) {
    TokenSeq a = random_seq(rng, 5, 5), b = random_seq(rng, 5, 5);
    CHECK(rouge_1(a, b) == doctest::Approx(rouge_1(b, a)));
    CHECK(rouge_l(a, b) == doctest::Approx(rouge_l(b, a)));
    CHECK(rouge_1(a, a) == doctest::Approx(1.0));
    CHECK(rouge_l(a, a) == doctest::Approx(1.0));
  }
}
