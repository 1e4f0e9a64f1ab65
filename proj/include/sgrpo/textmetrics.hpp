#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace sgrpo::text {

// Lowercased word tokens in input order. Tokenization is a pure function of
// the input string: ASCII letters and digits form tokens, every other byte
// separates them.
struct TokenizedText {
  std::vector<std::string> tokens;

  bool operator==(const TokenizedText&) const = default;
};

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

TokenizedText tokenize(std::string_view input);

// Clipped n-gram overlap. A side with zero n-grams yields an all-zero score.
RougeScore rouge_n(const TokenizedText& candidate, const TokenizedText& reference, int n);

// Longest-common-subsequence variant. An empty side yields an all-zero score.
RougeScore rouge_l(const TokenizedText& candidate, const TokenizedText& reference);

// Mean of the ROUGE-1, ROUGE-2 and ROUGE-L f1 values on the tokenized inputs;
// the reward signal for explanation quality. Always in [0, 1].
double reason_score(std::string_view candidate_think, std::string_view reference_reason);

}  // namespace sgrpo::text
