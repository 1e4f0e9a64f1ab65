#include "sgrpo/textmetrics.hpp"

#include <algorithm>
#include <cctype>
#include <map>

namespace sgrpo::text {
namespace {

bool is_word_byte(unsigned char c) { return std::isalnum(c) != 0; }

double f1_of(double precision, double recall) {
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

}  // namespace

TokenizedText tokenize(std::string_view input) {
  TokenizedText out;
  std::string current;
  for (unsigned char c : input) {
    if (is_word_byte(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      out.tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) out.tokens.push_back(std::move(current));
  return out;
}

RougeScore rouge_n(const TokenizedText& candidate, const TokenizedText& reference, int n) {
  RougeScore score;
  const auto ngram_counts = [n](const TokenizedText& t) {
    std::map<std::vector<std::string>, int> counts;
    if (static_cast<int>(t.tokens.size()) >= n) {
      for (std::size_t i = 0; i + n <= t.tokens.size(); ++i) {
        counts[std::vector<std::string>(t.tokens.begin() + i, t.tokens.begin() + i + n)]++;
      }
    }
    return counts;
  };
  const auto cand = ngram_counts(candidate);
  const auto ref = ngram_counts(reference);
  const auto total = [](const auto& m) {
    std::size_t sum = 0;
    for (const auto& [gram, count] : m) sum += count;
    return sum;
  };
  const std::size_t cand_total = total(cand);
  const std::size_t ref_total = total(ref);
  if (cand_total == 0 || ref_total == 0) return score;

  // Clipped overlap: repeated candidate n-grams count at most as often as
  // they occur in the reference.
  std::size_t overlap = 0;
  for (const auto& [gram, count] : cand) {
    auto it = ref.find(gram);
    if (it != ref.end()) overlap += std::min(count, it->second);
  }
  score.precision = static_cast<double>(overlap) / static_cast<double>(cand_total);
  score.recall = static_cast<double>(overlap) / static_cast<double>(ref_total);
  score.f1 = f1_of(score.precision, score.recall);
  return score;
}

RougeScore rouge_l(const TokenizedText& candidate, const TokenizedText& reference) {
  RougeScore score;
  const std::size_t m = candidate.tokens.size();
  const std::size_t r = reference.tokens.size();
  if (m == 0 || r == 0) return score;

  std::vector<std::size_t> prev(r + 1, 0), row(r + 1, 0);
  for (std::size_t i = 1; i <= m; ++i) {
    for (std::size_t j = 1; j <= r; ++j) {
      if (candidate.tokens[i - 1] == reference.tokens[j - 1]) {
        row[j] = prev[j - 1] + 1;
      } else {
        row[j] = std::max(prev[j], row[j - 1]);
      }
    }
    std::swap(prev, row);
  }
  const double lcs = static_cast<double>(prev[r]);
  score.precision = lcs / static_cast<double>(m);
  score.recall = lcs / static_cast<double>(r);
  score.f1 = f1_of(score.precision, score.recall);
  return score;
}

double reason_score(std::string_view candidate_think, std::string_view reference_reason) {
  const TokenizedText cand = tokenize(candidate_think);
  const TokenizedText ref = tokenize(reference_reason);
  const double r1 = rouge_n(cand, ref, 1).f1;
  const double r2 = rouge_n(cand, ref, 2).f1;
  const double rl = rouge_l(cand, ref).f1;
  return (r1 + r2 + rl) / 3.0;
}

}  // namespace sgrpo::text
