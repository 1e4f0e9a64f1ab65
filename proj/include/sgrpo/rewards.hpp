#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "sgrpo/domain.hpp"
#include "sgrpo/errors.hpp"

namespace sgrpo::rewards {

// A well-formed model response: one <think>...</think> span followed by one
// <answer>...</answer> span whose trimmed content is a single option letter.
struct ParsedResponse {
  std::string think_text;
  char answer_letter = '\0';
};

enum class FormatErrorCode {
  MissingThink,
  MissingAnswer,
  BadOrder,
  MultiSpan,
  AnswerNotSingleLetter,
};

const char* to_string(FormatErrorCode code);

class FormatError : public Error {
 public:
  FormatError(FormatErrorCode code, std::string raw_text)
      : Error(std::string("malformed response: ") + to_string(code)),
        code_(code),
        raw_text_(std::move(raw_text)) {}
  FormatErrorCode code() const { return code_; }
  const std::string& raw_text() const { return raw_text_; }

 private:
  FormatErrorCode code_;
  std::string raw_text_;
};

// Joint letter encoding for the single-letter answer: one letter means "no
// negative feedback", the others name a feedback category. The binary
// judgment is derived from which side of that partition the letter falls on.
struct OptionScheme {
  char positive_letter = 'A';
  std::array<char, domain::kNumCategories> category_letters = {'B', 'C', 'D'};

  char letter_for(const domain::GroundTruth& truth) const;
  std::optional<domain::FeedbackCategory> category_for(char letter) const;
  void validate() const;  // throws ConfigError on colliding letters
};

enum class RewardMode {
  ThreeStep,     // judge + class + reason, for reason-annotated data
  TwoStep,       // judge + class only, for data without reference reasons
  FlatBaseline,  // format + all-or-nothing exact letter match (ablation)
};

const char* to_string(RewardMode mode);
std::optional<RewardMode> reward_mode_from_string(const std::string& name);

struct RewardConfig {
  double format_value = 0.5;
  double judge_value = 0.5;
  double class_value = 1.0;
};

// Gated components: judge > 0 requires format > 0, category > 0 requires
// judge > 0, reason > 0 requires category > 0. `flat` is used only by the
// FlatBaseline mode. total is always the sum of the components.
struct StepRewardBreakdown {
  double format = 0.0;
  double judge = 0.0;
  double category = 0.0;
  double reason = 0.0;
  double flat = 0.0;
  double total = 0.0;
};

struct RewardWarnings {
  std::size_t missing_reference_reason = 0;
};

// Non-throwing parse; on failure returns nullopt and stores the reason code
// through `code` when provided.
std::optional<ParsedResponse> try_parse_response(const std::string& text,
                                                 FormatErrorCode* code = nullptr);

// Throwing variant of try_parse_response.
ParsedResponse parse_response(const std::string& text);

// The stepwise reward ladder. An unparseable response scores zero overall;
// otherwise rewards unlock in order format -> judge -> class -> reason, and a
// wrong step stops the ladder.
StepRewardBreakdown step_reward(const std::string& response, const domain::GroundTruth& truth,
                                const OptionScheme& scheme, RewardMode mode,
                                const RewardConfig& config, RewardWarnings* warnings = nullptr);

// One row of the exhaustive reward table over truth patterns and answers.
// ThreeStep rows assume a think span identical to the reference reason, so
// totals are the maxima attainable per cell.
struct RewardTableEntry {
  domain::Attitude attitude = domain::Attitude::Positive;
  std::optional<domain::FeedbackCategory> category;
  char letter = '\0';
  bool valid_format = true;
  double total = 0.0;
};

std::vector<RewardTableEntry> reward_truth_table(const OptionScheme& scheme, RewardMode mode,
                                                 const RewardConfig& config);

}  // namespace sgrpo::rewards
