#include "sgrpo/rewards.hpp"

#include <algorithm>
#include <cctype>

#include "sgrpo/textmetrics.hpp"

namespace sgrpo::rewards {
namespace {

std::vector<std::size_t> find_all(const std::string& text, const std::string& needle) {
  std::vector<std::size_t> positions;
  for (std::size_t pos = text.find(needle); pos != std::string::npos;
       pos = text.find(needle, pos + 1)) {
    positions.push_back(pos);
  }
  return positions;
}

std::string trim(const std::string& s) {
  std::size_t begin = 0, end = s.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(s[begin]))) ++begin;
  while (end > begin && std::isspace(static_cast<unsigned char>(s[end - 1]))) --end;
  return s.substr(begin, end - begin);
}

}  // namespace

const char* to_string(FormatErrorCode code) {
  switch (code) {
    case FormatErrorCode::MissingThink: return "MissingThink";
    case FormatErrorCode::MissingAnswer: return "MissingAnswer";
    case FormatErrorCode::BadOrder: return "BadOrder";
    case FormatErrorCode::MultiSpan: return "MultiSpan";
    case FormatErrorCode::AnswerNotSingleLetter: return "AnswerNotSingleLetter";
  }
  return "unknown";
}

const char* to_string(RewardMode mode) {
  switch (mode) {
    case RewardMode::ThreeStep: return "three_step";
    case RewardMode::TwoStep: return "two_step";
    case RewardMode::FlatBaseline: return "flat_baseline";
  }
  return "unknown";
}

std::optional<RewardMode> reward_mode_from_string(const std::string& name) {
  if (name == "three_step") return RewardMode::ThreeStep;
  if (name == "two_step") return RewardMode::TwoStep;
  if (name == "flat_baseline") return RewardMode::FlatBaseline;
  return std::nullopt;
}

char OptionScheme::letter_for(const domain::GroundTruth& truth) const {
  if (truth.attitude == domain::Attitude::Positive) return positive_letter;
  return category_letters[static_cast<int>(truth.category.value())];
}

std::optional<domain::FeedbackCategory> OptionScheme::category_for(char letter) const {
  for (int k = 0; k < domain::kNumCategories; ++k) {
    if (category_letters[k] == letter) return static_cast<domain::FeedbackCategory>(k);
  }
  return std::nullopt;
}

void OptionScheme::validate() const {
  std::array<char, 1 + domain::kNumCategories> all = {positive_letter, category_letters[0],
                                                      category_letters[1], category_letters[2]};
  for (char c : all) {
    if (c < 'A' || c > 'Z') throw ConfigError("option letters must be uppercase A-Z");
  }
  auto sorted = all;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw ConfigError("option letters collide");
  }
}

std::optional<ParsedResponse> try_parse_response(const std::string& text, FormatErrorCode* code) {
  const auto fail = [&](FormatErrorCode c) -> std::optional<ParsedResponse> {
    if (code != nullptr) *code = c;
    return std::nullopt;
  };

  static const std::string kThinkOpen = "<think>";
  static const std::string kThinkClose = "</think>";
  static const std::string kAnswerOpen = "<answer>";
  static const std::string kAnswerClose = "</answer>";

  const auto think_open = find_all(text, kThinkOpen);
  // "</think>" contains no "<think>" substring, and likewise for the answer
  // tags, so the four scans are independent.
  const auto think_close = find_all(text, kThinkClose);
  const auto answer_open = find_all(text, kAnswerOpen);
  const auto answer_close = find_all(text, kAnswerClose);

  if (think_open.empty() || think_close.empty()) return fail(FormatErrorCode::MissingThink);
  if (answer_open.empty() || answer_close.empty()) return fail(FormatErrorCode::MissingAnswer);
  if (think_open.size() > 1 || think_close.size() > 1 || answer_open.size() > 1 ||
      answer_close.size() > 1) {
    return fail(FormatErrorCode::MultiSpan);
  }

  const std::size_t t0 = think_open[0], t1 = think_close[0];
  const std::size_t a0 = answer_open[0], a1 = answer_close[0];
  if (!(t0 < t1 && t1 < a0 && a0 < a1)) return fail(FormatErrorCode::BadOrder);

  ParsedResponse parsed;
  parsed.think_text = text.substr(t0 + kThinkOpen.size(), t1 - (t0 + kThinkOpen.size()));
  const std::string answer =
      trim(text.substr(a0 + kAnswerOpen.size(), a1 - (a0 + kAnswerOpen.size())));
  if (answer.size() != 1 || answer[0] < 'A' || answer[0] > 'Z') {
    return fail(FormatErrorCode::AnswerNotSingleLetter);
  }
  parsed.answer_letter = answer[0];
  return parsed;
}

ParsedResponse parse_response(const std::string& text) {
  FormatErrorCode code = FormatErrorCode::MissingThink;
  auto parsed = try_parse_response(text, &code);
  if (!parsed) throw FormatError(code, text);
  return *parsed;
}

StepRewardBreakdown step_reward(const std::string& response, const domain::GroundTruth& truth,
                                const OptionScheme& scheme, RewardMode mode,
                                const RewardConfig& config, RewardWarnings* warnings) {
  scheme.validate();
  StepRewardBreakdown out;
  const auto parsed = try_parse_response(response);
  if (!parsed) return out;  // the format gate precedes every step

  out.format = config.format_value;
  const char letter = parsed->answer_letter;

  if (mode == RewardMode::FlatBaseline) {
    if (letter == scheme.letter_for(truth)) out.flat = 1.0;
    out.total = out.format + out.flat;
    return out;
  }

  const domain::Attitude predicted =
      letter == scheme.positive_letter ? domain::Attitude::Positive : domain::Attitude::Negative;
  if (predicted != truth.attitude) {
    out.total = out.format;
    return out;
  }
  out.judge = config.judge_value;
  if (truth.attitude == domain::Attitude::Positive) {
    out.total = out.format + out.judge;
    return out;
  }

  if (letter != scheme.category_letters[static_cast<int>(truth.category.value())]) {
    out.total = out.format + out.judge;
    return out;
  }
  out.category = config.class_value;

  if (mode == RewardMode::ThreeStep) {
    if (truth.reason_text.has_value()) {
      out.reason = text::reason_score(parsed->think_text, *truth.reason_text);
    } else if (warnings != nullptr) {
      ++warnings->missing_reference_reason;
    }
  }
  out.total = out.format + out.judge + out.category + out.reason;
  return out;
}

std::vector<RewardTableEntry> reward_truth_table(const OptionScheme& scheme, RewardMode mode,
                                                 const RewardConfig& config) {
  scheme.validate();
  static const std::string kReferenceReason = "sample reference reason";

  std::vector<domain::GroundTruth> truths;
  truths.push_back({domain::Attitude::Positive, std::nullopt, std::nullopt});
  for (int k = 0; k < domain::kNumCategories; ++k) {
    domain::GroundTruth t;
    t.attitude = domain::Attitude::Negative;
    t.category = static_cast<domain::FeedbackCategory>(k);
    t.reason_text = kReferenceReason;
    truths.push_back(t);
  }

  std::vector<char> letters = {scheme.positive_letter};
  for (char c : scheme.category_letters) letters.push_back(c);

  std::vector<RewardTableEntry> table;
  for (const auto& truth : truths) {
    for (char letter : letters) {
      for (bool valid : {true, false}) {
        RewardTableEntry entry;
        entry.attitude = truth.attitude;
        entry.category = truth.category;
        entry.letter = letter;
        entry.valid_format = valid;
        const std::string response =
            valid ? "<think>" + kReferenceReason + "</think><answer>" + letter + "</answer>"
                  : std::string("no spans at all");
        entry.total = step_reward(response, truth, scheme, mode, config).total;
        table.push_back(entry);
      }
    }
  }
  return table;
}

}  // namespace sgrpo::rewards
