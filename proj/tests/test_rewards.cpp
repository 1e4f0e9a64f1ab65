#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <map>
#include <tuple>

#include "sgrpo/rewards.hpp"
#include "sgrpo/rng.hpp"

using namespace sgrpo;
using namespace sgrpo::rewards;
using domain::Attitude;
using domain::FeedbackCategory;
using domain::GroundTruth;

namespace {

GroundTruth positive_truth() { return {Attitude::Positive, std::nullopt, std::nullopt}; }

GroundTruth negative_truth(int category, std::optional<std::string> reason = "ref reason") {
  GroundTruth t;
  t.attitude = Attitude::Negative;
  t.category = static_cast<FeedbackCategory>(category);
  t.reason_text = std::move(reason);
  return t;
}

std::string valid_response(char letter, const std::string& think = "ref reason") {
  return "<think>" + think + "</think><answer>" + std::string(1, letter) + "</answer>";
}

// Hand-written expectation, independent of the ladder implementation: a pure
// lookup for the default scheme (A positive, B/C/D categories) and default
// values, with the think span equal to the reference reason.
double expected_total(RewardMode mode, const GroundTruth& truth, char letter, bool valid) {
  if (!valid) return 0.0;
  const char truth_letter =
      truth.attitude == Attitude::Positive ? 'A' : static_cast<char>('B' + static_cast<int>(*truth.category));
  if (mode == RewardMode::FlatBaseline) return letter == truth_letter ? 1.5 : 0.5;
  if (truth.attitude == Attitude::Positive) return letter == 'A' ? 1.0 : 0.5;
  // negative truth
  if (letter == 'A') return 0.5;
  if (letter != truth_letter) return 1.0;
  return mode == RewardMode::ThreeStep ? 3.0 : 2.0;
}

}  // namespace

TEST_CASE("parse_response accepts the canonical form and spaced variants") {
  const ParsedResponse p = parse_response("<think>x</think><answer>B</answer>");
  CHECK(p.think_text == "x");
  CHECK(p.answer_letter == 'B');

  const ParsedResponse spaced = parse_response("<think> why not </think> <answer> C </answer>");
  CHECK(spaced.think_text == " why not ");
  CHECK(spaced.answer_letter == 'C');

  // surrounding text is tolerated as long as the spans are in order
  CHECK(parse_response("preamble <think>a</think> mid <answer>D</answer> tail").answer_letter ==
        'D');
}

TEST_CASE("parse_response reports a reason code per failure shape") {
  const auto code_of = [](const std::string& text) {
    FormatErrorCode code{};
    CHECK_FALSE(try_parse_response(text, &code).has_value());
    return code;
  };
  CHECK(code_of("<answer>B</answer>") == FormatErrorCode::MissingThink);
  CHECK(code_of("<think>x</think>") == FormatErrorCode::MissingAnswer);
  CHECK(code_of("<think>x<answer>B</answer>") == FormatErrorCode::MissingThink);
  CHECK(code_of("<answer>B</answer><think>x</think>") == FormatErrorCode::BadOrder);
  CHECK(code_of("<think>x<answer>B</answer></think>") == FormatErrorCode::BadOrder);
  CHECK(code_of("<think>x</think><think>y</think><answer>B</answer>") ==
        FormatErrorCode::MultiSpan);
  CHECK(code_of("<think>x</think><answer>maybe B</answer>") ==
        FormatErrorCode::AnswerNotSingleLetter);
  CHECK(code_of("<think>x</think><answer>b</answer>") == FormatErrorCode::AnswerNotSingleLetter);
  CHECK(code_of("<think>x</think><answer></answer>") == FormatErrorCode::AnswerNotSingleLetter);

  try {
    parse_response("<answer>B</answer><think>x</think>");
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.code() == FormatErrorCode::BadOrder);
    CHECK(e.raw_text() == "<answer>B</answer><think>x</think>");
  }
}

TEST_CASE("step reward frozen examples") {
  const OptionScheme scheme;
  const RewardConfig config;

  SUBCASE("wrong judgment stops at the format reward") {
    const auto b = step_reward(valid_response('A'), negative_truth(1), scheme,
                               RewardMode::ThreeStep, config);
    CHECK(b.total == doctest::Approx(0.5));
    CHECK(b.judge == 0.0);
  }
  SUBCASE("correct positive judgment ends the ladder") {
    const auto b =
        step_reward(valid_response('A'), positive_truth(), scheme, RewardMode::ThreeStep, config);
    CHECK(b.total == doctest::Approx(1.0));
  }
  SUBCASE("full ladder with an identical reason") {
    const auto b = step_reward(valid_response('C', "dull plotline"),
                               negative_truth(1, "dull plotline"), scheme, RewardMode::ThreeStep,
                               config);
    CHECK(b.format == doctest::Approx(0.5));
    CHECK(b.judge == doctest::Approx(0.5));
    CHECK(b.category == doctest::Approx(1.0));
    CHECK(b.reason == doctest::Approx(1.0));
    CHECK(b.total == doctest::Approx(3.0));
  }
  SUBCASE("right judgment, wrong category") {
    const auto b = step_reward(valid_response('D'), negative_truth(1), scheme,
                               RewardMode::ThreeStep, config);
    CHECK(b.total == doctest::Approx(1.0));
  }
  SUBCASE("unparseable response scores zero in every mode") {
    for (RewardMode mode :
         {RewardMode::ThreeStep, RewardMode::TwoStep, RewardMode::FlatBaseline}) {
      CHECK(step_reward("no tags here", negative_truth(0), scheme, mode, config).total == 0.0);
    }
  }
  SUBCASE("missing reference reason counts a warning") {
    RewardWarnings warnings;
    const auto b = step_reward(valid_response('C'), negative_truth(1, std::nullopt), scheme,
                               RewardMode::ThreeStep, config, &warnings);
    CHECK(b.reason == 0.0);
    CHECK(b.total == doctest::Approx(2.0));
    CHECK(warnings.missing_reference_reason == 1);
  }
  SUBCASE("colliding scheme letters are a config error") {
    OptionScheme bad;
    bad.category_letters = {'A', 'C', 'D'};
    CHECK_THROWS_AS(
        step_reward(valid_response('A'), positive_truth(), bad, RewardMode::TwoStep, config),
        ConfigError);
  }
}

TEST_CASE("reward table matches the hand-written table cell by cell") {
  const OptionScheme scheme;
  const RewardConfig config;
  for (RewardMode mode : {RewardMode::ThreeStep, RewardMode::TwoStep, RewardMode::FlatBaseline}) {
    const auto table = reward_truth_table(scheme, mode, config);
    CHECK(table.size() == 4 * 4 * 2);  // truths x letters x {valid, invalid}
    for (const auto& entry : table) {
      GroundTruth truth;
      truth.attitude = entry.attitude;
      truth.category = entry.category;
      if (entry.category) truth.reason_text = "sample reference reason";
      CHECK_MESSAGE(
          entry.total ==
              doctest::Approx(expected_total(mode, truth, entry.letter, entry.valid_format)),
          "mode=", to_string(mode), " letter=", entry.letter, " valid=", entry.valid_format);
    }
  }
}

TEST_CASE("table maxima per mode") {
  const OptionScheme scheme;
  const RewardConfig config;
  const auto max_total = [&](RewardMode mode) {
    double best = 0.0;
    for (const auto& e : reward_truth_table(scheme, mode, config)) best = std::max(best, e.total);
    return best;
  };
  CHECK(max_total(RewardMode::ThreeStep) == doctest::Approx(3.0));
  CHECK(max_total(RewardMode::TwoStep) == doctest::Approx(2.0));
  CHECK(max_total(RewardMode::FlatBaseline) == doctest::Approx(1.5));
}

TEST_CASE("gating invariants hold on randomized inputs") {
  const OptionScheme scheme;
  const RewardConfig config;
  Rng rng(4242);
  const std::vector<std::string> think_pool = {"", "dull plotline", "ref reason",
                                               "graphic imagery unsettles eyes", "zzz qqq"};
  for (int trial = 0; trial < 5000; ++trial) {
    const GroundTruth truth = rng.chance(0.5)
                                  ? positive_truth()
                                  : negative_truth(static_cast<int>(rng.uniform_int(3)),
                                                   rng.chance(0.7)
                                                       ? std::optional<std::string>("ref reason")
                                                       : std::nullopt);
    const char letter = static_cast<char>('A' + rng.uniform_int(6));  // includes non-scheme E, F
    std::string response;
    switch (rng.uniform_int(5)) {
      case 0: response = "格式 broken besides words"; break;
      case 1: response = "<think>x</think>"; break;
      case 2: response = "<answer>" + std::string(1, letter) + "</answer><think>y</think>"; break;
      default: response = valid_response(letter, think_pool[rng.uniform_int(think_pool.size())]);
    }
    const RewardMode mode = static_cast<RewardMode>(rng.uniform_int(3));
    const auto b = step_reward(response, truth, scheme, mode, config);

    if (b.judge > 0) CHECK(b.format > 0);
    if (b.category > 0) CHECK(b.judge > 0);
    if (b.reason > 0) CHECK(b.category > 0);
    if (mode == RewardMode::TwoStep) CHECK(b.reason == 0.0);
    CHECK(b.total == doctest::Approx(b.format + b.judge + b.category + b.reason + b.flat));
    CHECK(b.total >= 0.0);
    CHECK(b.total <= 3.0 + 1e-12);
  }
}

TEST_CASE("an unrelated reason never raises the total") {
  const OptionScheme scheme;
  const RewardConfig config;
  const auto matched = step_reward(valid_response('B', "upsetting themes clash beliefs"),
                                   negative_truth(0, "upsetting themes clash beliefs"), scheme,
                                   RewardMode::ThreeStep, config);
  const auto unrelated = step_reward(valid_response('B', "upsetting themes clash beliefs"),
                                     negative_truth(0, "completely different words entirely"),
                                     scheme, RewardMode::ThreeStep, config);
  CHECK(unrelated.total <= matched.total);
}

TEST_CASE("flat baseline ignores the think span") {
  const OptionScheme scheme;
  const RewardConfig config;
  const auto a = step_reward(valid_response('B', "one think"), negative_truth(0), scheme,
                             RewardMode::FlatBaseline, config);
  const auto b = step_reward(valid_response('B', "another think entirely"), negative_truth(0),
                             scheme, RewardMode::FlatBaseline, config);
  CHECK(a.total == b.total);
  CHECK(a.flat == doctest::Approx(1.0));
  // and stays below the shaped maxima for the same correct answer
  CHECK(a.total <= 2.0);
}
