#pragma once

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>

#include "sgrpo/domain.hpp"
#include "sgrpo/rewards.hpp"

namespace sgrpo::eval {

// "Positive class" throughout is the Negative-feedback class: tp counts
// correctly flagged negative-feedback instances.
struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::size_t total() const { return tp + fp + fn + tn; }
};

struct BinaryMetrics {
  double accuracy = 0.0;
  double precision = 0.0;  // 0 by convention on an empty denominator
  double recall = 0.0;
  double f1 = 0.0;
};

BinaryMetrics binary_metrics(const ConfusionCounts& counts);  // EmptyEvalError when total == 0

struct ClassInstance {
  domain::GroundTruth truth;
  std::optional<char> letter;  // empty means the response did not parse
};

// Fraction of ground-truth-Negative instances whose letter names the true
// category; a wrong binary judgment counts as a wrong class. Throws
// EmptyEvalError without any Negative instance.
double class_accuracy(std::span<const ClassInstance> instances,
                      const rewards::OptionScheme& scheme);

// Variant conditioned on a correct Negative judgment (0 when none exists);
// reported alongside, the unconditioned value is canonical.
double class_accuracy_given_correct(std::span<const ClassInstance> instances,
                                    const rewards::OptionScheme& scheme);

struct ReasonInstance {
  bool judged_correctly = false;
  std::string explanation;
  std::string reference_reason;
};

using ReasonJudge = std::function<double(const std::string& explanation,
                                         const std::string& reference)>;

// Mean relevance over all instances; wrongly judged instances contribute 0 to
// the numerator but stay in the denominator. Null judge selects the rouge
// proxy.
double reasoning_relevance(std::span<const ReasonInstance> instances,
                           const ReasonJudge& judge = {});

struct CategoryBreakdown {
  std::size_t n = 0;
  std::size_t class_correct = 0;
};

struct EvalReport {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::optional<double> class_acc;                // present iff negatives were evaluated
  std::optional<double> class_acc_given_correct;  // companion variant
  std::optional<double> reasoning_score;          // explicit mode only
  std::size_t n_instances = 0;
  std::size_t parse_failures = 0;
  ConfusionCounts counts;
  std::array<CategoryBreakdown, domain::kNumCategories> per_category{};
};

struct DeploymentArm {
  double avg_play_rate = 0.0;
  double fast_skip_rate = 0.0;
  double dislike_rate = 0.0;
  std::size_t n_videos = 0;
};

struct DeploymentReport {
  DeploymentArm baseline;
  DeploymentArm treatment;
  std::size_t filtered_out = 0;
  std::size_t errors = 0;
};

}  // namespace sgrpo::eval
