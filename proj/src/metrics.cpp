#include "sgrpo/metrics.hpp"

#include "sgrpo/errors.hpp"
#include "sgrpo/textmetrics.hpp"

namespace sgrpo::eval {

BinaryMetrics binary_metrics(const ConfusionCounts& counts) {
  if (counts.total() == 0) throw EmptyEvalError("binary_metrics over zero instances");
  BinaryMetrics m;
  m.accuracy = static_cast<double>(counts.tp + counts.tn) / static_cast<double>(counts.total());
  m.precision = counts.tp + counts.fp == 0
                    ? 0.0
                    : static_cast<double>(counts.tp) / static_cast<double>(counts.tp + counts.fp);
  m.recall = counts.tp + counts.fn == 0
                 ? 0.0
                 : static_cast<double>(counts.tp) / static_cast<double>(counts.tp + counts.fn);
  m.f1 = m.precision + m.recall == 0.0 ? 0.0
                                       : 2.0 * m.precision * m.recall / (m.precision + m.recall);
  return m;
}

double class_accuracy(std::span<const ClassInstance> instances,
                      const rewards::OptionScheme& scheme) {
  std::size_t negatives = 0, correct = 0;
  for (const auto& inst : instances) {
    if (inst.truth.attitude != domain::Attitude::Negative) continue;
    ++negatives;
    const char expected = scheme.category_letters[static_cast<int>(inst.truth.category.value())];
    if (inst.letter && *inst.letter == expected) ++correct;
  }
  if (negatives == 0) throw EmptyEvalError("class_accuracy without Negative instances");
  return static_cast<double>(correct) / static_cast<double>(negatives);
}

double class_accuracy_given_correct(std::span<const ClassInstance> instances,
                                    const rewards::OptionScheme& scheme) {
  std::size_t judged_negative = 0, correct = 0;
  for (const auto& inst : instances) {
    if (inst.truth.attitude != domain::Attitude::Negative) continue;
    if (!inst.letter || *inst.letter == scheme.positive_letter) continue;
    ++judged_negative;
    const char expected = scheme.category_letters[static_cast<int>(inst.truth.category.value())];
    if (*inst.letter == expected) ++correct;
  }
  if (judged_negative == 0) return 0.0;
  return static_cast<double>(correct) / static_cast<double>(judged_negative);
}

double reasoning_relevance(std::span<const ReasonInstance> instances, const ReasonJudge& judge) {
  if (instances.empty()) throw EmptyEvalError("reasoning_relevance over zero instances");
  double total = 0.0;
  for (const auto& inst : instances) {
    if (!inst.judged_correctly) continue;
    total += judge ? judge(inst.explanation, inst.reference_reason)
                   : text::reason_score(inst.explanation, inst.reference_reason);
  }
  return total / static_cast<double>(instances.size());
}

}  // namespace sgrpo::eval
