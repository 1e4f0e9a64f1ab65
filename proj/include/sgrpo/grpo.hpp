#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "sgrpo/policy.hpp"

namespace sgrpo::grpo {

// One sampled response with the log-probabilities needed by the objective:
// under the sampling policy (old) and under the frozen reference.
struct Rollout {
  std::vector<int> prompt_tokens;
  std::vector<int> response_tokens;
  std::vector<double> logp_old;
  std::vector<double> logp_ref;
  double reward = 0.0;
};

// G responses to the same prompt, the unit of advantage normalization.
struct RolloutGroup {
  std::vector<int> prompt_tokens;
  std::vector<Rollout> rollouts;
};

struct OptimizerConfig {
  int group_size = 8;
  double clip_epsilon = 0.2;
  double kl_beta = 0.04;
  double learning_rate = 1e-5;  // appendix preset; 1e-6 is the conservative alternative
  double weight_decay = 0.01;
  int epochs = 1;
  int max_generation_length = 64;  // 1024 at full scale, 64 suffices here
  double std_epsilon = 1e-8;
  double discount = 1.0;
  bool adaptive = false;  // moment-based update instead of plain ascent

  void validate() const;
};

using AdvantageVector = std::vector<double>;

// A_i = (R_i - mean) / (population std + std_epsilon). Identical rewards give
// all-zero advantages. Throws GroupTooSmallError for fewer than 2 rewards.
AdvantageVector normalize_advantages(std::span<const double> rewards, double std_epsilon);

// Per-token k3 estimate: exp(d) - d - 1 with d = logp_ref - logp_theta.
// Nonnegative pointwise, zero exactly at equality.
std::vector<double> kl_per_token(std::span<const double> logp_theta,
                                 std::span<const double> logp_ref);

// min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A). Requires ratio > 0.
double clipped_surrogate(double ratio, double advantage, double epsilon);

struct ObjectiveResult {
  double objective = 0.0;
  std::vector<double> gradient;
  double mean_kl = 0.0;        // plain token mean of k3
  double clip_fraction = 0.0;  // tokens where the clipped branch was strictly lower
  std::size_t token_count = 0;
};

// Token-level clipped surrogate with per-token KL penalty:
//   (1/G) sum_i (1/|o_i|) sum_t [ min(r A_i, clip(r) A_i) - beta * k3 ]
// and its exact gradient, treating logp_old, logp_ref and advantages as
// constants. Throws NumericalError on non-finite ratios.
ObjectiveResult grpo_objective(const policy::AutoregressivePolicy& policy,
                               const RolloutGroup& group, std::span<const double> advantages,
                               const OptimizerConfig& config);

struct StepDiagnostics {
  double objective = 0.0;
  double mean_reward = 0.0;
  double mean_kl = 0.0;
  double clip_fraction = 0.0;
};

// Gradient-ascent driver. Adaptive mode keeps per-parameter moments, so reuse
// one optimizer instance across steps.
class GrpoOptimizer {
 public:
  explicit GrpoOptimizer(OptimizerConfig config);

  // Normalizes advantages from the stored rewards, averages group gradients,
  // applies one parameter update with decoupled weight decay.
  StepDiagnostics step(policy::AutoregressivePolicy& policy,
                       std::span<const RolloutGroup> groups);

  const OptimizerConfig& config() const { return config_; }

 private:
  OptimizerConfig config_;
  std::vector<double> m_, v_;
  std::size_t step_count_ = 0;
};

// Single update with a transient optimizer; convenience for plain-mode use.
StepDiagnostics grpo_step(policy::AutoregressivePolicy& policy,
                          std::span<const RolloutGroup> groups, const OptimizerConfig& config);

struct Demonstration {
  std::vector<int> prompt_tokens;
  std::vector<int> response_tokens;
};

// Teacher-forced warm-up: per-demonstration SGD on mean per-token NLL for
// config.epochs passes, order shuffled per epoch from `seed`. Returns the
// final mean NLL over the set, or nullopt (policy untouched) when given no
// demonstrations.
std::optional<double> sft_warmup(policy::AutoregressivePolicy& policy,
                                 std::span<const Demonstration> demonstrations,
                                 const OptimizerConfig& config, std::uint64_t seed);

// Mean per-token NLL of the demonstration set under the current policy.
double mean_nll(const policy::AutoregressivePolicy& policy,
                std::span<const Demonstration> demonstrations);

// G_t = sum_{k=t+1..T} gamma^(k-t) * r_k: the first future reward is already
// discounted once.
double discounted_return(std::span<const double> rewards, double gamma, std::size_t t);

}  // namespace sgrpo::grpo
