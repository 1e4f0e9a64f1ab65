#include "sgrpo/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sgrpo/errors.hpp"
#include "sgrpo/rng.hpp"

namespace sgrpo::grpo {
namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

}  // namespace

void OptimizerConfig::validate() const {
  if (group_size < 2) throw ConfigError("group_size must be >= 2");
  if (clip_epsilon <= 0.0 || clip_epsilon >= 1.0) throw ConfigError("clip_epsilon must be in (0,1)");
  if (kl_beta < 0.0) throw ConfigError("kl_beta must be >= 0");
  if (std_epsilon <= 0.0) throw ConfigError("std_epsilon must be > 0");
  if (learning_rate < 0.0) throw ConfigError("learning_rate must be >= 0");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (max_generation_length < 1) throw ConfigError("max_generation_length must be >= 1");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (discount < 0.0 || discount > 1.0) throw ConfigError("discount must be in [0,1]");
}

AdvantageVector normalize_advantages(std::span<const double> rewards, double std_epsilon) {
  const std::size_t g = rewards.size();
  if (g < 2) throw GroupTooSmallError("advantage normalization needs a group of >= 2");
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / static_cast<double>(g);
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= static_cast<double>(g);  // population variance
  const double stddev = std::sqrt(var);
  AdvantageVector out(g);
  for (std::size_t i = 0; i < g; ++i) out[i] = (rewards[i] - mean) / (stddev + std_epsilon);
  return out;
}

std::vector<double> kl_per_token(std::span<const double> logp_theta,
                                 std::span<const double> logp_ref) {
  if (logp_theta.size() != logp_ref.size()) throw ConfigError("kl_per_token: length mismatch");
  std::vector<double> out(logp_theta.size());
  for (std::size_t t = 0; t < out.size(); ++t) {
    const double d = logp_ref[t] - logp_theta[t];
    out[t] = std::expm1(d) - d;  // exp(d) - d - 1, stable near zero
  }
  return out;
}

double clipped_surrogate(double ratio, double advantage, double epsilon) {
  const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
  return std::min(ratio * advantage, clipped * advantage);
}

ObjectiveResult grpo_objective(const policy::AutoregressivePolicy& policy,
                               const RolloutGroup& group, std::span<const double> advantages,
                               const OptimizerConfig& config) {
  const std::size_t g = group.rollouts.size();
  if (g < 2) throw GroupTooSmallError("grpo_objective needs a group of >= 2 rollouts");
  if (advantages.size() != g) throw ConfigError("advantages size must match group size");

  ObjectiveResult result;
  result.gradient.assign(policy.parameter_count(), 0.0);
  double kl_sum = 0.0;
  std::size_t clipped_tokens = 0;

  for (std::size_t i = 0; i < g; ++i) {
    const Rollout& rollout = group.rollouts[i];
    const std::size_t len = rollout.response_tokens.size();
    if (len == 0) throw ConfigError("rollout with empty response");
    if (rollout.logp_old.size() != len || rollout.logp_ref.size() != len) {
      throw ConfigError("rollout log-prob vectors must match response length");
    }
    const std::vector<double> logp_theta =
        policy.logprobs(rollout.prompt_tokens, rollout.response_tokens);
    const double scale = 1.0 / (static_cast<double>(g) * static_cast<double>(len));
    const double a = advantages[i];

    std::vector<double> weights(len, 0.0);
    for (std::size_t t = 0; t < len; ++t) {
      const double ratio = std::exp(logp_theta[t] - rollout.logp_old[t]);
      if (!std::isfinite(ratio)) throw NumericalError("non-finite policy ratio");
      const double clipped = std::clamp(ratio, 1.0 - config.clip_epsilon, 1.0 + config.clip_epsilon);
      const double raw_term = ratio * a;
      const double clip_term = clipped * a;
      const double d = rollout.logp_ref[t] - logp_theta[t];
      const double k3 = std::expm1(d) - d;
      result.objective += scale * (std::min(raw_term, clip_term) - config.kl_beta * k3);
      kl_sum += k3;
      // Gradient weight on dlogp: the surrogate contributes ratio*A on the
      // unclipped branch and nothing once the clipped constant wins; the KL
      // term contributes beta * (exp(d) - 1).
      double w = config.kl_beta * std::expm1(d);
      if (raw_term <= clip_term) w += ratio * a;
      else ++clipped_tokens;
      weights[t] = scale * w;
    }
    policy.accumulate_weighted_grad(rollout.prompt_tokens, rollout.response_tokens, weights,
                                    result.gradient);
    result.token_count += len;
  }
  result.mean_kl = kl_sum / static_cast<double>(result.token_count);
  result.clip_fraction =
      static_cast<double>(clipped_tokens) / static_cast<double>(result.token_count);
  return result;
}

GrpoOptimizer::GrpoOptimizer(OptimizerConfig config) : config_(config) { config_.validate(); }

StepDiagnostics GrpoOptimizer::step(policy::AutoregressivePolicy& policy,
                                    std::span<const RolloutGroup> groups) {
  if (groups.empty()) throw ConfigError("grpo step needs at least one group");
  StepDiagnostics diag;

  // config_.epochs > 1 reuses the sampled batch; the ratios drift off 1 after
  // the first update and the clip starts doing work.
  for (int inner = 0; inner < std::max(1, config_.epochs); ++inner) {
    StepDiagnostics pass;
    std::vector<double> grad(policy.parameter_count(), 0.0);
    std::size_t reward_count = 0;
    for (const RolloutGroup& group : groups) {
      std::vector<double> rewards;
      rewards.reserve(group.rollouts.size());
      for (const Rollout& r : group.rollouts) {
        rewards.push_back(r.reward);
        pass.mean_reward += r.reward;
        ++reward_count;
      }
      const AdvantageVector advantages = normalize_advantages(rewards, config_.std_epsilon);
      ObjectiveResult obj = grpo_objective(policy, group, advantages, config_);
      pass.objective += obj.objective;
      pass.mean_kl += obj.mean_kl;
      pass.clip_fraction += obj.clip_fraction;
      for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += obj.gradient[k];
    }
    const double n = static_cast<double>(groups.size());
    pass.objective /= n;
    pass.mean_kl /= n;
    pass.clip_fraction /= n;
    pass.mean_reward /= static_cast<double>(reward_count);
    for (double& gk : grad) gk /= n;

    std::vector<double> params = policy.parameters();
    const double lr = config_.learning_rate;
    if (config_.adaptive) {
      if (m_.size() != params.size()) {
        m_.assign(params.size(), 0.0);
        v_.assign(params.size(), 0.0);
      }
      ++step_count_;
      const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(step_count_));
      const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(step_count_));
      for (std::size_t k = 0; k < params.size(); ++k) {
        m_[k] = kAdamBeta1 * m_[k] + (1.0 - kAdamBeta1) * grad[k];
        v_[k] = kAdamBeta2 * v_[k] + (1.0 - kAdamBeta2) * grad[k] * grad[k];
        const double m_hat = m_[k] / bc1;
        const double v_hat = v_[k] / bc2;
        params[k] +=
            lr * m_hat / (std::sqrt(v_hat) + kAdamEps) - lr * config_.weight_decay * params[k];
      }
    } else {
      for (std::size_t k = 0; k < params.size(); ++k) {
        params[k] += lr * grad[k] - lr * config_.weight_decay * params[k];
      }
    }
    policy.set_parameters(params);
    if (inner == 0) diag = pass;  // report the on-policy pass
  }
  return diag;
}

StepDiagnostics grpo_step(policy::AutoregressivePolicy& policy,
                          std::span<const RolloutGroup> groups, const OptimizerConfig& config) {
  GrpoOptimizer optimizer(config);
  return optimizer.step(policy, groups);
}

double mean_nll(const policy::AutoregressivePolicy& policy,
                std::span<const Demonstration> demonstrations) {
  double total = 0.0;
  std::size_t tokens = 0;
  for (const Demonstration& demo : demonstrations) {
    for (double lp : policy.logprobs(demo.prompt_tokens, demo.response_tokens)) {
      total -= lp;
      ++tokens;
    }
  }
  if (tokens == 0) throw ConfigError("mean_nll over empty demonstration set");
  return total / static_cast<double>(tokens);
}

std::optional<double> sft_warmup(policy::AutoregressivePolicy& policy,
                                 std::span<const Demonstration> demonstrations,
                                 const OptimizerConfig& config, std::uint64_t seed) {
  config.validate();
  if (demonstrations.empty()) return std::nullopt;

  std::vector<std::size_t> order(demonstrations.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> m, v;
  std::size_t adam_t = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng rng(Rng::mix(seed, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.uniform_int(i)]);
    }
    for (std::size_t idx : order) {
      const Demonstration& demo = demonstrations[idx];
      const std::size_t len = demo.response_tokens.size();
      if (len == 0) continue;
      // Ascent on mean log-probability == descent on mean NLL.
      std::vector<double> weights(len, 1.0 / static_cast<double>(len));
      std::vector<double> grad(policy.parameter_count(), 0.0);
      policy.accumulate_weighted_grad(demo.prompt_tokens, demo.response_tokens, weights, grad);
      std::vector<double> params = policy.parameters();
      const double lr = config.learning_rate;
      if (config.adaptive) {
        if (m.size() != params.size()) {
          m.assign(params.size(), 0.0);
          v.assign(params.size(), 0.0);
        }
        ++adam_t;
        const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(adam_t));
        const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(adam_t));
        for (std::size_t k = 0; k < params.size(); ++k) {
          m[k] = kAdamBeta1 * m[k] + (1.0 - kAdamBeta1) * grad[k];
          v[k] = kAdamBeta2 * v[k] + (1.0 - kAdamBeta2) * grad[k] * grad[k];
          params[k] += lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + kAdamEps) -
                       lr * config.weight_decay * params[k];
        }
      } else {
        for (std::size_t k = 0; k < params.size(); ++k) {
          params[k] += lr * grad[k] - lr * config.weight_decay * params[k];
        }
      }
      policy.set_parameters(params);
    }
  }
  return mean_nll(policy, demonstrations);
}

double discounted_return(std::span<const double> rewards, double gamma, std::size_t t) {
  if (t >= rewards.size()) throw ConfigError("discounted_return: t out of range");
  double total = 0.0;
  double factor = 1.0;
  for (std::size_t k = t + 1; k <= rewards.size(); ++k) {
    factor *= gamma;
    total += factor * rewards[k - 1];
  }
  return total;
}

}  // namespace sgrpo::grpo
