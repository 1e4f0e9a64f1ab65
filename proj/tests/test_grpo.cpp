#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>

#include "sgrpo/errors.hpp"
#include "sgrpo/grpo.hpp"
#include "sgrpo/policy.hpp"
#include "sgrpo/rng.hpp"

using namespace sgrpo;
using namespace sgrpo::grpo;

namespace {

policy::Vocabulary tiny_vocab() {
  return policy::Vocabulary::standard(2, {"w1", "w2"}, {"c1", "c2"});
}

RolloutGroup sampled_group(const policy::AutoregressivePolicy& p, int g, std::uint64_t seed,
                           const std::vector<double>& rewards) {
  const std::vector<int> prompt = {p.vocab().bos(), p.vocab().id_of("c1")};
  RolloutGroup group;
  group.prompt_tokens = prompt;
  for (int i = 0; i < g; ++i) {
    auto s = p.sample(prompt, 6, 1.0, Rng::mix(seed, i));
    Rollout r;
    r.prompt_tokens = prompt;
    r.response_tokens = std::move(s.tokens);
    r.logp_old = std::move(s.logp);
    r.logp_ref = p.logprobs(prompt, r.response_tokens);
    r.reward = rewards[i];
    group.rollouts.push_back(std::move(r));
  }
  return group;
}

}  // namespace

TEST_CASE("advantage normalization frozen examples") {
  SUBCASE("two high, two low") {
    const auto a = normalize_advantages(std::vector<double>{1, 0, 0, 1}, 1e-8);
    CHECK(a[0] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(a[1] == doctest::Approx(-1.0).epsilon(1e-6));
    CHECK(a[2] == doctest::Approx(-1.0).epsilon(1e-6));
    CHECK(a[3] == doctest::Approx(1.0).epsilon(1e-6));
  }
  SUBCASE("constant groups give zero advantages") {
    for (double a : normalize_advantages(std::vector<double>{2.5, 2.5, 2.5}, 1e-8)) {
      CHECK(a == 0.0);
    }
  }
  SUBCASE("a pair normalizes to +-1") {
    const auto a = normalize_advantages(std::vector<double>{3, 1}, 1e-8);
    CHECK(a[0] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(a[1] == doctest::Approx(-1.0).epsilon(1e-6));
  }
  SUBCASE("groups below two are rejected") {
    CHECK_THROWS_AS(normalize_advantages(std::vector<double>{1.0}, 1e-8), GroupTooSmallError);
  }
}

TEST_CASE("advantage normalization properties over random groups") {
  Rng rng(11);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<double> rewards(8);
    for (auto& r : rewards) r = 0.25 * static_cast<double>(rng.uniform_int(13));
    bool constant = true;
    for (double r : rewards) constant &= (r == rewards[0]);
    if (constant) continue;

    const auto a = normalize_advantages(rewards, 1e-8);
    const double mean = std::accumulate(a.begin(), a.end(), 0.0) / 8.0;
    double var = 0.0;
    for (double v : a) var += (v - mean) * (v - mean);
    var /= 8.0;
    CHECK(std::abs(mean) < 1e-9);
    CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-4);

    // dyadic rewards and a power-of-two group make the shift exactly neutral
    std::vector<double> shifted = rewards;
    for (auto& r : shifted) r += 2.5;
    const auto a_shift = normalize_advantages(shifted, 1e-8);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a_shift[i] == a[i]);

    std::vector<double> scaled = rewards;
    for (auto& r : scaled) r *= 3.0;
    const auto a_scale = normalize_advantages(scaled, 1e-8);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a_scale[i] == doctest::Approx(a[i]).epsilon(1e-6));
    }
  }
}

TEST_CASE("k3 estimator frozen values and properties") {
  SUBCASE("identical log-probs give exactly zero") {
    const auto kl = kl_per_token(std::vector<double>{-1.0, -2.5}, std::vector<double>{-1.0, -2.5});
    CHECK(kl[0] == 0.0);
    CHECK(kl[1] == 0.0);
  }
  SUBCASE("half-nat differences match the closed form") {
    // d = logp_ref - logp_theta = 0.5 and -0.5
    const auto kl = kl_per_token(std::vector<double>{-1.5, -1.0}, std::vector<double>{-1.0, -1.5});
    CHECK(kl[0] == doctest::Approx(0.14872127070012819).epsilon(1e-12));
    CHECK(kl[1] == doctest::Approx(0.10653065971263342).epsilon(1e-12));
  }
  SUBCASE("nonnegative everywhere, zero only at equality") {
    Rng rng(13);
    for (int trial = 0; trial < 20000; ++trial) {
      const double lp_theta = -rng.uniform_in(0.0, 8.0);
      const double lp_ref = -rng.uniform_in(0.0, 8.0);
      const double k3 = kl_per_token(std::vector<double>{lp_theta},
                                     std::vector<double>{lp_ref})[0];
      CHECK(k3 >= 0.0);
      if (lp_theta != lp_ref) CHECK(k3 > 0.0);
    }
  }
  SUBCASE("length mismatch is rejected") {
    CHECK_THROWS_AS(kl_per_token(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}),
                    ConfigError);
  }
}

TEST_CASE("clipped surrogate frozen examples") {
  CHECK(clipped_surrogate(1.0, 2.7, 0.2) == doctest::Approx(2.7));
  CHECK(clipped_surrogate(1.0, -0.3, 0.5) == doctest::Approx(-0.3));
  CHECK(clipped_surrogate(1.5, 1.0, 0.2) == doctest::Approx(1.2));
  CHECK(clipped_surrogate(0.5, -1.0, 0.2) == doctest::Approx(-0.8));
  CHECK(clipped_surrogate(0.5, 1.0, 0.2) == doctest::Approx(0.5));
  CHECK(clipped_surrogate(2.0, -1.0, 0.2) == doctest::Approx(-2.0));
}

TEST_CASE("on-policy objective equals the mean advantage") {
  policy::GatedRecurrentPolicy p(tiny_vocab(), 6, 3);
  const std::vector<double> rewards = {2.0, 1.0, 0.0, 3.0};
  RolloutGroup group = sampled_group(p, 4, 19, rewards);
  const auto advantages = normalize_advantages(rewards, 1e-8);

  OptimizerConfig config;
  config.kl_beta = 0.0;
  const auto result = grpo_objective(p, group, advantages, config);
  const double mean_adv = std::accumulate(advantages.begin(), advantages.end(), 0.0) / 4.0;
  CHECK(result.objective == doctest::Approx(mean_adv).epsilon(1e-12));
  CHECK(result.mean_kl == doctest::Approx(0.0));
  CHECK(result.clip_fraction == doctest::Approx(0.0));

  SUBCASE("zero advantages zero the objective and gradient") {
    const std::vector<double> zeros(4, 0.0);
    const auto r0 = grpo_objective(p, group, zeros, config);
    CHECK(r0.objective == 0.0);
    for (double g : r0.gradient) CHECK(g == 0.0);
  }
}

TEST_CASE("step updates move sampled high-advantage responses up") {
  policy::GatedRecurrentPolicy p(tiny_vocab(), 6, 4);
  // one clearly best rollout
  RolloutGroup group = sampled_group(p, 4, 23, {3.0, 0.0, 0.0, 0.0});

  OptimizerConfig config;
  config.learning_rate = 0.05;
  config.weight_decay = 0.0;
  config.kl_beta = 0.0;

  const auto before = p.logprobs(group.prompt_tokens, group.rollouts[0].response_tokens);
  grpo_step(p, {&group, 1}, config);
  const auto after = p.logprobs(group.prompt_tokens, group.rollouts[0].response_tokens);
  const double before_sum = std::accumulate(before.begin(), before.end(), 0.0);
  const double after_sum = std::accumulate(after.begin(), after.end(), 0.0);
  CHECK(after_sum > before_sum);
}

TEST_CASE("degenerate steps: zero gradient, zero learning rate") {
  policy::GatedRecurrentPolicy p(tiny_vocab(), 6, 5);
  RolloutGroup group = sampled_group(p, 4, 29, {1.0, 1.0, 1.0, 1.0});  // constant rewards

  SUBCASE("equal rewards leave only weight decay") {
    OptimizerConfig config;
    config.learning_rate = 0.1;
    config.weight_decay = 0.01;
    config.kl_beta = 0.0;
    const auto before = p.parameters();
    grpo_step(p, {&group, 1}, config);
    const auto after = p.parameters();
    for (std::size_t i = 0; i < before.size(); ++i) {
      CHECK(after[i] == doctest::Approx(before[i] * (1.0 - 0.1 * 0.01)).epsilon(1e-12));
    }
  }
  SUBCASE("zero learning rate is a no-op") {
    OptimizerConfig config;
    config.learning_rate = 0.0;
    const auto before = p.parameters();
    grpo_step(p, {&group, 1}, config);
    CHECK(p.parameters() == before);
  }
}

TEST_CASE("inner-epoch reuse applies extra updates when asked") {
  policy::GatedRecurrentPolicy single(tiny_vocab(), 6, 8);
  policy::GatedRecurrentPolicy reused(tiny_vocab(), 6, 8);
  RolloutGroup group = sampled_group(single, 4, 37, {2.0, 0.0, 1.0, 0.5});

  OptimizerConfig config;
  config.learning_rate = 0.05;
  config.kl_beta = 0.0;
  grpo_step(single, {&group, 1}, config);
  config.epochs = 3;
  grpo_step(reused, {&group, 1}, config);
  CHECK(single.parameters() != reused.parameters());
}

TEST_CASE("non-finite ratios raise NumericalError") {
  policy::GatedRecurrentPolicy p(tiny_vocab(), 6, 6);
  RolloutGroup group = sampled_group(p, 2, 31, {1.0, 0.0});
  group.rollouts[0].logp_old[0] = -5000.0;  // exp(logp_theta + 5000) overflows
  OptimizerConfig config;
  CHECK_THROWS_AS(grpo_objective(p, group, std::vector<double>{1.0, -1.0}, config),
                  NumericalError);
}

TEST_CASE("warm-up edge cases") {
  policy::GatedRecurrentPolicy p(tiny_vocab(), 6, 7);
  OptimizerConfig config;
  SUBCASE("empty demonstration set changes nothing") {
    const auto before = p.parameters();
    CHECK_FALSE(sft_warmup(p, {}, config, 1).has_value());
    CHECK(p.parameters() == before);
  }
  SUBCASE("unknown target tokens surface as UnknownTokenError") {
    std::vector<Demonstration> demos = {{{0}, {9999}}};
    config.learning_rate = 0.1;
    CHECK_THROWS_AS(sft_warmup(p, demos, config, 1), UnknownTokenError);
  }
}

TEST_CASE("discounted return follows the shifted-index convention") {
  const std::vector<double> ones = {1.0, 1.0, 1.0};
  CHECK(discounted_return(ones, 0.5, 0) == doctest::Approx(0.875));
  CHECK(discounted_return(ones, 0.0, 0) == doctest::Approx(0.0));
  CHECK(discounted_return(ones, 1.0, 0) == doctest::Approx(3.0));
  CHECK(discounted_return(ones, 0.5, 2) == doctest::Approx(0.5));  // one reward left after t
  CHECK(discounted_return(std::vector<double>{0.0, 2.0, 4.0}, 0.5, 1) == doctest::Approx(2.0));
  CHECK_THROWS_AS(discounted_return(ones, 0.5, 3), ConfigError);
}

TEST_CASE("optimizer config validation") {
  OptimizerConfig config;
  config.clip_epsilon = 1.5;
  CHECK_THROWS_AS(config.validate(), ConfigError);
  config = {};
  config.group_size = 1;
  CHECK_THROWS_AS(config.validate(), ConfigError);
  config = {};
  config.std_epsilon = 0.0;
  CHECK_THROWS_AS(config.validate(), ConfigError);
  config = {};
  CHECK_NOTHROW(config.validate());
}
