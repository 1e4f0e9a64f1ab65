#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "sgrpo/domain.hpp"
#include "sgrpo/grpo.hpp"
#include "sgrpo/policy.hpp"
#include "sgrpo/rewards.hpp"

namespace sgrpo::envsim {

// Attribute grids are discrete so every episode's truth is exactly decodable
// from its prompt tokens.
struct WorldConfig {
  std::uint64_t seed = 7;
  int n_users = 100;
  int n_videos = 500;

  double tolerance_low = 0.3;
  double tolerance_high = 0.8;
  double p_tolerance_low = 0.5;

  double risk_zero = 0.0;
  double risk_low = 0.55;
  double risk_high = 0.95;
  double p_risk_low = 0.09;
  double p_risk_high = 0.09;

  double appeal_low = 0.15;
  double appeal_high = 0.75;
  double p_appeal_low = 0.35;
  double appeal_threshold = 0.4;

  int min_views_per_video = 12;  // keeps the exported dataset above the cohort floors
  double p_dislike_given_negative = 0.25;

  void validate() const;
};

struct SyntheticUser {
  domain::UserProfile profile;
  std::array<double, domain::kNumCategories> tolerance{};  // latent, revealed via history summary
  std::vector<std::string> psych_tags;                     // ground truth for profile analysis
};

struct SyntheticVideo {
  domain::VideoItem item;
  std::array<double, domain::kNumCategories> risk{};
  double appeal = 0.0;
};

struct EpisodeSpec {
  std::vector<int> prompt_tokens;
  domain::GroundTruth truth;
  rewards::RewardMode mode = rewards::RewardMode::ThreeStep;
  std::string user_id;
  std::string video_id;
};

struct World {
  WorldConfig config;
  std::vector<SyntheticUser> users;
  std::vector<SyntheticVideo> videos;
  std::vector<domain::InteractionRecord> interactions;
  std::vector<domain::ExplicitFeedback> explicit_feedback;

  const SyntheticUser& user_by_id(const std::string& id) const;
  const SyntheticVideo& video_by_id(const std::string& id) const;

 private:
  friend World gen_world(const WorldConfig&);
  std::unordered_map<std::string, std::size_t> user_index_;
  std::unordered_map<std::string, std::size_t> video_index_;
};

// The token inventory shared by the environment and the trainable policy.
policy::Vocabulary standard_vocabulary();

// The fixed reason templates keyed by category (and, for the boring case, by
// whether the interest/appeal path rather than a tolerance breach fired).
std::string canonical_reason(domain::FeedbackCategory category, bool offtopic_path = false);
std::string canonical_positive_think();

// Deterministic function of the config (seed included).
World gen_world(const WorldConfig& config);

// The reaction rule: Negative iff some risk component exceeds the user's
// tolerance, or the topic is outside the user's interests and the appeal is
// below the threshold. Pure in (user, video).
domain::GroundTruth reaction_truth(const WorldConfig& config, const SyntheticUser& user,
                                   const SyntheticVideo& video);

EpisodeSpec make_episode(const World& world, const SyntheticUser& user,
                         const SyntheticVideo& video, rewards::RewardMode mode);

// Canonical feature words, the prompt encoding contract: user words are
// [age, gender, hist0..2], pair words are [match, risk0..2, appeal].
std::vector<std::string> user_feature_words(const SyntheticUser& user);
std::vector<std::string> pair_feature_words(const WorldConfig& config, const SyntheticUser& user,
                                            const SyntheticVideo& video);

// Free-text renderings whose recognizable words reproduce the canonical
// feature sequence; used to fill agent prompt placeholders.
std::string describe_user(const SyntheticUser& user);
std::string describe_video_for_user(const WorldConfig& config, const SyntheticUser& user,
                                    const SyntheticVideo& video);

// Stable 80/20-style split on (user_id, video_id); true when the pair hashes
// into the held-out fraction.
bool in_eval_split(const std::string& user_id, const std::string& video_id,
                   double eval_fraction = 0.2);

// Ideal demonstrations drawn from the training split: canonical format,
// template reason as the think text, the correct letter as the answer.
std::vector<grpo::Demonstration> gen_demonstrations(const World& world, int n, std::uint64_t seed,
                                                    const rewards::OptionScheme& scheme = {});

// Observed behavior for a recommendation: play rate carries seeded noise on
// top of the noise-free truth; dislike marks explicit negative feedback.
struct ObservedReaction {
  double play_rate = 0.0;
  bool dislike = false;
};
ObservedReaction observe_reaction(const World& world, const SyntheticUser& user,
                                  const SyntheticVideo& video);

// Writes interactions.jsonl, users.jsonl, explicit_feedback.jsonl under dir.
// With inject_anomalies, appends records that only the anomaly filters drop;
// returns how many were injected.
std::size_t export_dataset(const World& world, const std::string& dir,
                           bool inject_anomalies = false);

double implicit_negative_rate(const World& world);
std::uint64_t world_digest(const World& world);

}  // namespace sgrpo::envsim
