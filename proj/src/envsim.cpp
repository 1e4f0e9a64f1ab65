#include "sgrpo/envsim.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "sgrpo/errors.hpp"
#include "sgrpo/rng.hpp"
#include "sgrpo/textmetrics.hpp"

namespace sgrpo::envsim {
namespace {

using domain::Attitude;
using domain::FeedbackCategory;

const std::vector<std::string> kTopics = {"sports", "news", "food", "games", "music", "travel"};
const std::vector<std::string> kOccupations = {"teacher", "engineer", "clerk",
                                               "chef",    "student",  "nurse"};

const std::vector<std::string> kReasonWords = {
    "upsetting", "themes",  "clash",     "beliefs", "dull",      "plotline",
    "lacks",     "spark",   "unfamiliar", "subject", "graphic",   "imagery",
    "unsettles", "eyes",    "enjoyable",  "fits",    "taste"};

const std::vector<std::string> kContextWords = {
    "ageyoung", "agemid",  "agesenior", "gmale",   "gfemale", "gother",
    "hist0lo",  "hist0hi", "hist1lo",   "hist1hi", "hist2lo", "hist2hi",
    "likestopic", "offtopic",
    "risk0z",   "risk0lo", "risk0hi",   "risk1z",  "risk1lo", "risk1hi",
    "risk2z",   "risk2lo", "risk2hi",   "appeallo", "appealhi"};

const std::array<std::string, domain::kNumCategories> kPsychTags = {
    "values_sensitive", "novelty_seeking", "visually_squeamish"};

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t pair_seed(std::uint64_t world_seed, const std::string& user_id,
                        const std::string& video_id) {
  return Rng::mix(Rng::mix(world_seed, fnv1a(user_id)), fnv1a(video_id));
}

std::string reason_template(FeedbackCategory category, bool offtopic_path) {
  switch (category) {
    case FeedbackCategory::NegativeOrConflicting: return "upsetting themes clash beliefs";
    case FeedbackCategory::BoringUnappealing:
      return offtopic_path ? "unfamiliar subject dull plotline" : "dull plotline lacks spark";
    case FeedbackCategory::VisuallyDisturbing: return "graphic imagery unsettles eyes";
  }
  return "";
}

constexpr const char* kPositiveThink = "enjoyable fits taste";

struct ReactionDetail {
  domain::GroundTruth truth;
  bool offtopic_path = false;
};

ReactionDetail reaction_detail(const WorldConfig& config, const SyntheticUser& user,
                               const SyntheticVideo& video) {
  ReactionDetail out;
  int breach = -1;
  double best = 0.0;
  for (int k = 0; k < domain::kNumCategories; ++k) {
    const double margin = video.risk[k] - user.tolerance[k];
    if (margin > 0.0 && (breach < 0 || margin > best)) {  // ties keep the lowest index
      breach = k;
      best = margin;
    }
  }
  const bool topic_match = std::find(user.profile.interests.begin(), user.profile.interests.end(),
                                     video.item.topic) != user.profile.interests.end();
  if (breach >= 0) {
    out.truth.attitude = Attitude::Negative;
    out.truth.category = static_cast<FeedbackCategory>(breach);
  } else if (!topic_match && video.appeal < config.appeal_threshold) {
    out.truth.attitude = Attitude::Negative;
    out.truth.category = FeedbackCategory::BoringUnappealing;
    out.offtopic_path = true;
  } else {
    out.truth.attitude = Attitude::Positive;
    return out;
  }
  out.truth.reason_text = reason_template(*out.truth.category, out.offtopic_path);
  return out;
}

std::string age_word(int age) {
  if (age < 30) return "ageyoung";
  if (age < 55) return "agemid";
  return "agesenior";
}

std::string gender_word(domain::Gender g) {
  switch (g) {
    case domain::Gender::Male: return "gmale";
    case domain::Gender::Female: return "gfemale";
    case domain::Gender::Unspecified: return "gother";
  }
  return "gother";
}

std::string risk_word(const WorldConfig& config, int k, double risk) {
  const std::string base = "risk" + std::to_string(k);
  if (risk >= config.risk_high) return base + "hi";
  if (risk >= config.risk_low) return base + "lo";
  return base + "z";
}

}  // namespace

void WorldConfig::validate() const {
  if (n_users < 1 || n_videos < 1) throw ConfigError("world needs at least one user and one video");
  if (appeal_threshold < 0.0 || appeal_threshold > 1.0) {
    throw ConfigError("appeal_threshold must be in [0,1]");
  }
  if (p_risk_low + p_risk_high > 1.0) throw ConfigError("risk level probabilities exceed 1");
}

std::string canonical_reason(FeedbackCategory category, bool offtopic_path) {
  return reason_template(category, offtopic_path);
}

std::string canonical_positive_think() { return kPositiveThink; }

const SyntheticUser& World::user_by_id(const std::string& id) const {
  auto it = user_index_.find(id);
  if (it == user_index_.end()) throw Error("unknown user '" + id + "'");
  return users[it->second];
}

const SyntheticVideo& World::video_by_id(const std::string& id) const {
  auto it = video_index_.find(id);
  if (it == video_index_.end()) throw Error("unknown video '" + id + "'");
  return videos[it->second];
}

policy::Vocabulary standard_vocabulary() {
  return policy::Vocabulary::standard(4, kReasonWords, kContextWords);
}

domain::GroundTruth reaction_truth(const WorldConfig& config, const SyntheticUser& user,
                                   const SyntheticVideo& video) {
  return reaction_detail(config, user, video).truth;
}

ObservedReaction observe_reaction(const World& world, const SyntheticUser& user,
                                  const SyntheticVideo& video) {
  const domain::GroundTruth truth = reaction_truth(world.config, user, video);
  Rng rng(pair_seed(world.config.seed, user.profile.user_id, video.item.video_id));
  ObservedReaction out;
  if (truth.attitude == Attitude::Negative) {
    // Noise can push a disliked video's play rate above the fast-skip line,
    // but a liked video never dips below it.
    out.play_rate = std::clamp(rng.normal(0.15, 0.12), 0.01, 1.0);
    out.dislike = rng.chance(world.config.p_dislike_given_negative);
  } else {
    out.play_rate = std::clamp(rng.normal(0.85, 0.20), 0.32, 1.0);
  }
  // Keep the implied watch time above the accidental-tap floor.
  out.play_rate = std::max(out.play_rate, 0.501 / video.item.duration_s);
  return out;
}

std::vector<std::string> user_feature_words(const SyntheticUser& user) {
  std::vector<std::string> words;
  words.push_back(age_word(user.profile.age));
  words.push_back(gender_word(user.profile.gender));
  for (int k = 0; k < domain::kNumCategories; ++k) {
    // History summary: a user's observed skip pattern on risky videos tracks
    // their tolerance bucket, which is what a profile pass would infer.
    const bool low = user.tolerance[k] <= 0.5;
    words.push_back("hist" + std::to_string(k) + (low ? "lo" : "hi"));
  }
  return words;
}

std::vector<std::string> pair_feature_words(const WorldConfig& config, const SyntheticUser& user,
                                            const SyntheticVideo& video) {
  std::vector<std::string> words;
  const bool topic_match = std::find(user.profile.interests.begin(), user.profile.interests.end(),
                                     video.item.topic) != user.profile.interests.end();
  words.push_back(topic_match ? "likestopic" : "offtopic");
  for (int k = 0; k < domain::kNumCategories; ++k) {
    words.push_back(risk_word(config, k, video.risk[k]));
  }
  words.push_back(video.appeal < config.appeal_threshold ? "appeallo" : "appealhi");
  return words;
}

std::string describe_user(const SyntheticUser& user) {
  std::string out;
  for (const auto& w : user_feature_words(user)) {
    if (!out.empty()) out.push_back(' ');
    out += w;
  }
  out += "; interests:";
  for (const auto& tag : user.profile.interests) out += " " + tag;
  out += "; occupation: " + user.profile.occupation;
  return out;
}

std::string describe_video_for_user(const WorldConfig& config, const SyntheticUser& user,
                                    const SyntheticVideo& video) {
  std::string out;
  for (const auto& w : pair_feature_words(config, user, video)) {
    if (!out.empty()) out.push_back(' ');
    out += w;
  }
  out += "; \"" + video.item.title + "\"";
  return out;
}

EpisodeSpec make_episode(const World& world, const SyntheticUser& user,
                         const SyntheticVideo& video, rewards::RewardMode mode) {
  static const policy::Vocabulary vocab = standard_vocabulary();
  EpisodeSpec episode;
  episode.user_id = user.profile.user_id;
  episode.video_id = video.item.video_id;
  episode.mode = mode;
  episode.truth = reaction_truth(world.config, user, video);
  if (mode == rewards::RewardMode::TwoStep) {
    episode.truth.reason_text.reset();  // implicit data carries no reference reason
  }
  episode.prompt_tokens.push_back(vocab.bos());
  for (const auto& w : user_feature_words(user)) episode.prompt_tokens.push_back(vocab.id_of(w));
  for (const auto& w : pair_feature_words(world.config, user, video)) {
    episode.prompt_tokens.push_back(vocab.id_of(w));
  }
  return episode;
}

bool in_eval_split(const std::string& user_id, const std::string& video_id, double eval_fraction) {
  const std::uint64_t h = fnv1a(user_id + "\x1f" + video_id);
  return static_cast<double>(h % 10000) < eval_fraction * 10000.0;
}

World gen_world(const WorldConfig& config) {
  config.validate();
  World world;
  world.config = config;
  Rng rng(config.seed);

  world.users.reserve(config.n_users);
  for (int i = 0; i < config.n_users; ++i) {
    SyntheticUser user;
    char buf[16];
    std::snprintf(buf, sizeof(buf), "u%04d", i);
    user.profile.user_id = buf;
    user.profile.age = 16 + static_cast<int>(rng.uniform_int(64));
    const double g = rng.uniform();
    user.profile.gender = g < 0.45   ? domain::Gender::Male
                          : g < 0.90 ? domain::Gender::Female
                                     : domain::Gender::Unspecified;
    user.profile.occupation = kOccupations[rng.uniform_int(kOccupations.size())];
    std::vector<std::string> topics = kTopics;
    for (std::size_t j = topics.size(); j > 1; --j) std::swap(topics[j - 1], topics[rng.uniform_int(j)]);
    const std::size_t n_interests = 2 + rng.uniform_int(3);
    user.profile.interests.assign(topics.begin(), topics.begin() + n_interests);
    for (int k = 0; k < domain::kNumCategories; ++k) {
      const bool low = rng.chance(config.p_tolerance_low);
      user.tolerance[k] = low ? config.tolerance_low : config.tolerance_high;
      if (low) user.psych_tags.push_back(kPsychTags[k]);
    }
    if (user.psych_tags.empty()) user.psych_tags.push_back("easygoing");
    world.user_index_[user.profile.user_id] = world.users.size();
    world.users.push_back(std::move(user));
  }

  world.videos.reserve(config.n_videos);
  for (int i = 0; i < config.n_videos; ++i) {
    SyntheticVideo video;
    char buf[16];
    std::snprintf(buf, sizeof(buf), "v%04d", i);
    video.item.video_id = buf;
    video.item.topic = kTopics[rng.uniform_int(kTopics.size())];
    video.item.title = video.item.topic + " clip " + std::to_string(i);
    const double du = rng.uniform();
    video.item.duration_s = du < 0.70   ? rng.uniform_in(10.0, 30.0)
                            : du < 0.95 ? rng.uniform_in(30.0, 120.0)
                                        : rng.uniform_in(120.0, 600.0);
    for (int k = 0; k < domain::kNumCategories; ++k) {
      const double u = rng.uniform();
      video.risk[k] = u < config.p_risk_high                      ? config.risk_high
                      : u < config.p_risk_high + config.p_risk_low ? config.risk_low
                                                                   : config.risk_zero;
    }
    video.appeal = rng.chance(config.p_appeal_low) ? config.appeal_low : config.appeal_high;
    std::vector<std::string> descriptors;
    for (int k = 0; k < domain::kNumCategories; ++k) {
      descriptors.push_back(risk_word(config, k, video.risk[k]));
    }
    descriptors.push_back(video.appeal < config.appeal_threshold ? "appeallo" : "appealhi");
    video.item.attributes.descriptors = std::move(descriptors);
    world.video_index_[video.item.video_id] = world.videos.size();
    world.videos.push_back(std::move(video));
  }

  // Viewing history: every video gets min_views_per_video distinct viewers so
  // the exported dataset sits above both cohort floors.
  std::int64_t ts = 1'700'000'000;
  std::vector<std::size_t> user_order(world.users.size());
  for (std::size_t i = 0; i < user_order.size(); ++i) user_order[i] = i;
  for (auto& video : world.videos) {
    for (std::size_t j = user_order.size(); j > 1; --j) {
      std::swap(user_order[j - 1], user_order[rng.uniform_int(j)]);
    }
    const std::size_t viewers =
        std::min<std::size_t>(world.users.size(), static_cast<std::size_t>(config.min_views_per_video));
    for (std::size_t j = 0; j < viewers; ++j) {
      const SyntheticUser& user = world.users[user_order[j]];
      const ObservedReaction obs = observe_reaction(world, user, video);
      domain::InteractionRecord rec;
      rec.user_id = user.profile.user_id;
      rec.video_id = video.item.video_id;
      rec.duration_s = video.item.duration_s;
      rec.play_rate = obs.play_rate;
      rec.watch_time_s = obs.play_rate * video.item.duration_s;
      rec.ts = ts;
      ts += 37;
      world.interactions.push_back(rec);
      video.item.view_count++;
      if (obs.dislike) {
        const domain::GroundTruth truth = reaction_truth(config, user, video);
        domain::ExplicitFeedback fb;
        fb.user_id = rec.user_id;
        fb.video_id = rec.video_id;
        fb.category = truth.category.value();
        fb.reason_text = truth.reason_text.value();
        fb.surrounding_events = {{"browse", rec.ts - 30}, {"dislike", rec.ts}, {"browse", rec.ts + 60}};
        world.explicit_feedback.push_back(std::move(fb));
      }
    }
  }
  return world;
}

std::vector<grpo::Demonstration> gen_demonstrations(const World& world, int n, std::uint64_t seed,
                                                    const rewards::OptionScheme& scheme) {
  scheme.validate();
  static const policy::Vocabulary vocab = standard_vocabulary();
  std::vector<grpo::Demonstration> demos;
  if (n <= 0) return demos;
  Rng rng(seed);
  demos.reserve(n);
  std::size_t misses = 0;
  while (static_cast<int>(demos.size()) < n) {
    const SyntheticUser& user = world.users[rng.uniform_int(world.users.size())];
    const SyntheticVideo& video = world.videos[rng.uniform_int(world.videos.size())];
    // Stay off the held-out split unless the world is too small to avoid it.
    if (in_eval_split(user.profile.user_id, video.item.video_id) && misses < 10000) {
      ++misses;
      continue;
    }
    const ReactionDetail detail = reaction_detail(world.config, user, video);
    EpisodeSpec episode = make_episode(world, user, video, rewards::RewardMode::ThreeStep);

    grpo::Demonstration demo;
    demo.prompt_tokens = episode.prompt_tokens;
    demo.response_tokens.push_back(vocab.think_open());
    const std::string think = detail.truth.attitude == Attitude::Negative
                                  ? reason_template(*detail.truth.category, detail.offtopic_path)
                                  : kPositiveThink;
    for (const auto& word : text::tokenize(think).tokens) {
      demo.response_tokens.push_back(vocab.id_of(word));
    }
    demo.response_tokens.push_back(vocab.think_close());
    demo.response_tokens.push_back(vocab.answer_open());
    demo.response_tokens.push_back(vocab.letter_id(scheme.letter_for(detail.truth)));
    demo.response_tokens.push_back(vocab.answer_close());
    demo.response_tokens.push_back(vocab.eos());
    demos.push_back(std::move(demo));
  }
  return demos;
}

std::size_t export_dataset(const World& world, const std::string& dir, bool inject_anomalies) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());

  const auto open = [&](const char* name) {
    std::ofstream out(fs::path(dir) / name);
    if (!out) throw IoError(std::string("cannot open '") + name + "' for writing");
    return out;
  };

  std::ofstream interactions = open("interactions.jsonl");
  for (const auto& rec : world.interactions) domain::write_interaction(interactions, rec);

  std::size_t injected = 0;
  if (inject_anomalies && !world.interactions.empty()) {
    const domain::InteractionRecord& base = world.interactions.front();
    for (int i = 0; i < 4; ++i) {  // play_rate above the anomaly ceiling
      domain::InteractionRecord bad = base;
      bad.watch_time_s = bad.duration_s * 6.5;
      bad.play_rate = 6.5;
      bad.ts += 1000 + i;
      domain::write_interaction(interactions, bad);
      ++injected;
    }
    for (int i = 0; i < 3; ++i) {  // sub-half-second accidental taps
      domain::InteractionRecord bad = base;
      bad.watch_time_s = 0.3;
      bad.play_rate = 0.3 / bad.duration_s;
      bad.ts += 2000 + i;
      domain::write_interaction(interactions, bad);
      ++injected;
    }
  }

  std::ofstream users = open("users.jsonl");
  for (const auto& user : world.users) domain::write_user(users, user.profile);

  std::ofstream feedback = open("explicit_feedback.jsonl");
  for (const auto& fb : world.explicit_feedback) domain::write_explicit_feedback(feedback, fb);
  return injected;
}

double implicit_negative_rate(const World& world) {
  if (world.interactions.empty()) return 0.0;
  std::size_t negatives = 0;
  for (const auto& rec : world.interactions) {
    if (rec.play_rate < domain::kImplicitNegativeThreshold) ++negatives;
  }
  return static_cast<double>(negatives) / static_cast<double>(world.interactions.size());
}

std::uint64_t world_digest(const World& world) {
  std::uint64_t h = 14695981039346656037ULL;
  const auto mix_str = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    h ^= 0x1f;
    h *= 1099511628211ULL;
  };
  const auto mix_double = [&h](double v) {
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    h ^= bits;
    h *= 1099511628211ULL;
  };
  for (const auto& u : world.users) {
    mix_str(u.profile.user_id);
    mix_double(u.profile.age);
    mix_str(u.profile.occupation);
    for (const auto& t : u.profile.interests) mix_str(t);
    for (double t : u.tolerance) mix_double(t);
    for (const auto& t : u.psych_tags) mix_str(t);
  }
  for (const auto& v : world.videos) {
    mix_str(v.item.video_id);
    mix_str(v.item.title);
    mix_double(v.item.duration_s);
    for (double r : v.risk) mix_double(r);
    mix_double(v.appeal);
  }
  for (const auto& rec : world.interactions) {
    mix_str(rec.user_id);
    mix_str(rec.video_id);
    mix_double(rec.watch_time_s);
    mix_double(rec.play_rate);
    mix_double(static_cast<double>(rec.ts));
  }
  for (const auto& fb : world.explicit_feedback) {
    mix_str(fb.user_id);
    mix_str(fb.video_id);
    mix_str(fb.reason_text);
  }
  return h;
}

}  // namespace sgrpo::envsim
