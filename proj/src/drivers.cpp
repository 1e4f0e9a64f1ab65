#include "sgrpo/drivers.hpp"

#include <algorithm>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "sgrpo/errors.hpp"
#include "sgrpo/grpo.hpp"
#include "sgrpo/rng.hpp"
#include "sgrpo/textmetrics.hpp"
#include "json.hpp"

namespace sgrpo::eval {
namespace {

using nlohmann::json;

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out += sep;
    out += p;
  }
  return out;
}

// Sample a (user, video) pair on the requested side of the split.
struct PairSampler {
  const envsim::World& world;
  Rng rng;
  double eval_fraction;

  std::pair<const envsim::SyntheticUser*, const envsim::SyntheticVideo*> draw(bool eval_side) {
    for (int attempt = 0; attempt < 100000; ++attempt) {
      const auto& user = world.users[rng.uniform_int(world.users.size())];
      const auto& video = world.videos[rng.uniform_int(world.videos.size())];
      if (envsim::in_eval_split(user.profile.user_id, video.item.video_id, eval_fraction) ==
          eval_side) {
        return {&user, &video};
      }
    }
    throw Error("could not sample a pair on the requested split side");
  }
};

}  // namespace

std::string ideal_response_text(const domain::GroundTruth& truth,
                                const rewards::OptionScheme& scheme) {
  std::string think;
  if (truth.attitude == domain::Attitude::Negative) {
    think = truth.reason_text ? *truth.reason_text : envsim::canonical_reason(*truth.category);
  } else {
    think = envsim::canonical_positive_think();
  }
  return "<think> " + think + " </think> <answer> " + std::string(1, scheme.letter_for(truth)) +
         " </answer>";
}

Responder policy_responder(const policy::AutoregressivePolicy& policy, int max_len) {
  return [&policy, max_len](const envsim::EpisodeSpec& episode) {
    return policy.vocab().detokenize(policy.greedy_decode(episode.prompt_tokens, max_len));
  };
}

Responder oracle_responder(const envsim::World& world, const rewards::OptionScheme& scheme) {
  (void)world;
  return [scheme](const envsim::EpisodeSpec& episode) {
    return ideal_response_text(episode.truth, scheme);
  };
}

Responder constant_responder(char letter) {
  return [letter](const envsim::EpisodeSpec&) {
    return "<think> fixed </think> <answer> " + std::string(1, letter) + " </answer>";
  };
}

std::string OracleBackend::generate(const std::string& prompt,
                                    const agents::DecodeParams& params) {
  (void)params;
  // Rebuild grid-valued user/video stand-ins from the feature words and reuse
  // the reaction rule; the prompt encoding makes the truth fully recoverable.
  const envsim::WorldConfig& cfg = world_->config;
  envsim::SyntheticUser user;
  envsim::SyntheticVideo video;
  user.tolerance.fill(cfg.tolerance_high);
  video.risk.fill(cfg.risk_zero);
  video.appeal = cfg.appeal_high;
  bool topic_match = true;
  for (const auto& word : text::tokenize(prompt).tokens) {
    for (int k = 0; k < domain::kNumCategories; ++k) {
      const std::string ks = std::to_string(k);
      if (word == "hist" + ks + "lo") user.tolerance[k] = cfg.tolerance_low;
      if (word == "hist" + ks + "hi") user.tolerance[k] = cfg.tolerance_high;
      if (word == "risk" + ks + "z") video.risk[k] = cfg.risk_zero;
      if (word == "risk" + ks + "lo") video.risk[k] = cfg.risk_low;
      if (word == "risk" + ks + "hi") video.risk[k] = cfg.risk_high;
    }
    if (word == "offtopic") topic_match = false;
    if (word == "likestopic") topic_match = true;
    if (word == "appeallo") video.appeal = cfg.appeal_low;
    if (word == "appealhi") video.appeal = cfg.appeal_high;
  }
  video.item.topic = "decoded";
  if (topic_match) user.profile.interests.push_back("decoded");
  const domain::GroundTruth truth = envsim::reaction_truth(cfg, user, video);
  return ideal_response_text(truth, scheme_);
}

agents::AgentConfig world_agent_config(const RunConfig& config, const envsim::World& world) {
  agents::AgentConfig agent_config;
  agent_config.templates = config.agents.templates_dir.empty()
                               ? agents::PromptTemplates::builtin()
                               : agents::PromptTemplates::load_dir(config.agents.templates_dir);
  agent_config.max_tool_calls = config.agents.max_tool_calls;
  agent_config.decode.max_tokens = config.optimizer.max_generation_length;
  agent_config.decode.temperature = 0.0;
  agent_config.video_lookup = [&world](const std::string& id) -> std::optional<domain::VideoItem> {
    try {
      return world.video_by_id(id).item;
    } catch (const Error&) {
      return std::nullopt;
    }
  };
  agent_config.render_updated_profile = [&world](const domain::UserProfile& user,
                                                 const agents::PsychProfile& psych) {
    std::string text = envsim::describe_user(world.user_by_id(user.user_id));
    text += "; tags: ";
    text += psych.tags.empty() ? "none" : join(psych.tags, "; ");
    return text;
  };
  agent_config.render_video_for_user = [&world](const domain::UserProfile& user,
                                                const domain::VideoItem& video) {
    return envsim::describe_video_for_user(world.config, world.user_by_id(user.user_id),
                                           world.video_by_id(video.video_id));
  };
  return agent_config;
}

std::vector<agents::HistoryEntry> user_history(const envsim::World& world,
                                               const std::string& user_id) {
  std::vector<agents::HistoryEntry> history;
  for (const auto& rec : world.interactions) {
    if (rec.user_id != user_id) continue;
    history.push_back({rec, world.video_by_id(rec.video_id).item.title});
  }
  return history;
}

TrainResult run_training(const RunConfig& config, const envsim::World& world, std::ostream* log) {
  config.validate();
  const rewards::OptionScheme scheme;
  const policy::Vocabulary vocab = envsim::standard_vocabulary();
  auto trained = std::make_unique<policy::GatedRecurrentPolicy>(vocab, config.policy.embed_dim,
                                                                config.policy.init_seed);

  TrainResult result;

  // Stage 1: cold start on ideal demonstrations.
  const auto demos = envsim::gen_demonstrations(world, config.train.n_demonstrations,
                                                Rng::mix(config.world.seed, 11), scheme);
  grpo::OptimizerConfig sft_config = config.optimizer;
  sft_config.learning_rate = config.train.sft_learning_rate;
  sft_config.epochs = config.train.sft_epochs;
  sft_config.weight_decay = 0.0;
  sft_config.adaptive = false;
  result.sft_nll = grpo::sft_warmup(*trained, demos, sft_config, Rng::mix(config.world.seed, 12));
  if (log != nullptr && result.sft_nll) {
    *log << json{{"type", "sft"}, {"epochs", config.train.sft_epochs}, {"mean_nll", *result.sft_nll}}
                .dump()
         << '\n';
  }

  result.reference = trained->clone();
  const policy::AutoregressivePolicy& reference = *result.reference;

  // Stage 2: stepwise-reward RL over training episodes.
  std::vector<envsim::EpisodeSpec> episodes;
  {
    PairSampler sampler{world, Rng(Rng::mix(config.world.seed, 22)), config.eval.eval_fraction};
    episodes.reserve(config.train.n_train_episodes);
    for (int i = 0; i < config.train.n_train_episodes; ++i) {
      const auto [user, video] = sampler.draw(false);
      episodes.push_back(envsim::make_episode(world, *user, *video, config.reward.mode));
    }
  }

  grpo::GrpoOptimizer optimizer(config.optimizer);
  std::vector<std::size_t> order(episodes.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t step = 0;
  for (int epoch = 0; epoch < config.train.rl_epochs; ++epoch) {
    Rng shuffle_rng(Rng::mix(config.world.seed, 33 + static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);
    }
    for (std::size_t idx : order) {
      const envsim::EpisodeSpec& episode = episodes[idx];
      grpo::RolloutGroup group;
      group.prompt_tokens = episode.prompt_tokens;
      for (int g = 0; g < config.optimizer.group_size; ++g) {
        const std::uint64_t rollout_seed =
            Rng::mix(config.world.seed, 1000003ULL * step + static_cast<std::uint64_t>(g) + 77);
        policy::SampleResult sample = trained->sample(
            episode.prompt_tokens, config.optimizer.max_generation_length, 1.0, rollout_seed);
        grpo::Rollout rollout;
        rollout.prompt_tokens = episode.prompt_tokens;
        rollout.response_tokens = std::move(sample.tokens);
        rollout.logp_old = std::move(sample.logp);
        rollout.logp_ref = reference.logprobs(episode.prompt_tokens, rollout.response_tokens);
        rollout.reward = rewards::step_reward(vocab.detokenize(rollout.response_tokens),
                                              episode.truth, scheme, episode.mode,
                                              config.reward.values)
                             .total;
        group.rollouts.push_back(std::move(rollout));
      }
      const grpo::StepDiagnostics diag = optimizer.step(*trained, {&group, 1});
      ++step;
      if (step == 1) result.first_step_mean_reward = diag.mean_reward;
      result.last_step_mean_reward = diag.mean_reward;
      if (log != nullptr) {
        *log << json{{"type", "step"},
                     {"step", step},
                     {"objective", diag.objective},
                     {"mean_reward", diag.mean_reward},
                     {"mean_kl", diag.mean_kl},
                     {"clip_fraction", diag.clip_fraction}}
                    .dump()
             << '\n';
      }
      if (config.train.eval_every > 0 && step % static_cast<std::size_t>(config.train.eval_every) == 0 &&
          log != nullptr) {
        const EvalReport snapshot =
            run_eval(config, world, policy_responder(*trained), /*explicit_mode=*/false);
        *log << json{{"type", "eval"},
                     {"step", step},
                     {"accuracy", snapshot.accuracy},
                     {"class_acc", snapshot.class_acc ? *snapshot.class_acc : 0.0}}
                    .dump()
             << '\n';
      }
    }
  }
  result.rl_steps = step;
  result.trained = std::move(trained);
  return result;
}

std::vector<envsim::EpisodeSpec> eval_episodes(const RunConfig& config,
                                               const envsim::World& world, bool explicit_mode) {
  std::vector<envsim::EpisodeSpec> episodes;
  if (explicit_mode) {
    // Reason-annotated negatives from the held-out split...
    std::vector<envsim::EpisodeSpec> negatives;
    for (const auto& fb : world.explicit_feedback) {
      if (!envsim::in_eval_split(fb.user_id, fb.video_id, config.eval.eval_fraction)) continue;
      negatives.push_back(envsim::make_episode(world, world.user_by_id(fb.user_id),
                                               world.video_by_id(fb.video_id),
                                               rewards::RewardMode::ThreeStep));
    }
    // ... mixed with normal videos at exactly 1:normals_per_negative.
    const int ratio = config.eval.normals_per_negative;
    std::size_t n_neg = std::min<std::size_t>(
        negatives.size(),
        std::max<std::size_t>(1, config.eval.n_eval_episodes / (1 + ratio)));
    std::vector<envsim::EpisodeSpec> positives;
    PairSampler sampler{world, Rng(Rng::mix(config.world.seed, 44)), config.eval.eval_fraction};
    int attempts_left = 200000;
    while (positives.size() < n_neg * static_cast<std::size_t>(ratio) && attempts_left-- > 0) {
      const auto [user, video] = sampler.draw(true);
      envsim::EpisodeSpec episode =
          envsim::make_episode(world, *user, *video, rewards::RewardMode::ThreeStep);
      if (episode.truth.attitude == domain::Attitude::Positive) {
        positives.push_back(std::move(episode));
      }
    }
    n_neg = std::min(n_neg, positives.size() / static_cast<std::size_t>(ratio));
    episodes.assign(negatives.begin(), negatives.begin() + static_cast<std::ptrdiff_t>(n_neg));
    episodes.insert(episodes.end(), positives.begin(),
                    positives.begin() + static_cast<std::ptrdiff_t>(n_neg * ratio));
  } else {
    PairSampler sampler{world, Rng(Rng::mix(config.world.seed, 55)), config.eval.eval_fraction};
    episodes.reserve(config.eval.n_eval_episodes);
    for (int i = 0; i < config.eval.n_eval_episodes; ++i) {
      const auto [user, video] = sampler.draw(true);
      episodes.push_back(envsim::make_episode(world, *user, *video, rewards::RewardMode::TwoStep));
    }
  }
  return episodes;
}

EvalReport run_eval(const RunConfig& config, const envsim::World& world,
                    const Responder& responder, bool explicit_mode) {
  const rewards::OptionScheme scheme;
  const std::vector<envsim::EpisodeSpec> episodes = eval_episodes(config, world, explicit_mode);
  if (episodes.empty()) throw EmptyEvalError("no evaluation episodes available");

  EvalReport report;
  report.n_instances = episodes.size();
  std::vector<ClassInstance> class_instances;
  std::vector<ReasonInstance> reason_instances;

  for (const auto& episode : episodes) {
    const std::string response = responder(episode);
    const auto parsed = rewards::try_parse_response(response);
    const bool truth_negative = episode.truth.attitude == domain::Attitude::Negative;

    std::optional<char> letter;
    bool predicted_negative;
    std::string explanation;
    if (!parsed) {
      ++report.parse_failures;
      // An unparseable response counts as a wrong judgment, whatever the truth.
      predicted_negative = !truth_negative;
    } else {
      letter = parsed->answer_letter;
      predicted_negative = parsed->answer_letter != scheme.positive_letter;
      explanation = parsed->think_text;
    }

    if (truth_negative && predicted_negative) ++report.counts.tp;
    if (truth_negative && !predicted_negative) ++report.counts.fn;
    if (!truth_negative && predicted_negative) ++report.counts.fp;
    if (!truth_negative && !predicted_negative) ++report.counts.tn;

    class_instances.push_back({episode.truth, letter});
    if (truth_negative) {
      const int cat = static_cast<int>(*episode.truth.category);
      report.per_category[cat].n++;
      if (letter && *letter == scheme.category_letters[cat]) report.per_category[cat].class_correct++;
      if (explicit_mode && episode.truth.reason_text) {
        reason_instances.push_back(
            {predicted_negative == truth_negative && parsed.has_value(), explanation,
             *episode.truth.reason_text});
      }
    }
  }

  const BinaryMetrics binary = binary_metrics(report.counts);
  report.accuracy = binary.accuracy;
  report.precision = binary.precision;
  report.recall = binary.recall;
  report.f1 = binary.f1;
  if (report.counts.tp + report.counts.fn > 0) {
    report.class_acc = class_accuracy(class_instances, scheme);
    report.class_acc_given_correct = class_accuracy_given_correct(class_instances, scheme);
  }
  if (explicit_mode && !reason_instances.empty()) {
    report.reasoning_score = reasoning_relevance(reason_instances);
  }
  return report;
}

DeploymentReport simulate_deployment(const RunConfig& config, const envsim::World& world,
                                     const agents::AgentBackends& backends) {
  const agents::AgentConfig agent_config = world_agent_config(config, world);
  DeploymentReport report;
  double base_pr = 0.0, treat_pr = 0.0;
  std::size_t base_skips = 0, treat_skips = 0, base_dislikes = 0, treat_dislikes = 0;

  const std::size_t n_users =
      std::min<std::size_t>(world.users.size(), static_cast<std::size_t>(config.eval.n_deploy_users));
  for (std::size_t ui = 0; ui < n_users; ++ui) {
    const envsim::SyntheticUser& user = world.users[ui];
    const auto history = user_history(world, user.profile.user_id);
    if (history.empty()) continue;

    Rng rng(Rng::mix(config.world.seed, 66 + ui));
    std::vector<std::size_t> video_order(world.videos.size());
    std::iota(video_order.begin(), video_order.end(), 0);
    for (std::size_t i = video_order.size(); i > 1; --i) {
      std::swap(video_order[i - 1], video_order[rng.uniform_int(i)]);
    }
    const std::size_t n_candidates = std::min<std::size_t>(
        world.videos.size(), static_cast<std::size_t>(config.eval.n_deploy_candidates));

    std::vector<domain::VideoItem> candidates;
    for (std::size_t ci = 0; ci < n_candidates; ++ci) {
      const envsim::SyntheticVideo& video = world.videos[video_order[ci]];
      candidates.push_back(video.item);
      const envsim::ObservedReaction obs = envsim::observe_reaction(world, user, video);
      base_pr += std::min(obs.play_rate, 1.0);
      if (obs.play_rate < domain::kImplicitNegativeThreshold) ++base_skips;
      if (obs.dislike) ++base_dislikes;
      ++report.baseline.n_videos;
    }

    const agents::FilterOutcome outcome =
        agents::filter_candidates(agent_config, user.profile, history, candidates, backends);
    report.filtered_out += outcome.rejected.size();
    report.errors += outcome.errors.size();
    for (const auto& kept : outcome.kept) {
      const envsim::SyntheticVideo& video = world.video_by_id(kept.video_id);
      const envsim::ObservedReaction obs = envsim::observe_reaction(world, user, video);
      treat_pr += std::min(obs.play_rate, 1.0);
      if (obs.play_rate < domain::kImplicitNegativeThreshold) ++treat_skips;
      if (obs.dislike) ++treat_dislikes;
      ++report.treatment.n_videos;
    }
  }

  const auto finalize = [](DeploymentArm& arm, double pr_sum, std::size_t skips,
                           std::size_t dislikes) {
    if (arm.n_videos == 0) return;
    arm.avg_play_rate = pr_sum / static_cast<double>(arm.n_videos);
    arm.fast_skip_rate = static_cast<double>(skips) / static_cast<double>(arm.n_videos);
    arm.dislike_rate = static_cast<double>(dislikes) / static_cast<double>(arm.n_videos);
  };
  finalize(report.baseline, base_pr, base_skips, base_dislikes);
  finalize(report.treatment, treat_pr, treat_skips, treat_dislikes);
  return report;
}

std::string render_eval_report(const EvalReport& report) {
  std::ostringstream out;
  out << "# class_acc counts every ground-truth negative; wrong judgments count against it.\n";
  out << "# class_acc_given_correct conditions on a correct binary judgment.\n";
  char line[160];
  std::snprintf(line, sizeof(line), "%-26s %10zu\n", "instances", report.n_instances);
  out << line;
  std::snprintf(line, sizeof(line), "%-26s %10zu\n", "parse_failures", report.parse_failures);
  out << line;
  const auto row = [&](const char* name, double value) {
    std::snprintf(line, sizeof(line), "%-26s %10.4f\n", name, value);
    out << line;
  };
  row("accuracy", report.accuracy);
  row("precision", report.precision);
  row("recall", report.recall);
  row("f1", report.f1);
  if (report.class_acc) row("class_acc", *report.class_acc);
  if (report.class_acc_given_correct) row("class_acc_given_correct", *report.class_acc_given_correct);
  if (report.reasoning_score) row("reasoning_score", *report.reasoning_score);
  for (int k = 0; k < domain::kNumCategories; ++k) {
    const auto& cat = report.per_category[k];
    if (cat.n == 0) continue;
    std::snprintf(line, sizeof(line), "%-26s %6zu/%zu\n",
                  ("category." + domain::to_string(static_cast<domain::FeedbackCategory>(k))).c_str(),
                  cat.class_correct, cat.n);
    out << line;
  }
  return out.str();
}

std::string eval_report_json(const EvalReport& report) {
  json j{{"n_instances", report.n_instances},
         {"parse_failures", report.parse_failures},
         {"accuracy", report.accuracy},
         {"precision", report.precision},
         {"recall", report.recall},
         {"f1", report.f1},
         {"counts",
          {{"tp", report.counts.tp},
           {"fp", report.counts.fp},
           {"fn", report.counts.fn},
           {"tn", report.counts.tn}}}};
  if (report.class_acc) j["class_acc"] = *report.class_acc;
  if (report.class_acc_given_correct) j["class_acc_given_correct"] = *report.class_acc_given_correct;
  if (report.reasoning_score) j["reasoning_score"] = *report.reasoning_score;
  json cats = json::object();
  for (int k = 0; k < domain::kNumCategories; ++k) {
    cats[domain::to_string(static_cast<domain::FeedbackCategory>(k))] = {
        {"n", report.per_category[k].n}, {"class_correct", report.per_category[k].class_correct}};
  }
  j["per_category"] = cats;
  return j.dump(2);
}

std::string render_deployment_report(const DeploymentReport& report) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-16s %12s %12s %12s %8s\n", "arm", "avg_play", "fast_skip",
                "dislike", "n");
  out << line;
  const auto row = [&](const char* name, const DeploymentArm& arm) {
    std::snprintf(line, sizeof(line), "%-16s %12.4f %12.4f %12.4f %8zu\n", name, arm.avg_play_rate,
                  arm.fast_skip_rate, arm.dislike_rate, arm.n_videos);
    out << line;
  };
  row("baseline", report.baseline);
  row("treatment", report.treatment);
  std::snprintf(line, sizeof(line), "filtered_out=%zu errors=%zu\n", report.filtered_out,
                report.errors);
  out << line;
  return out.str();
}

std::string deployment_report_json(const DeploymentReport& report) {
  const auto arm = [](const DeploymentArm& a) {
    return json{{"avg_play_rate", a.avg_play_rate},
                {"fast_skip_rate", a.fast_skip_rate},
                {"dislike_rate", a.dislike_rate},
                {"n_videos", a.n_videos}};
  };
  return json{{"baseline", arm(report.baseline)},
              {"treatment", arm(report.treatment)},
              {"filtered_out", report.filtered_out},
              {"errors", report.errors}}
      .dump(2);
}

std::string render_log_table(std::istream& log) {
  std::ostringstream out;
  char line[200];
  std::snprintf(line, sizeof(line), "%8s %12s %12s %12s %12s\n", "step", "objective",
                "mean_reward", "mean_kl", "clip_frac");
  out << line;
  std::string raw;
  while (std::getline(log, raw)) {
    if (raw.empty()) continue;
    const json j = json::parse(raw, nullptr, false);
    if (j.is_discarded() || !j.is_object()) continue;
    const std::string type = j.value("type", "");
    if (type == "step") {
      std::snprintf(line, sizeof(line), "%8zu %12.5f %12.4f %12.6f %12.4f\n",
                    j.value("step", std::size_t{0}), j.value("objective", 0.0),
                    j.value("mean_reward", 0.0), j.value("mean_kl", 0.0),
                    j.value("clip_fraction", 0.0));
      out << line;
    } else if (type == "eval") {
      std::snprintf(line, sizeof(line), "%8zu  [eval] accuracy=%.4f class_acc=%.4f\n",
                    j.value("step", std::size_t{0}), j.value("accuracy", 0.0),
                    j.value("class_acc", 0.0));
      out << line;
    } else if (type == "sft") {
      std::snprintf(line, sizeof(line), "   [sft] epochs=%d mean_nll=%.5f\n",
                    j.value("epochs", 0), j.value("mean_nll", 0.0));
      out << line;
    }
  }
  return out.str();
}

}  // namespace sgrpo::eval
