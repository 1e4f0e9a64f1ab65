#include "sgrpo/config.hpp"

#include <fstream>
#include <sstream>

#include "sgrpo/errors.hpp"
#include "json.hpp"

namespace sgrpo::eval {
namespace {

using nlohmann::json;

template <typename T>
void get_to(const json& section, const char* key, T& out) {
  auto it = section.find(key);
  if (it == section.end()) return;
  try {
    it->get_to(out);
  } catch (const json::exception&) {
    throw ConfigError(std::string("config key '") + key + "' has the wrong type");
  }
}

}  // namespace

void RunConfig::validate() const {
  world.validate();
  optimizer.validate();
  if (reward.values.format_value < 0.0 || reward.values.judge_value < 0.0 ||
      reward.values.class_value < 0.0) {
    throw ConfigError("reward values must be >= 0");
  }
  if (policy.embed_dim < 1) throw ConfigError("policy.embed_dim must be >= 1");
  if (train.sft_epochs < 0 || train.rl_epochs < 0) throw ConfigError("epoch counts must be >= 0");
  if (train.n_demonstrations < 0 || train.n_train_episodes < 0) {
    throw ConfigError("training set sizes must be >= 0");
  }
  if (eval.eval_fraction <= 0.0 || eval.eval_fraction >= 1.0) {
    throw ConfigError("eval.eval_fraction must be in (0,1)");
  }
  if (eval.normals_per_negative < 1) throw ConfigError("eval.normals_per_negative must be >= 1");
  if (agents.max_tool_calls < 0) throw ConfigError("agents.max_tool_calls must be >= 0");
}

RunConfig parse_run_config(const std::string& json_text) {
  const json root = json::parse(json_text, nullptr, false);
  if (root.is_discarded() || !root.is_object()) throw ConfigError("config is not a JSON object");
  RunConfig config;

  if (auto it = root.find("world"); it != root.end()) {
    const json& w = *it;
    get_to(w, "seed", config.world.seed);
    get_to(w, "n_users", config.world.n_users);
    get_to(w, "n_videos", config.world.n_videos);
    get_to(w, "tolerance_low", config.world.tolerance_low);
    get_to(w, "tolerance_high", config.world.tolerance_high);
    get_to(w, "p_tolerance_low", config.world.p_tolerance_low);
    get_to(w, "risk_low", config.world.risk_low);
    get_to(w, "risk_high", config.world.risk_high);
    get_to(w, "p_risk_low", config.world.p_risk_low);
    get_to(w, "p_risk_high", config.world.p_risk_high);
    get_to(w, "appeal_low", config.world.appeal_low);
    get_to(w, "appeal_high", config.world.appeal_high);
    get_to(w, "p_appeal_low", config.world.p_appeal_low);
    get_to(w, "appeal_threshold", config.world.appeal_threshold);
    get_to(w, "min_views_per_video", config.world.min_views_per_video);
    get_to(w, "p_dislike_given_negative", config.world.p_dislike_given_negative);
  }
  if (auto it = root.find("policy"); it != root.end()) {
    get_to(*it, "embed_dim", config.policy.embed_dim);
    get_to(*it, "init_seed", config.policy.init_seed);
  }
  if (auto it = root.find("reward"); it != root.end()) {
    get_to(*it, "format_value", config.reward.values.format_value);
    get_to(*it, "judge_value", config.reward.values.judge_value);
    get_to(*it, "class_value", config.reward.values.class_value);
    std::string mode;
    get_to(*it, "mode", mode);
    if (!mode.empty()) {
      auto parsed = rewards::reward_mode_from_string(mode);
      if (!parsed) throw ConfigError("unknown reward mode '" + mode + "'");
      config.reward.mode = *parsed;
    }
  }
  if (auto it = root.find("optimizer"); it != root.end()) {
    const json& o = *it;
    get_to(o, "group_size", config.optimizer.group_size);
    get_to(o, "clip_epsilon", config.optimizer.clip_epsilon);
    get_to(o, "kl_beta", config.optimizer.kl_beta);
    get_to(o, "learning_rate", config.optimizer.learning_rate);
    get_to(o, "weight_decay", config.optimizer.weight_decay);
    get_to(o, "epochs", config.optimizer.epochs);
    get_to(o, "max_generation_length", config.optimizer.max_generation_length);
    get_to(o, "std_epsilon", config.optimizer.std_epsilon);
    get_to(o, "discount", config.optimizer.discount);
    get_to(o, "adaptive", config.optimizer.adaptive);
    get_to(o, "sft_epochs", config.train.sft_epochs);
    get_to(o, "rl_epochs", config.train.rl_epochs);
    get_to(o, "n_demonstrations", config.train.n_demonstrations);
    get_to(o, "n_train_episodes", config.train.n_train_episodes);
    get_to(o, "eval_every", config.train.eval_every);
    get_to(o, "sft_learning_rate", config.train.sft_learning_rate);
  }
  if (auto it = root.find("agents"); it != root.end()) {
    const json& a = *it;
    get_to(a, "templates_dir", config.agents.templates_dir);
    get_to(a, "max_tool_calls", config.agents.max_tool_calls);
    get_to(a, "remote_endpoint", config.agents.remote_endpoint);
    get_to(a, "remote_auth_env", config.agents.remote_auth_env);
    get_to(a, "remote_timeout_ms", config.agents.remote_timeout_ms);
    get_to(a, "remote_retries", config.agents.remote_retries);
  }
  if (auto it = root.find("eval"); it != root.end()) {
    const json& e = *it;
    get_to(e, "eval_fraction", config.eval.eval_fraction);
    get_to(e, "normals_per_negative", config.eval.normals_per_negative);
    get_to(e, "n_eval_episodes", config.eval.n_eval_episodes);
    get_to(e, "n_deploy_users", config.eval.n_deploy_users);
    get_to(e, "n_deploy_candidates", config.eval.n_deploy_candidates);
  }
  config.validate();
  return config;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_run_config(buffer.str());
}

std::string run_config_to_json(const RunConfig& config) {
  json root;
  root["world"] = {{"seed", config.world.seed},
                   {"n_users", config.world.n_users},
                   {"n_videos", config.world.n_videos},
                   {"tolerance_low", config.world.tolerance_low},
                   {"tolerance_high", config.world.tolerance_high},
                   {"p_tolerance_low", config.world.p_tolerance_low},
                   {"risk_low", config.world.risk_low},
                   {"risk_high", config.world.risk_high},
                   {"p_risk_low", config.world.p_risk_low},
                   {"p_risk_high", config.world.p_risk_high},
                   {"appeal_low", config.world.appeal_low},
                   {"appeal_high", config.world.appeal_high},
                   {"p_appeal_low", config.world.p_appeal_low},
                   {"appeal_threshold", config.world.appeal_threshold},
                   {"min_views_per_video", config.world.min_views_per_video},
                   {"p_dislike_given_negative", config.world.p_dislike_given_negative}};
  root["policy"] = {{"embed_dim", config.policy.embed_dim}, {"init_seed", config.policy.init_seed}};
  root["reward"] = {{"format_value", config.reward.values.format_value},
                    {"judge_value", config.reward.values.judge_value},
                    {"class_value", config.reward.values.class_value},
                    {"mode", rewards::to_string(config.reward.mode)}};
  root["optimizer"] = {{"group_size", config.optimizer.group_size},
                       {"clip_epsilon", config.optimizer.clip_epsilon},
                       {"kl_beta", config.optimizer.kl_beta},
                       {"learning_rate", config.optimizer.learning_rate},
                       {"weight_decay", config.optimizer.weight_decay},
                       {"epochs", config.optimizer.epochs},
                       {"max_generation_length", config.optimizer.max_generation_length},
                       {"std_epsilon", config.optimizer.std_epsilon},
                       {"discount", config.optimizer.discount},
                       {"adaptive", config.optimizer.adaptive},
                       {"sft_epochs", config.train.sft_epochs},
                       {"rl_epochs", config.train.rl_epochs},
                       {"n_demonstrations", config.train.n_demonstrations},
                       {"n_train_episodes", config.train.n_train_episodes},
                       {"eval_every", config.train.eval_every},
                       {"sft_learning_rate", config.train.sft_learning_rate}};
  root["agents"] = {{"templates_dir", config.agents.templates_dir},
                    {"max_tool_calls", config.agents.max_tool_calls},
                    {"remote_endpoint", config.agents.remote_endpoint},
                    {"remote_auth_env", config.agents.remote_auth_env},
                    {"remote_timeout_ms", config.agents.remote_timeout_ms},
                    {"remote_retries", config.agents.remote_retries}};
  root["eval"] = {{"eval_fraction", config.eval.eval_fraction},
                  {"normals_per_negative", config.eval.normals_per_negative},
                  {"n_eval_episodes", config.eval.n_eval_episodes},
                  {"n_deploy_users", config.eval.n_deploy_users},
                  {"n_deploy_candidates", config.eval.n_deploy_candidates}};
  return root.dump(2);
}

RunConfig default_run_config() {
  RunConfig config;
  // The moment-based update keeps toy-scale RL stable; plain ascent at rates
  // large enough to matter here tends to collapse onto the always-positive
  // answer.
  config.optimizer.adaptive = true;
  config.optimizer.learning_rate = 1e-3;
  return config;
}

}  // namespace sgrpo::eval
