#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "sgrpo/envsim.hpp"
#include "sgrpo/grpo.hpp"
#include "sgrpo/rewards.hpp"

namespace sgrpo::eval {

struct PolicySection {
  int embed_dim = 24;
  std::uint64_t init_seed = 1;
};

struct RewardSection {
  rewards::RewardConfig values;
  rewards::RewardMode mode = rewards::RewardMode::ThreeStep;
};

// Training schedule knobs live in the optimizer section of the config file.
// Budget at the defaults: 2400 warm-up updates + 1200 RL steps.
struct TrainPlan {
  int sft_epochs = 1;               // one cold-start pass over the demonstration set
  int rl_epochs = 3;                // passes over the training episodes
  int n_demonstrations = 2400;
  int n_train_episodes = 400;
  int eval_every = 200;             // steps between evaluation snapshots (0 = off)
  double sft_learning_rate = 0.12;  // plain SGD on the toy policy
};

struct AgentsSection {
  std::string templates_dir;  // empty: use the built-in texts
  int max_tool_calls = 3;
  std::string remote_endpoint;
  std::string remote_auth_env;
  int remote_timeout_ms = 5000;
  int remote_retries = 1;
};

struct EvalSection {
  double eval_fraction = 0.2;      // held-out share of (user, video) pairs
  int normals_per_negative = 4;    // explicit-mode evaluation mix
  int n_eval_episodes = 400;       // implicit-mode evaluation size
  int n_deploy_users = 25;
  int n_deploy_candidates = 30;
};

struct RunConfig {
  envsim::WorldConfig world;
  PolicySection policy;
  RewardSection reward;
  grpo::OptimizerConfig optimizer;
  TrainPlan train;
  AgentsSection agents;
  EvalSection eval;

  void validate() const;
};

// Reads the sectioned JSON config; absent keys keep their defaults, unknown
// keys are ignored, wrong types are ConfigErrors.
RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const std::string& json_text);
std::string run_config_to_json(const RunConfig& config);

// The tuned desk-scale defaults (also what an absent --config means).
RunConfig default_run_config();

}  // namespace sgrpo::eval
