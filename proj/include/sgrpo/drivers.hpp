#pragma once

#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "sgrpo/agents.hpp"
#include "sgrpo/config.hpp"
#include "sgrpo/envsim.hpp"
#include "sgrpo/metrics.hpp"
#include "sgrpo/policy.hpp"

namespace sgrpo::eval {

// Produces the response text for one episode; the seam between evaluation
// and whatever answers (policy checkpoint, oracle, constant).
using Responder = std::function<std::string(const envsim::EpisodeSpec&)>;

Responder policy_responder(const policy::AutoregressivePolicy& policy, int max_len = 64);
// Decodes the truth from the prompt features and answers ideally; the
// evaluation upper bound.
Responder oracle_responder(const envsim::World& world, const rewards::OptionScheme& scheme = {});
Responder constant_responder(char letter);

// A generation backend that decodes the episode features found in its prompt
// and replies with the ideal response. Lets pipeline-level runs be scored
// against the reaction rule without a trained policy.
class OracleBackend final : public agents::ModelBackend {
 public:
  OracleBackend(const envsim::World& world, rewards::OptionScheme scheme = {})
      : world_(&world), scheme_(scheme) {}
  std::string generate(const std::string& prompt, const agents::DecodeParams& params) override;
  std::string name() const override { return "oracle"; }

 private:
  const envsim::World* world_;
  rewards::OptionScheme scheme_;
};

// The ideal response text for a truth: template reason in the think span and
// the correct letter.
std::string ideal_response_text(const domain::GroundTruth& truth,
                                const rewards::OptionScheme& scheme);

struct TrainResult {
  std::unique_ptr<policy::AutoregressivePolicy> trained;
  std::unique_ptr<policy::AutoregressivePolicy> reference;  // frozen post-warm-up snapshot
  std::optional<double> sft_nll;
  std::size_t rl_steps = 0;
  double first_step_mean_reward = 0.0;
  double last_step_mean_reward = 0.0;
};

// Stage 1 warm-up on generated demonstrations, stage 2 stepwise-reward RL:
// per episode, G sampled rollouts are scored, advantaged and applied as one
// update. One JSON object per step is appended to `log` when given.
TrainResult run_training(const RunConfig& config, const envsim::World& world,
                         std::ostream* log = nullptr);

// Explicit mode mixes reason-annotated negative episodes with normal ones at
// 1:eval.normals_per_negative and scores explanation relevance; implicit mode
// scores held-out episodes without reasons. Greedy decoding throughout.
EvalReport run_eval(const RunConfig& config, const envsim::World& world,
                    const Responder& responder, bool explicit_mode);

// The held-out episode set used by run_eval.
std::vector<envsim::EpisodeSpec> eval_episodes(const RunConfig& config,
                                               const envsim::World& world, bool explicit_mode);

// Baseline pass records reactions to every candidate; the treatment pass
// filters candidates through the agent pipeline first.
DeploymentReport simulate_deployment(const RunConfig& config, const envsim::World& world,
                                     const agents::AgentBackends& backends);

// Agent configuration wired to this world: canonical feature renderers and
// the world's video lookup.
agents::AgentConfig world_agent_config(const RunConfig& config, const envsim::World& world);

// Viewing history entries (record + title) for one user.
std::vector<agents::HistoryEntry> user_history(const envsim::World& world,
                                               const std::string& user_id);

std::string render_eval_report(const EvalReport& report);
std::string eval_report_json(const EvalReport& report);
std::string render_deployment_report(const DeploymentReport& report);
std::string deployment_report_json(const DeploymentReport& report);

// Renders a line-delimited training log as an aligned table.
std::string render_log_table(std::istream& log);

}  // namespace sgrpo::eval
