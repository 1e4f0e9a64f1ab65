#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "sgrpo/agents.hpp"
#include "sgrpo/config.hpp"
#include "sgrpo/domain.hpp"
#include "sgrpo/drivers.hpp"
#include "sgrpo/envsim.hpp"
#include "sgrpo/errors.hpp"
#include "sgrpo/rewards.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct GlobalOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
};

sgrpo::eval::RunConfig resolve_config(const GlobalOptions& global) {
  sgrpo::eval::RunConfig config = global.config_path.empty()
                                      ? sgrpo::eval::default_run_config()
                                      : sgrpo::eval::load_run_config(global.config_path);
  if (global.seed) config.world.seed = *global.seed;
  return config;
}

std::ofstream open_out(const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw sgrpo::IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

sgrpo::eval::Responder make_responder(const sgrpo::envsim::World& world,
                                      const std::string& checkpoint,
                                      const std::string& responder_name,
                                      std::unique_ptr<sgrpo::policy::AutoregressivePolicy>& holder,
                                      int max_len) {
  if (!checkpoint.empty()) {
    holder = sgrpo::policy::load_policy_file(checkpoint);
    return sgrpo::eval::policy_responder(*holder, max_len);
  }
  if (responder_name == "oracle") return sgrpo::eval::oracle_responder(world);
  if (responder_name.rfind("constant:", 0) == 0 && responder_name.size() == 10) {
    return sgrpo::eval::constant_responder(responder_name.back());
  }
  throw sgrpo::ConfigError("need --checkpoint, or --responder oracle|constant:<L>");
}

int cmd_gen_world(const GlobalOptions& global) {
  const auto config = resolve_config(global);
  const auto world = sgrpo::envsim::gen_world(config.world);
  const fs::path dataset_dir = fs::path(global.out_dir) / "dataset";
  sgrpo::envsim::export_dataset(world, dataset_dir.string());
  std::cout << "world seed=" << world.config.seed << " users=" << world.users.size()
            << " videos=" << world.videos.size() << " interactions=" << world.interactions.size()
            << " explicit_feedback=" << world.explicit_feedback.size() << "\n"
            << "implicit_negative_rate=" << sgrpo::envsim::implicit_negative_rate(world) << "\n"
            << "dataset written to " << dataset_dir.string() << "\n";
  return 0;
}

int cmd_train(const GlobalOptions& global) {
  const auto config = resolve_config(global);
  const auto world = sgrpo::envsim::gen_world(config.world);
  auto log = open_out(fs::path(global.out_dir) / "train_log.jsonl");
  const auto result = sgrpo::eval::run_training(config, world, &log);

  const fs::path checkpoint = fs::path(global.out_dir) / "policy.ckpt";
  sgrpo::policy::save_policy_file(*result.trained, checkpoint.string());
  const fs::path ref_checkpoint = fs::path(global.out_dir) / "policy_ref.ckpt";
  sgrpo::policy::save_policy_file(*result.reference, ref_checkpoint.string());

  std::cout << "sft mean_nll=" << (result.sft_nll ? *result.sft_nll : 0.0)
            << " rl_steps=" << result.rl_steps
            << " first_step_mean_reward=" << result.first_step_mean_reward
            << " last_step_mean_reward=" << result.last_step_mean_reward << "\n";
  const auto report =
      sgrpo::eval::run_eval(config, world, sgrpo::eval::policy_responder(*result.trained),
                            /*explicit_mode=*/false);
  std::cout << sgrpo::eval::render_eval_report(report);
  std::cout << "checkpoint written to " << checkpoint.string() << "\n";
  return 0;
}

int cmd_eval(const GlobalOptions& global, const std::string& checkpoint,
             const std::string& responder_name, const std::string& mode) {
  const auto config = resolve_config(global);
  const auto world = sgrpo::envsim::gen_world(config.world);
  std::unique_ptr<sgrpo::policy::AutoregressivePolicy> holder;
  const auto responder = make_responder(world, checkpoint, responder_name, holder,
                                        config.optimizer.max_generation_length);
  const bool explicit_mode = mode == "explicit";
  const auto report = sgrpo::eval::run_eval(config, world, responder, explicit_mode);
  std::cout << sgrpo::eval::render_eval_report(report);
  auto out = open_out(fs::path(global.out_dir) / ("eval_" + mode + ".json"));
  out << sgrpo::eval::eval_report_json(report) << "\n";
  return 0;
}

int cmd_rewards(const GlobalOptions& global, const std::string& responses_path,
                const std::string& mode_name) {
  const auto config = resolve_config(global);
  const auto mode = sgrpo::rewards::reward_mode_from_string(mode_name);
  if (!mode) throw sgrpo::ConfigError("unknown reward mode '" + mode_name + "'");
  std::ifstream in(responses_path);
  if (!in) throw sgrpo::ConfigError("cannot open responses file '" + responses_path + "'");

  const sgrpo::rewards::OptionScheme scheme;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("response") || !j.contains("truth")) {
      throw sgrpo::ParseError(line_no, "expected {\"response\": ..., \"truth\": {...}}");
    }
    sgrpo::domain::GroundTruth truth;
    const json& t = j["truth"];
    const std::string attitude = t.value("attitude", "");
    if (attitude == "negative") {
      truth.attitude = sgrpo::domain::Attitude::Negative;
      const auto category = sgrpo::domain::category_from_string(t.value("category", ""));
      if (!category) throw sgrpo::ParseError(line_no, "negative truth needs a valid category");
      truth.category = *category;
      if (t.contains("reason")) truth.reason_text = t["reason"].get<std::string>();
    } else if (attitude != "positive") {
      throw sgrpo::ParseError(line_no, "truth.attitude must be positive|negative");
    }
    const auto breakdown = sgrpo::rewards::step_reward(j["response"].get<std::string>(), truth,
                                                       scheme, *mode, config.reward.values);
    std::cout << json{{"line", line_no},
                      {"format", breakdown.format},
                      {"judge", breakdown.judge},
                      {"class", breakdown.category},
                      {"reason", breakdown.reason},
                      {"flat", breakdown.flat},
                      {"total", breakdown.total}}
                     .dump()
              << "\n";
  }
  return 0;
}

int cmd_simulate_deploy(const GlobalOptions& global, const std::string& checkpoint,
                        const std::string& filter_name) {
  const auto config = resolve_config(global);
  const auto world = sgrpo::envsim::gen_world(config.world);

  std::unique_ptr<sgrpo::policy::AutoregressivePolicy> holder;
  std::unique_ptr<sgrpo::agents::ModelBackend> reason_backend;
  if (!checkpoint.empty()) {
    holder = sgrpo::policy::load_policy_file(checkpoint);
    reason_backend = std::make_unique<sgrpo::agents::PolicyBackend>(*holder);
  } else if (filter_name == "oracle") {
    reason_backend = std::make_unique<sgrpo::eval::OracleBackend>(world);
  } else if (filter_name == "none") {
    reason_backend = std::make_unique<sgrpo::agents::ConstantBackend>(
        "<think> pass through </think> <answer> A </answer>");
  } else {
    throw sgrpo::ConfigError("need --checkpoint, or --filter oracle|none");
  }

  sgrpo::agents::ConstantBackend profile_backend("TAGS: none");
  sgrpo::eval::OracleBackend video_backend(world);
  sgrpo::agents::AgentBackends backends{&profile_backend, &video_backend, reason_backend.get()};

  const auto report = sgrpo::eval::simulate_deployment(config, world, backends);
  std::cout << sgrpo::eval::render_deployment_report(report);
  auto out = open_out(fs::path(global.out_dir) / "deployment.json");
  out << sgrpo::eval::deployment_report_json(report) << "\n";
  return 0;
}

int cmd_report(const std::string& log_path) {
  std::ifstream in(log_path);
  if (!in) throw sgrpo::ConfigError("cannot open log file '" + log_path + "'");
  std::cout << sgrpo::eval::render_log_table(in);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stepwise-reward RFT lab: synthetic worlds, toy policy training, "
               "agent pipeline evaluation"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions global;
  app.add_option("--config", global.config_path, "run config file (JSON)");
  app.add_option("--seed", global.seed, "override world seed");
  app.add_option("--out", global.out_dir, "output directory");

  app.add_subcommand("gen-world", "generate a synthetic world and export its dataset");
  app.add_subcommand("train", "warm-up then stepwise-reward RL; writes checkpoint and log");

  std::string eval_checkpoint, eval_responder, eval_mode = "implicit";
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint or builtin responder");
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "policy checkpoint path");
  eval_cmd->add_option("--responder", eval_responder, "oracle | constant:<LETTER>");
  eval_cmd->add_option("--mode", eval_mode, "explicit | implicit")
      ->check(CLI::IsMember({"explicit", "implicit"}));

  std::string rewards_file, rewards_mode = "three_step";
  auto* rewards_cmd = app.add_subcommand("rewards", "score a response file, one breakdown per line");
  rewards_cmd->add_option("--responses", rewards_file, "JSONL file of {response, truth}")
      ->required();
  rewards_cmd->add_option("--mode", rewards_mode, "three_step | two_step | flat_baseline");

  std::string deploy_checkpoint, deploy_filter;
  auto* deploy_cmd =
      app.add_subcommand("simulate-deploy", "baseline vs filtered recommendation pass");
  deploy_cmd->add_option("--checkpoint", deploy_checkpoint, "policy checkpoint path");
  deploy_cmd->add_option("--filter", deploy_filter, "oracle | none");

  std::string report_log;
  auto* report_cmd = app.add_subcommand("report", "render a training log as a table");
  report_cmd->add_option("--log", report_log, "training log (JSONL)")->required();

  try {
    app.parse(argc, argv);
    if (app.got_subcommand("gen-world")) return cmd_gen_world(global);
    if (app.got_subcommand("train")) return cmd_train(global);
    if (app.got_subcommand("eval")) return cmd_eval(global, eval_checkpoint, eval_responder, eval_mode);
    if (app.got_subcommand("rewards")) return cmd_rewards(global, rewards_file, rewards_mode);
    if (app.got_subcommand("simulate-deploy")) {
      return cmd_simulate_deploy(global, deploy_checkpoint, deploy_filter);
    }
    if (app.got_subcommand("report")) return cmd_report(report_log);
    return 1;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const sgrpo::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const sgrpo::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 2;
  }
}
