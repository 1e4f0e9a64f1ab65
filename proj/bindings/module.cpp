#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "sgrpo/agents.hpp"
#include "sgrpo/config.hpp"
#include "sgrpo/domain.hpp"
#include "sgrpo/drivers.hpp"
#include "sgrpo/envsim.hpp"
#include "sgrpo/errors.hpp"
#include "sgrpo/grpo.hpp"
#include "sgrpo/metrics.hpp"
#include "sgrpo/policy.hpp"
#include "sgrpo/rewards.hpp"
#include "sgrpo/textmetrics.hpp"

namespace py = pybind11;
using namespace sgrpo;

namespace {

domain::GroundTruth make_truth(const std::string& attitude, std::optional<int> category,
                               std::optional<std::string> reason) {
  domain::GroundTruth truth;
  if (attitude == "negative") {
    truth.attitude = domain::Attitude::Negative;
    if (!category) throw ConfigError("negative truth needs a category index 0..2");
    truth.category = static_cast<domain::FeedbackCategory>(*category);
  } else if (attitude != "positive") {
    throw ConfigError("attitude must be 'positive' or 'negative'");
  }
  truth.reason_text = std::move(reason);
  return truth;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Stepwise-reward RFT lab core: text metrics, reward ladder, group-relative "
            "policy optimization, toy policy, synthetic environment and drivers.";

  py::register_exception<Error>(m, "SgrpoError");

  // -- text metrics ---------------------------------------------------------
  m.def("tokenize", [](const std::string& s) { return text::tokenize(s).tokens; });
  py::class_<text::RougeScore>(m, "RougeScore")
      .def_readonly("precision", &text::RougeScore::precision)
      .def_readonly("recall", &text::RougeScore::recall)
      .def_readonly("f1", &text::RougeScore::f1);
  m.def("rouge_n", [](const std::vector<std::string>& cand, const std::vector<std::string>& ref,
                      int n) { return text::rouge_n({cand}, {ref}, n); });
  m.def("rouge_l", [](const std::vector<std::string>& cand, const std::vector<std::string>& ref) {
    return text::rouge_l({cand}, {ref});
  });
  m.def("reason_score", &text::reason_score);

  // -- reward ladder --------------------------------------------------------
  py::class_<rewards::ParsedResponse>(m, "ParsedResponse")
      .def_readonly("think_text", &rewards::ParsedResponse::think_text)
      .def_property_readonly("answer_letter", [](const rewards::ParsedResponse& p) {
        return std::string(1, p.answer_letter);
      });
  m.def("parse_response", &rewards::parse_response);
  py::class_<rewards::StepRewardBreakdown>(m, "StepRewardBreakdown")
      .def_readonly("format", &rewards::StepRewardBreakdown::format)
      .def_readonly("judge", &rewards::StepRewardBreakdown::judge)
      .def_readonly("category", &rewards::StepRewardBreakdown::category)
      .def_readonly("reason", &rewards::StepRewardBreakdown::reason)
      .def_readonly("flat", &rewards::StepRewardBreakdown::flat)
      .def_readonly("total", &rewards::StepRewardBreakdown::total);
  m.def(
      "step_reward",
      [](const std::string& response, const std::string& attitude, std::optional<int> category,
         std::optional<std::string> reason, const std::string& mode) {
        const auto parsed_mode = rewards::reward_mode_from_string(mode);
        if (!parsed_mode) throw ConfigError("unknown reward mode '" + mode + "'");
        return rewards::step_reward(response, make_truth(attitude, category, std::move(reason)),
                                    rewards::OptionScheme{}, *parsed_mode,
                                    rewards::RewardConfig{});
      },
      py::arg("response"), py::arg("attitude"), py::arg("category") = std::nullopt,
      py::arg("reason") = std::nullopt, py::arg("mode") = "three_step");

  // -- optimization core ----------------------------------------------------
  m.def("normalize_advantages", [](const std::vector<double>& rewards, double std_epsilon) {
    return grpo::normalize_advantages(rewards, std_epsilon);
  }, py::arg("rewards"), py::arg("std_epsilon") = 1e-8);
  m.def("kl_per_token", [](const std::vector<double>& lp_theta, const std::vector<double>& lp_ref) {
    return grpo::kl_per_token(lp_theta, lp_ref);
  });
  m.def("clipped_surrogate", &grpo::clipped_surrogate);
  m.def("discounted_return", [](const std::vector<double>& rewards, double gamma, std::size_t t) {
    return grpo::discounted_return(rewards, gamma, t);
  });

  // -- toy policy -----------------------------------------------------------
  py::class_<policy::AutoregressivePolicy>(m, "Policy")
      .def_property_readonly("parameter_count", &policy::AutoregressivePolicy::parameter_count)
      .def("parameters", &policy::AutoregressivePolicy::parameters)
      .def("logprobs",
           [](const policy::AutoregressivePolicy& p, const std::vector<int>& prompt,
              const std::vector<int>& response) { return p.logprobs(prompt, response); })
      .def("sample",
           [](const policy::AutoregressivePolicy& p, const std::vector<int>& prompt, int max_len,
              double temperature, std::uint64_t seed) {
             const auto out = p.sample(prompt, max_len, temperature, seed);
             return py::make_tuple(out.tokens, out.logp);
           })
      .def("greedy_decode",
           [](const policy::AutoregressivePolicy& p, const std::vector<int>& prompt, int max_len) {
             return p.greedy_decode(prompt, max_len);
           })
      .def("detokenize", [](const policy::AutoregressivePolicy& p, const std::vector<int>& tokens) {
        return p.vocab().detokenize(tokens);
      })
      .def("encode_prompt_text", [](const policy::AutoregressivePolicy& p, const std::string& s) {
        return p.vocab().encode_prompt_text(s);
      })
      .def("save", [](const policy::AutoregressivePolicy& p, const std::string& path) {
        policy::save_policy_file(p, path);
      });
  m.def(
      "make_policy",
      [](int embed_dim, std::uint64_t init_seed) -> std::unique_ptr<policy::AutoregressivePolicy> {
        return std::make_unique<policy::GatedRecurrentPolicy>(envsim::standard_vocabulary(),
                                                              embed_dim, init_seed);
      },
      py::arg("embed_dim") = 24, py::arg("init_seed") = 1);
  m.def("load_policy", [](const std::string& path) { return policy::load_policy_file(path); });

  // -- synthetic environment and drivers -------------------------------------
  py::class_<envsim::World>(m, "World")
      .def_property_readonly("n_users", [](const envsim::World& w) { return w.users.size(); })
      .def_property_readonly("n_videos", [](const envsim::World& w) { return w.videos.size(); })
      .def_property_readonly("n_interactions",
                             [](const envsim::World& w) { return w.interactions.size(); })
      .def_property_readonly("n_explicit_feedback",
                             [](const envsim::World& w) { return w.explicit_feedback.size(); })
      .def("implicit_negative_rate",
           [](const envsim::World& w) { return envsim::implicit_negative_rate(w); })
      .def("digest", [](const envsim::World& w) { return envsim::world_digest(w); })
      .def("export_dataset", [](const envsim::World& w, const std::string& dir) {
        return envsim::export_dataset(w, dir);
      });

  py::class_<eval::RunConfig>(m, "RunConfig").def("to_json", &eval::run_config_to_json);
  m.def("default_config", &eval::default_run_config);
  m.def("parse_config", &eval::parse_run_config);
  m.def(
      "gen_world",
      [](const eval::RunConfig& config) { return envsim::gen_world(config.world); },
      py::arg("config"));
  m.def("gen_world_seeded", [](std::uint64_t seed, int n_users, int n_videos) {
    envsim::WorldConfig wc;
    wc.seed = seed;
    wc.n_users = n_users;
    wc.n_videos = n_videos;
    return envsim::gen_world(wc);
  });

  py::class_<eval::EvalReport>(m, "EvalReport")
      .def_readonly("accuracy", &eval::EvalReport::accuracy)
      .def_readonly("precision", &eval::EvalReport::precision)
      .def_readonly("recall", &eval::EvalReport::recall)
      .def_readonly("f1", &eval::EvalReport::f1)
      .def_readonly("class_acc", &eval::EvalReport::class_acc)
      .def_readonly("reasoning_score", &eval::EvalReport::reasoning_score)
      .def_readonly("n_instances", &eval::EvalReport::n_instances)
      .def("to_json", [](const eval::EvalReport& r) { return eval::eval_report_json(r); });

  m.def(
      "train_and_eval",
      [](const eval::RunConfig& config) {
        const auto world = envsim::gen_world(config.world);
        std::ostringstream log;
        const auto result = eval::run_training(config, world, &log);
        const auto report = eval::run_eval(config, world, eval::policy_responder(*result.trained),
                                           /*explicit_mode=*/false);
        return py::make_tuple(report, log.str());
      },
      py::arg("config"));
  m.def(
      "eval_oracle",
      [](const eval::RunConfig& config, bool explicit_mode) {
        const auto world = envsim::gen_world(config.world);
        return eval::run_eval(config, world, eval::oracle_responder(world), explicit_mode);
      },
      py::arg("config"), py::arg("explicit_mode") = false);
}
