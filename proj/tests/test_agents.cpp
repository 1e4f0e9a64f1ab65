#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <memory>

#include "golden_util.hpp"
#include "sgrpo/agents.hpp"
#include "sgrpo/errors.hpp"

using namespace sgrpo;
using namespace sgrpo::agents;
using domain::Attitude;
using domain::FeedbackCategory;

namespace {

domain::UserProfile fixture_user() {
  domain::UserProfile user;
  user.user_id = "u42";
  user.age = 48;
  user.gender = domain::Gender::Male;
  user.occupation = "teacher";
  user.interests = {"sports", "news"};
  return user;
}

domain::VideoItem fixture_video(const std::string& id = "v7") {
  domain::VideoItem video;
  video.video_id = id;
  video.title = "sports clip 7";
  video.duration_s = 30.0;
  video.topic = "sports";
  video.attributes.descriptors = {"risk0z", "risk1lo", "risk2hi", "appealhi"};
  return video;
}

std::vector<HistoryEntry> fixture_history() {
  domain::InteractionRecord r1{"u42", "v1", 3.0, 30.0, 0.1, 1000};
  domain::InteractionRecord r2{"u42", "v2", 27.0, 30.0, 0.9, 2000};
  return {{r1, "news clip 1"}, {r2, "sports clip 2"}};
}

// Counts calls and forwards, for transcript-completeness checks.
class CountingBackend final : public ModelBackend {
 public:
  explicit CountingBackend(ModelBackend& inner) : inner_(&inner) {}
  std::string generate(const std::string& prompt, const DecodeParams& params) override {
    ++calls;
    return inner_->generate(prompt, params);
  }
  std::string name() const override { return inner_->name(); }
  std::size_t calls = 0;

 private:
  ModelBackend* inner_;
};

AgentConfig fixture_config() {
  AgentConfig config;
  config.video_lookup = [](const std::string& id) -> std::optional<domain::VideoItem> {
    if (id == "v7") return fixture_video();
    return std::nullopt;
  };
  return config;
}

const char* kProfileReply =
    "The user skips risky clips.\nTAGS: values_sensitive; novelty_seeking\n"
    "SENSITIVITY: 0.9, 0.4, 0.1\nEVIDENCE: v1=upsetting themes";
const char* kToolCallReply = "Titles are not enough for v7.\nCALL_VIDEO_AGENT(v7)";
const char* kVideoReply =
    "<think> graphic imagery unsettles eyes </think> <answer> D </answer>";
const char* kReasonNegativeReply =
    "<think> dull plotline lacks spark </think> <answer> C </answer>";
const char* kReasonPositiveReply = "<think> enjoyable fits taste </think> <answer> A </answer>";

}  // namespace

TEST_CASE("scripted backend replays its responses in order and then fails") {
  ScriptedBackend backend({"one", "two"});
  CHECK(backend.generate("p", {}) == "one");
  CHECK(backend.generate("p", {}) == "two");
  CHECK_THROWS_AS(backend.generate("p", {}), TransportError);
}

TEST_CASE("profile agent single pass parses the psych profile") {
  ScriptedBackend backend({kProfileReply});
  const auto result = profile_agent_run(fixture_config(), fixture_user(), fixture_history(),
                                        backend, {}, 3);
  CHECK(result.transcript.size() == 1);
  CHECK(result.profile.tags == std::vector<std::string>{"values_sensitive", "novelty_seeking"});
  CHECK(result.profile.sensitivity[0] == doctest::Approx(0.9));
  CHECK(result.profile.sensitivity[2] == doctest::Approx(0.1));
  REQUIRE(result.profile.evidence.size() == 1);
  CHECK(result.profile.evidence[0].first == "v1");
  CHECK_FALSE(result.profile.parse_warning);

  SUBCASE("prompt carries user info and history lines") {
    CHECK(result.transcript[0].prompt.find("age: 48") != std::string::npos);
    CHECK(result.transcript[0].prompt.find("play_rate=0.10") != std::string::npos);
  }
  SUBCASE("sensitivities are clamped into range") {
    ScriptedBackend wild({"TAGS: a\nSENSITIVITY: 7, -3, 0.5"});
    const auto clamped =
        profile_agent_run(fixture_config(), fixture_user(), fixture_history(), wild, {}, 3);
    CHECK(clamped.profile.sensitivity[0] == doctest::Approx(1.0));
    CHECK(clamped.profile.sensitivity[1] == doctest::Approx(0.0));
  }
  SUBCASE("unparseable profile degrades with a warning") {
    ScriptedBackend vague({"no structured lines at all"});
    const auto degraded =
        profile_agent_run(fixture_config(), fixture_user(), fixture_history(), vague, {}, 3);
    CHECK(degraded.profile.tags.empty());
    CHECK(degraded.profile.parse_warning);
  }
}

TEST_CASE("profile agent tool-call round trip") {
  ScriptedBackend profile_backend({kToolCallReply, kProfileReply});
  ScriptedBackend video_backend({kVideoReply});
  const AgentConfig config = fixture_config();

  const VideoAgentHandle handle = [&](const std::string& id, Transcript& transcript) {
    auto item = config.video_lookup(id);
    if (!item) throw UnknownVideoIdError("video agent: unknown video '" + id + "'");
    const auto analysis = video_agent_run(config, *item, video_backend);
    for (const auto& entry : analysis.transcript) transcript.push_back(entry);
    return analysis.parsed.think_text;
  };

  const auto result = profile_agent_run(config, fixture_user(), fixture_history(),
                                        profile_backend, handle, 3);
  REQUIRE(result.transcript.size() == 3);
  CHECK(result.transcript[0].stage == "profile");
  CHECK(result.transcript[1].stage == "video");
  CHECK(result.transcript[2].stage == "profile");
  // the second profile prompt embeds the analysis
  CHECK(result.transcript[2].prompt.find("VIDEO_AGENT(v7):") != std::string::npos);
  CHECK(result.profile.tags.size() == 2);

  golden::compare("profile_tool_call_transcript.txt", format_transcript(result.transcript));
}

TEST_CASE("profile agent error paths") {
  const AgentConfig config = fixture_config();
  const VideoAgentHandle failing_handle = [&](const std::string& id, Transcript&) -> std::string {
    throw UnknownVideoIdError("video agent: unknown video '" + id + "'");
  };
  SUBCASE("unknown video id") {
    ScriptedBackend backend({"CALL_VIDEO_AGENT(v404)", kProfileReply});
    try {
      profile_agent_run(config, fixture_user(), fixture_history(), backend, failing_handle, 3);
      FAIL("expected UnknownVideoIdError");
    } catch (const UnknownVideoIdError& e) {
      golden::compare("error_unknown_video.txt", std::string("ERROR UnknownVideoId: ") + e.what());
    }
  }
  SUBCASE("tool call limit") {
    ScriptedBackend backend({kToolCallReply, kProfileReply});
    try {
      profile_agent_run(config, fixture_user(), fixture_history(), backend, failing_handle, 0);
      FAIL("expected ToolCallLimitError");
    } catch (const ToolCallLimitError& e) {
      golden::compare("error_tool_call_limit.txt",
                      std::string("ERROR ToolCallLimitExceeded: ") + e.what());
    }
  }
  SUBCASE("empty history is rejected") {
    ScriptedBackend backend({kProfileReply});
    CHECK_THROWS_AS(profile_agent_run(config, fixture_user(), {}, backend, {}, 3), ConfigError);
  }
}

TEST_CASE("video agent maps letters through the scheme") {
  const AgentConfig config = fixture_config();
  SUBCASE("positive letter means not controversial") {
    ScriptedBackend backend({"<think> enjoyable fits taste </think> <answer> A </answer>"});
    const auto result = video_agent_run(config, fixture_video(), backend);
    CHECK_FALSE(result.controversial);
    CHECK_FALSE(result.category.has_value());
  }
  SUBCASE("category letter names the category") {
    ScriptedBackend backend({kVideoReply});
    const auto result = video_agent_run(config, fixture_video(), backend);
    CHECK(result.controversial);
    CHECK(result.category == FeedbackCategory::VisuallyDisturbing);
  }
  SUBCASE("malformed output raises FormatError with the raw text") {
    ScriptedBackend backend({"strange free-form text"});
    try {
      video_agent_run(config, fixture_video(), backend);
      FAIL("expected FormatError");
    } catch (const rewards::FormatError& e) {
      CHECK(e.raw_text() == "strange free-form text");
      golden::compare("error_format.txt", std::string("ERROR FormatError: ") + e.what() +
                                              " raw=" + e.raw_text());
    }
  }
}

TEST_CASE("reason agent maps the answer into a pipeline result") {
  const AgentConfig config = fixture_config();
  PsychProfile psych;
  psych.tags = {"values_sensitive"};
  SUBCASE("negative letter carries a category and the think span") {
    ScriptedBackend backend({kReasonNegativeReply});
    const auto result =
        reason_agent_run(config, fixture_user(), psych, fixture_video(), backend);
    CHECK(result.attitude == Attitude::Negative);
    CHECK(result.category == FeedbackCategory::BoringUnappealing);
    CHECK(result.explanation == " dull plotline lacks spark ");
  }
  SUBCASE("positive letter leaves the category empty") {
    ScriptedBackend backend({kReasonPositiveReply});
    const auto result =
        reason_agent_run(config, fixture_user(), psych, fixture_video(), backend);
    CHECK(result.attitude == Attitude::Positive);
    CHECK_FALSE(result.category.has_value());
  }
}

TEST_CASE("all-scripted pipeline is deterministic and matches its golden transcript") {
  const AgentConfig config = fixture_config();
  const auto run_once = [&]() {
    ScriptedBackend profile_backend({kToolCallReply, kProfileReply});
    ScriptedBackend video_backend({kVideoReply});
    ScriptedBackend reason_backend({kReasonNegativeReply});
    const AgentBackends backends{&profile_backend, &video_backend, &reason_backend};
    return pipeline_run(config, fixture_user(), fixture_history(), fixture_video(), backends);
  };
  const auto first = run_once();
  const auto second = run_once();
  CHECK(format_transcript(first.transcript) == format_transcript(second.transcript));
  CHECK(first.attitude == Attitude::Negative);
  CHECK(first.category == FeedbackCategory::BoringUnappealing);
  REQUIRE(first.transcript.size() == 4);  // profile, video, profile, reason

  golden::compare("pipeline_transcript.txt", format_transcript(first.transcript));
}

TEST_CASE("every backend call lands in the transcript exactly once, in order") {
  const AgentConfig config = fixture_config();
  ScriptedBackend profile_inner({kToolCallReply, kProfileReply});
  ScriptedBackend video_inner({kVideoReply});
  ScriptedBackend reason_inner({kReasonNegativeReply});
  CountingBackend profile_backend(profile_inner);
  CountingBackend video_backend(video_inner);
  CountingBackend reason_backend(reason_inner);
  const AgentBackends backends{&profile_backend, &video_backend, &reason_backend};

  const auto result =
      pipeline_run(config, fixture_user(), fixture_history(), fixture_video(), backends);
  CHECK(result.transcript.size() == profile_backend.calls + video_backend.calls +
                                        reason_backend.calls);
  const std::vector<std::string> stages = {"profile", "video", "profile", "reason"};
  REQUIRE(result.transcript.size() == stages.size());
  for (std::size_t i = 0; i < stages.size(); ++i) {
    CHECK(result.transcript[i].stage == stages[i]);
  }
}

TEST_CASE("filter_candidates partitions, preserves order and collects errors") {
  const AgentConfig config = fixture_config();
  const std::vector<domain::VideoItem> candidates = {fixture_video("v7"), fixture_video("v8"),
                                                     fixture_video("v9")};
  SUBCASE("rejections carry category and explanation, kept keeps order") {
    // no tool calls; reason alternates negative/positive/negative
    ScriptedBackend profile_backend({kProfileReply, kProfileReply, kProfileReply});
    ScriptedBackend video_backend({});
    ScriptedBackend reason_backend(
        {kReasonNegativeReply, kReasonPositiveReply, kVideoReply});
    const AgentBackends backends{&profile_backend, &video_backend, &reason_backend};
    const auto outcome =
        filter_candidates(config, fixture_user(), fixture_history(), candidates, backends);
    REQUIRE(outcome.kept.size() == 1);
    CHECK(outcome.kept[0].video_id == "v8");
    REQUIRE(outcome.rejected.size() == 2);
    CHECK(outcome.rejected[0].video_id == "v7");
    CHECK(outcome.rejected[0].category == FeedbackCategory::BoringUnappealing);
    CHECK(outcome.rejected[1].video_id == "v9");
    CHECK(outcome.rejected[1].category == FeedbackCategory::VisuallyDisturbing);
    CHECK(outcome.errors.empty());
  }
  SUBCASE("all-positive predictions reject nothing") {
    ScriptedBackend profile_backend({kProfileReply, kProfileReply, kProfileReply});
    ScriptedBackend video_backend({});
    ScriptedBackend reason_backend(
        {kReasonPositiveReply, kReasonPositiveReply, kReasonPositiveReply});
    const AgentBackends backends{&profile_backend, &video_backend, &reason_backend};
    const auto outcome =
        filter_candidates(config, fixture_user(), fixture_history(), candidates, backends);
    CHECK(outcome.kept.size() == 3);
    CHECK(outcome.rejected.empty());
  }
  SUBCASE("a transport failure becomes one error entry, not a crash") {
    RemoteBackend unreachable({"http://127.0.0.1:9/generate", "", 200, 0});
    ScriptedBackend video_backend({});
    ScriptedBackend reason_backend({kReasonPositiveReply});
    const AgentBackends backends{&unreachable, &video_backend, &reason_backend};
    const std::vector<domain::VideoItem> one = {fixture_video("v7")};
    const auto outcome =
        filter_candidates(config, fixture_user(), fixture_history(), one, backends);
    CHECK(outcome.kept.empty());
    REQUIRE(outcome.errors.size() == 1);
    CHECK(outcome.errors[0].video_id == "v7");
  }
  SUBCASE("an empty candidate list is rejected") {
    ScriptedBackend backend({});
    const AgentBackends backends{&backend, &backend, &backend};
    CHECK_THROWS_AS(filter_candidates(config, fixture_user(), fixture_history(), {}, backends),
                    ConfigError);
  }
}

TEST_CASE("remote backend surfaces transport errors without partial results") {
  RemoteBackend backend({"http://127.0.0.1:9/generate", "", 150, 1});
  CHECK_THROWS_AS(backend.generate("hello", {}), TransportError);
}

TEST_CASE("prompt template files match the built-in texts") {
  const auto files = PromptTemplates::load_dir(std::string(SGRPO_SOURCE_DIR) + "/prompts");
  const auto builtin = PromptTemplates::builtin();
  CHECK(files.profile == builtin.profile);
  CHECK(files.video == builtin.video);
  CHECK(files.reason == builtin.reason);
}

TEST_CASE("template rendering substitutes every occurrence") {
  const auto out = render_template(
      "a {x} b {y} c {x}",
      std::vector<std::pair<std::string, std::string>>{{"x", "1"}, {"y", "2"}});
  CHECK(out == "a 1 b 2 c 1");
}
