#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sgrpo/domain.hpp"
#include "sgrpo/errors.hpp"
#include "sgrpo/policy.hpp"
#include "sgrpo/rewards.hpp"

namespace sgrpo::agents {

class TransportError : public Error {
 public:
  using Error::Error;
};

class ToolCallLimitError : public Error {
 public:
  using Error::Error;
};

class UnknownVideoIdError : public Error {
 public:
  using Error::Error;
};

struct DecodeParams {
  int max_tokens = 64;
  double temperature = 0.0;  // deterministic decoding by default
  std::uint64_t seed = 0;
};

// The single capability every generation backend provides. generate() either
// returns text or throws a typed transport error.
class ModelBackend {
 public:
  virtual ~ModelBackend() = default;
  virtual std::string generate(const std::string& prompt, const DecodeParams& params) = 0;
  virtual std::string name() const = 0;
};

// Deterministic canned responses, consumed in call order. For tests and
// fixtures.
class ScriptedBackend final : public ModelBackend {
 public:
  explicit ScriptedBackend(std::vector<std::string> responses)
      : responses_(std::move(responses)) {}
  std::string generate(const std::string& prompt, const DecodeParams& params) override;
  std::string name() const override { return "scripted"; }
  std::size_t calls_made() const { return next_; }

 private:
  std::vector<std::string> responses_;
  std::size_t next_ = 0;
};

// Always replies with the same text.
class ConstantBackend final : public ModelBackend {
 public:
  explicit ConstantBackend(std::string text) : text_(std::move(text)) {}
  std::string generate(const std::string&, const DecodeParams&) override { return text_; }
  std::string name() const override { return "constant"; }

 private:
  std::string text_;
};

// Wraps the trainable policy: recognizable context words of the prompt are
// encoded, the policy decodes, tokens are joined back into text.
class PolicyBackend final : public ModelBackend {
 public:
  explicit PolicyBackend(const policy::AutoregressivePolicy& policy) : policy_(&policy) {}
  std::string generate(const std::string& prompt, const DecodeParams& params) override;
  std::string name() const override { return "policy"; }

 private:
  const policy::AutoregressivePolicy* policy_;
};

// Wire endpoint speaking JSON {"prompt", "max_tokens", "temperature"} ->
// {"completion"}. The bearer token is read from the environment variable
// named in the options, never stored in config files.
class RemoteBackend final : public ModelBackend {
 public:
  struct Options {
    std::string endpoint;      // e.g. http://127.0.0.1:8089/generate
    std::string auth_env_var;  // optional
    int timeout_ms = 5000;
    int max_retries = 1;
  };
  explicit RemoteBackend(Options options) : options_(std::move(options)) {}
  std::string generate(const std::string& prompt, const DecodeParams& params) override;
  std::string name() const override { return "remote"; }

 private:
  Options options_;
};

struct PsychProfile {
  std::vector<std::string> tags;  // deduplicated, order preserved
  std::array<double, domain::kNumCategories> sensitivity{};
  std::vector<std::pair<std::string, std::string>> evidence;  // (video_id, inferred factor)
  bool parse_warning = false;  // set when the backend text had no TAGS line
};

struct TranscriptEntry {
  std::string stage;  // "profile", "video", "reason"
  std::string backend;
  std::string prompt;
  std::string response;
};
using Transcript = std::vector<TranscriptEntry>;

// Stable plain-text rendering used for golden-file comparisons.
std::string format_transcript(const Transcript& transcript);

struct HistoryEntry {
  domain::InteractionRecord record;
  std::string title;
};

struct PromptTemplates {
  std::string profile;
  std::string video;
  std::string reason;

  static PromptTemplates builtin();
  // Reads profile.txt, video.txt, reason.txt from dir.
  static PromptTemplates load_dir(const std::string& dir);
};

std::string render_template(const std::string& tmpl,
                            std::span<const std::pair<std::string, std::string>> substitutions);

struct AgentConfig {
  PromptTemplates templates = PromptTemplates::builtin();
  rewards::OptionScheme scheme;
  int max_tool_calls = 3;
  DecodeParams decode;

  // Resolves video ids named in tool calls.
  std::function<std::optional<domain::VideoItem>(const std::string&)> video_lookup;

  // Placeholder renderers; null means the plain default rendering.
  std::function<std::string(const domain::UserProfile&)> render_user;
  std::function<std::string(const domain::UserProfile&, const PsychProfile&)>
      render_updated_profile;
  std::function<std::string(const domain::VideoItem&)> render_video;
  std::function<std::string(const domain::UserProfile&, const domain::VideoItem&)>
      render_video_for_user;
};

// Runs a video analysis for a tool call and returns the text to splice into
// the profile conversation. Backend calls it makes are appended to the passed
// transcript so the overall call order is preserved.
using VideoAgentHandle = std::function<std::string(const std::string& video_id, Transcript&)>;

struct ProfileRunResult {
  PsychProfile profile;
  Transcript transcript;
};

// Renders the profile prompt, lets the backend request video analyses via
// `CALL_VIDEO_AGENT(<video_id>)` lines (at most max_tool_calls times), parses
// the final text into a PsychProfile.
ProfileRunResult profile_agent_run(const AgentConfig& config, const domain::UserProfile& user,
                                   std::span<const HistoryEntry> history, ModelBackend& backend,
                                   const VideoAgentHandle& video_agent, int max_tool_calls);

struct VideoRunResult {
  rewards::ParsedResponse parsed;
  bool controversial = false;
  std::optional<domain::FeedbackCategory> category;
  Transcript transcript;
};

VideoRunResult video_agent_run(const AgentConfig& config, const domain::VideoItem& video,
                               ModelBackend& backend);

struct PipelineResult {
  domain::Attitude attitude = domain::Attitude::Positive;
  std::optional<domain::FeedbackCategory> category;  // only with Negative attitude
  std::string explanation;                           // the think span
  Transcript transcript;
};

PipelineResult reason_agent_run(const AgentConfig& config, const domain::UserProfile& user,
                                const PsychProfile& psych, const domain::VideoItem& video,
                                ModelBackend& backend);

struct AgentBackends {
  ModelBackend* profile = nullptr;
  ModelBackend* video = nullptr;
  ModelBackend* reason = nullptr;
};

// Profile stage then reason stage, threading the inferred profile; the full
// transcript of every backend call is retained in call order.
PipelineResult pipeline_run(const AgentConfig& config, const domain::UserProfile& user,
                            std::span<const HistoryEntry> history,
                            const domain::VideoItem& candidate, const AgentBackends& backends);

struct RejectedCandidate {
  std::string video_id;
  std::optional<domain::FeedbackCategory> category;
  std::string explanation;
};

struct CandidateError {
  std::string video_id;
  std::string message;
};

struct FilterOutcome {
  std::vector<domain::VideoItem> kept;  // input order preserved
  std::vector<RejectedCandidate> rejected;
  std::vector<CandidateError> errors;
};

// Runs the pipeline per candidate; per-candidate failures are collected, not
// fatal.
FilterOutcome filter_candidates(const AgentConfig& config, const domain::UserProfile& user,
                                std::span<const HistoryEntry> history,
                                std::span<const domain::VideoItem> candidates,
                                const AgentBackends& backends);

}  // namespace sgrpo::agents
