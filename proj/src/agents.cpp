#include "sgrpo/agents.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "httplib.h"
#include "json.hpp"

namespace sgrpo::agents {
namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string current;
  for (char c : s) {
    if (c == sep) {
      parts.push_back(current);
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  parts.push_back(current);
  return parts;
}

std::string category_display(domain::FeedbackCategory c) {
  switch (c) {
    case domain::FeedbackCategory::NegativeOrConflicting:
      return "negative events, vulgar content, or conflicting values";
    case domain::FeedbackCategory::BoringUnappealing:
      return "boring or unappealing content";
    case domain::FeedbackCategory::VisuallyDisturbing:
      return "visually disturbing content";
  }
  return "unknown";
}

std::string render_candidates(const rewards::OptionScheme& scheme) {
  std::string out;
  out += std::string(1, scheme.positive_letter) + ". no negative feedback";
  for (int k = 0; k < domain::kNumCategories; ++k) {
    out += "; ";
    out += std::string(1, scheme.category_letters[k]) + ". " +
           category_display(static_cast<domain::FeedbackCategory>(k));
  }
  return out;
}

std::string default_render_user(const domain::UserProfile& user) {
  std::string out = "age: " + std::to_string(user.age);
  out += "; gender: ";
  out += user.gender == domain::Gender::Male     ? "male"
         : user.gender == domain::Gender::Female ? "female"
                                                 : "unspecified";
  out += "; occupation: " + user.occupation + "; interests:";
  if (user.interests.empty()) out += " none";
  for (const auto& tag : user.interests) out += " " + tag;
  return out;
}

std::string default_render_video(const domain::VideoItem& video) {
  std::string out = "\"" + video.title + "\"";
  if (!video.attributes.descriptors.empty()) {
    out += " |";
    for (const auto& d : video.attributes.descriptors) out += " " + d;
  }
  return out;
}

std::string render_history(std::span<const HistoryEntry> history) {
  std::string out;
  for (const auto& entry : history) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "\" play_rate=%.2f", entry.record.play_rate);
    out += "\n- \"" + entry.title + buf;
  }
  return out;
}

// A tool call is a whole line of the exact form CALL_VIDEO_AGENT(<id>).
std::optional<std::string> find_tool_call(const std::string& response) {
  static const std::string kPrefix = "CALL_VIDEO_AGENT(";
  for (const auto& raw_line : split(response, '\n')) {
    const std::string line = trim(raw_line);
    if (line.size() > kPrefix.size() + 0 && line.rfind(kPrefix, 0) == 0 && line.back() == ')') {
      return trim(line.substr(kPrefix.size(), line.size() - kPrefix.size() - 1));
    }
  }
  return std::nullopt;
}

PsychProfile parse_psych_profile(const std::string& text) {
  PsychProfile profile;
  bool saw_tags = false;
  for (const auto& raw_line : split(text, '\n')) {
    const std::string line = trim(raw_line);
    if (line.rfind("TAGS:", 0) == 0) {
      saw_tags = true;
      for (const auto& piece : split(line.substr(5), ';')) {
        const std::string tag = trim(piece);
        if (tag.empty()) continue;
        if (std::find(profile.tags.begin(), profile.tags.end(), tag) == profile.tags.end()) {
          profile.tags.push_back(tag);
        }
      }
    } else if (line.rfind("SENSITIVITY:", 0) == 0) {
      const auto parts = split(line.substr(12), ',');
      for (int k = 0; k < domain::kNumCategories && k < static_cast<int>(parts.size()); ++k) {
        try {
          profile.sensitivity[k] = std::clamp(std::stod(trim(parts[k])), 0.0, 1.0);
        } catch (const std::exception&) {
          profile.sensitivity[k] = 0.0;
        }
      }
    } else if (line.rfind("EVIDENCE:", 0) == 0) {
      for (const auto& piece : split(line.substr(9), ';')) {
        const auto eq = piece.find('=');
        if (eq == std::string::npos) continue;
        const std::string vid = trim(piece.substr(0, eq));
        const std::string factor = trim(piece.substr(eq + 1));
        if (!vid.empty() && !factor.empty()) profile.evidence.emplace_back(vid, factor);
      }
    }
  }
  profile.parse_warning = !saw_tags;
  return profile;
}

}  // namespace

std::string ScriptedBackend::generate(const std::string& prompt, const DecodeParams& params) {
  (void)prompt;
  (void)params;
  if (next_ >= responses_.size()) throw TransportError("scripted backend: script exhausted");
  return responses_[next_++];
}

std::string PolicyBackend::generate(const std::string& prompt, const DecodeParams& params) {
  const std::vector<int> tokens = policy_->vocab().encode_prompt_text(prompt);
  const policy::SampleResult out =
      policy_->sample(tokens, params.max_tokens, params.temperature, params.seed);
  return policy_->vocab().detokenize(out.tokens);
}

std::string RemoteBackend::generate(const std::string& prompt, const DecodeParams& params) {
  std::string base = options_.endpoint;
  std::string path = "/";
  const auto scheme_end = base.find("://");
  if (scheme_end != std::string::npos) {
    const auto slash = base.find('/', scheme_end + 3);
    if (slash != std::string::npos) {
      path = base.substr(slash);
      base = base.substr(0, slash);
    }
  }
  httplib::Client client(base);
  client.set_connection_timeout(0, options_.timeout_ms * 1000);
  client.set_read_timeout(options_.timeout_ms / 1000, (options_.timeout_ms % 1000) * 1000);

  httplib::Headers headers;
  if (!options_.auth_env_var.empty()) {
    if (const char* token = std::getenv(options_.auth_env_var.c_str())) {
      headers.emplace("Authorization", std::string("Bearer ") + token);
    }
  }
  const nlohmann::json body{{"prompt", prompt},
                            {"max_tokens", params.max_tokens},
                            {"temperature", params.temperature}};
  std::string last_error = "no attempt made";
  for (int attempt = 0; attempt <= options_.max_retries; ++attempt) {
    auto res = client.Post(path, headers, body.dump(), "application/json");
    if (!res) {
      last_error = "transport failure (" + httplib::to_string(res.error()) + ")";
      continue;
    }
    if (res->status != 200) {
      last_error = "http status " + std::to_string(res->status);
      continue;
    }
    const nlohmann::json reply = nlohmann::json::parse(res->body, nullptr, false);
    if (reply.is_discarded() || !reply.contains("completion") ||
        !reply["completion"].is_string()) {
      throw TransportError("remote backend: malformed completion payload");
    }
    return reply["completion"].get<std::string>();
  }
  throw TransportError("remote backend: " + last_error + " for " + options_.endpoint);
}

std::string format_transcript(const Transcript& transcript) {
  std::string out;
  for (const auto& entry : transcript) {
    out += "=== " + entry.stage + " [" + entry.backend + "] ===\n";
    out += "--- prompt ---\n" + entry.prompt + "\n";
    out += "--- response ---\n" + entry.response + "\n";
  }
  return out;
}

PromptTemplates PromptTemplates::builtin() {
  PromptTemplates t;
  t.profile =
      "You are a helpful assistant for user behavior analysis. Given the basic user "
      "information {user_info} and historical behavior {watch_history}, among the watch "
      "history, \"play_rate\" indicates the user's video watch completion rate, a low "
      "play_rate means the user may dislike the video. Please focus particularly on videos "
      "with low play_rate. You may request to call the Video Agent to obtain more detailed "
      "information about these videos when necessary, by replying with a line of the exact "
      "form CALL_VIDEO_AGENT(video_id). Finally, summarize the user's personality and "
      "psychological tags, such as their sensitivity to negative or vulgar content. Report "
      "the tags on a line starting with \"TAGS:\" separated by \";\", per-category "
      "sensitivities in [0,1] on a line starting with \"SENSITIVITY:\" as three "
      "comma-separated numbers, and per-video evidence on a line starting with "
      "\"EVIDENCE:\" as video_id=factor pairs separated by \";\".";
  t.video =
      "You are a helpful assistant for video content analysis. The assistant first thinks "
      "about the reasoning process in the mind and then provides the answer. Based on the "
      "video {title} and visual contents, does the video contain any potential "
      "controversial element that may cause user uncomfortable? If yes, what type of "
      "controversy does it contain? Candidate answers: {candidates}. The reasoning process "
      "and answer are enclosed within <think> </think> and <answer> </answer> tags, "
      "respectively, i.e., <think> reasoning process here </think><answer> answer here "
      "</answer>. Please provide only the single option letter (e.g., A, B, C, D, etc.) "
      "within the <answer> tags.";
  t.reason =
      "You are a helpful assistant for video recommendation. The assistant first thinks "
      "about the reasoning process in the mind and then provides the answer. Based on the "
      "user information {updated_profile}, will the user like the recommended video "
      "{video}? Think from the user's perspective to predict whether the user will fast "
      "skip the video, if yes, what kind of reason causes the negative feedback? Consider "
      "the value, plot, negativity, visual disturbing elements of the video. Candidate "
      "answers: {candidates}. The reasoning process and answer are enclosed within <think> "
      "</think> and <answer> </answer> tags, respectively, i.e., <think> reasoning process "
      "here </think><answer> answer here </answer>. Please provide only the single option "
      "letter (e.g., A, B, C, D, etc.) within the <answer> tags.";
  return t;
}

PromptTemplates PromptTemplates::load_dir(const std::string& dir) {
  const auto read = [&](const char* name) {
    const auto path = std::filesystem::path(dir) / name;
    std::ifstream in(path);
    if (!in) throw IoError("cannot read prompt template '" + path.string() + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    std::string text = buffer.str();
    while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
    return text;
  };
  PromptTemplates t;
  t.profile = read("profile.txt");
  t.video = read("video.txt");
  t.reason = read("reason.txt");
  return t;
}

std::string render_template(const std::string& tmpl,
                            std::span<const std::pair<std::string, std::string>> substitutions) {
  std::string out = tmpl;
  for (const auto& [key, value] : substitutions) {
    const std::string needle = "{" + key + "}";
    for (auto pos = out.find(needle); pos != std::string::npos; pos = out.find(needle, pos)) {
      out.replace(pos, needle.size(), value);
      pos += value.size();
    }
  }
  return out;
}

ProfileRunResult profile_agent_run(const AgentConfig& config, const domain::UserProfile& user,
                                   std::span<const HistoryEntry> history, ModelBackend& backend,
                                   const VideoAgentHandle& video_agent, int max_tool_calls) {
  if (history.empty()) throw ConfigError("profile agent needs a non-empty history");
  if (max_tool_calls < 0) throw ConfigError("max_tool_calls must be >= 0");

  const std::string user_info =
      config.render_user ? config.render_user(user) : default_render_user(user);
  const std::vector<std::pair<std::string, std::string>> subs = {
      {"user_info", user_info}, {"watch_history", render_history(history)}};
  std::string conversation = render_template(config.templates.profile, subs);

  ProfileRunResult result;
  int calls_used = 0;
  for (;;) {
    const std::string response = backend.generate(conversation, config.decode);
    result.transcript.push_back({"profile", backend.name(), conversation, response});
    const auto tool_call = find_tool_call(response);
    if (!tool_call) {
      result.profile = parse_psych_profile(response);
      return result;
    }
    if (calls_used == max_tool_calls) {
      throw ToolCallLimitError("profile agent: tool call limit exceeded (max " +
                               std::to_string(max_tool_calls) + ")");
    }
    ++calls_used;
    const std::string analysis = video_agent(*tool_call, result.transcript);
    conversation += "\n" + response + "\nVIDEO_AGENT(" + *tool_call + "): " + analysis;
  }
}

VideoRunResult video_agent_run(const AgentConfig& config, const domain::VideoItem& video,
                               ModelBackend& backend) {
  const std::string rendered =
      config.render_video ? config.render_video(video) : default_render_video(video);
  const std::vector<std::pair<std::string, std::string>> subs = {
      {"title", rendered}, {"candidates", render_candidates(config.scheme)}};
  const std::string prompt = render_template(config.templates.video, subs);
  const std::string response = backend.generate(prompt, config.decode);

  VideoRunResult result;
  result.transcript.push_back({"video", backend.name(), prompt, response});
  result.parsed = rewards::parse_response(response);  // FormatError keeps the raw text
  result.category = config.scheme.category_for(result.parsed.answer_letter);
  result.controversial = result.parsed.answer_letter != config.scheme.positive_letter;
  return result;
}

PipelineResult reason_agent_run(const AgentConfig& config, const domain::UserProfile& user,
                                const PsychProfile& psych, const domain::VideoItem& video,
                                ModelBackend& backend) {
  std::string profile_text;
  if (config.render_updated_profile) {
    profile_text = config.render_updated_profile(user, psych);
  } else {
    profile_text = default_render_user(user);
    profile_text += "; tags:";
    if (psych.tags.empty()) profile_text += " none";
    for (const auto& tag : psych.tags) profile_text += " " + tag;
  }
  const std::string video_text = config.render_video_for_user
                                     ? config.render_video_for_user(user, video)
                                     : default_render_video(video);
  const std::vector<std::pair<std::string, std::string>> subs = {
      {"updated_profile", profile_text},
      {"video", video_text},
      {"candidates", render_candidates(config.scheme)}};
  const std::string prompt = render_template(config.templates.reason, subs);
  const std::string response = backend.generate(prompt, config.decode);

  PipelineResult result;
  result.transcript.push_back({"reason", backend.name(), prompt, response});
  const rewards::ParsedResponse parsed = rewards::parse_response(response);
  result.explanation = parsed.think_text;
  if (parsed.answer_letter == config.scheme.positive_letter) {
    result.attitude = domain::Attitude::Positive;
  } else {
    result.attitude = domain::Attitude::Negative;
    result.category = config.scheme.category_for(parsed.answer_letter);
  }
  return result;
}

PipelineResult pipeline_run(const AgentConfig& config, const domain::UserProfile& user,
                            std::span<const HistoryEntry> history,
                            const domain::VideoItem& candidate, const AgentBackends& backends) {
  if (backends.profile == nullptr || backends.video == nullptr || backends.reason == nullptr) {
    throw ConfigError("pipeline needs profile, video and reason backends");
  }
  const VideoAgentHandle handle = [&](const std::string& video_id,
                                      Transcript& transcript) -> std::string {
    std::optional<domain::VideoItem> item;
    if (config.video_lookup) item = config.video_lookup(video_id);
    if (!item) throw UnknownVideoIdError("video agent: unknown video '" + video_id + "'");
    VideoRunResult analysis = video_agent_run(config, *item, *backends.video);
    for (auto& entry : analysis.transcript) transcript.push_back(std::move(entry));
    std::string summary = analysis.parsed.think_text;
    summary += analysis.controversial
                   ? (analysis.category ? " | verdict: " + category_display(*analysis.category)
                                        : " | verdict: controversial")
                   : " | verdict: not controversial";
    return summary;
  };

  ProfileRunResult profile_pass =
      profile_agent_run(config, user, history, *backends.profile, handle, config.max_tool_calls);
  PipelineResult result =
      reason_agent_run(config, user, profile_pass.profile, candidate, *backends.reason);
  // Stitch stage transcripts in call order.
  Transcript full = std::move(profile_pass.transcript);
  for (auto& entry : result.transcript) full.push_back(std::move(entry));
  result.transcript = std::move(full);
  return result;
}

FilterOutcome filter_candidates(const AgentConfig& config, const domain::UserProfile& user,
                                std::span<const HistoryEntry> history,
                                std::span<const domain::VideoItem> candidates,
                                const AgentBackends& backends) {
  if (candidates.empty()) throw ConfigError("filter_candidates needs at least one candidate");
  FilterOutcome outcome;
  for (const auto& candidate : candidates) {
    try {
      PipelineResult result = pipeline_run(config, user, history, candidate, backends);
      if (result.attitude == domain::Attitude::Positive) {
        outcome.kept.push_back(candidate);
      } else {
        outcome.rejected.push_back({candidate.video_id, result.category, result.explanation});
      }
    } catch (const Error& e) {
      outcome.errors.push_back({candidate.video_id, e.what()});
    }
  }
  return outcome;
}

}  // namespace sgrpo::agents
