#include "sgrpo/domain.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <unordered_map>

#include "sgrpo/errors.hpp"
#include "json.hpp"

namespace sgrpo::domain {
namespace {

using nlohmann::json;

json parse_line(const std::string& line, std::size_t line_no) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw ParseError(line_no, "not a valid record object");
  }
  return j;
}

const json& require_key(const json& j, const char* key, std::size_t line_no) {
  auto it = j.find(key);
  if (it == j.end()) {
    throw ParseError(line_no, std::string("missing required key '") + key + "'");
  }
  return *it;
}

double require_number(const json& j, const char* key, std::size_t line_no) {
  const json& v = require_key(j, key, line_no);
  if (!v.is_number()) throw ParseError(line_no, std::string("key '") + key + "' is not a number");
  return v.get<double>();
}

std::string require_string(const json& j, const char* key, std::size_t line_no) {
  const json& v = require_key(j, key, line_no);
  if (!v.is_string()) throw ParseError(line_no, std::string("key '") + key + "' is not a string");
  return v.get<std::string>();
}

InteractionRecord parse_interaction(const json& j, std::size_t line_no) {
  InteractionRecord r;
  r.user_id = require_string(j, "user_id", line_no);
  r.video_id = require_string(j, "video_id", line_no);
  if (r.user_id.empty()) throw ParseError(line_no, "empty user_id");
  if (r.video_id.empty()) throw ParseError(line_no, "empty video_id");
  r.watch_time_s = require_number(j, "watch_time_s", line_no);
  r.duration_s = require_number(j, "duration_s", line_no);
  r.ts = static_cast<std::int64_t>(require_number(j, "ts", line_no));
  if (r.watch_time_s < 0) throw ParseError(line_no, "negative watch_time_s");
  if (r.duration_s <= 0) throw ParseError(line_no, "duration_s must be > 0");
  r.play_rate = r.watch_time_s / r.duration_s;
  if (auto it = j.find("play_rate"); it != j.end()) {
    if (!it->is_number()) throw ParseError(line_no, "key 'play_rate' is not a number");
    const double stored = it->get<double>();
    const double denom = std::max(std::abs(r.play_rate), 1e-12);
    if (std::abs(stored - r.play_rate) / denom > 1e-6) {
      throw ParseError(line_no, "stored play_rate disagrees with watch_time_s / duration_s");
    }
  }
  return r;
}

}  // namespace

std::string to_string(FeedbackCategory c) {
  switch (c) {
    case FeedbackCategory::NegativeOrConflicting: return "negative_or_conflicting";
    case FeedbackCategory::BoringUnappealing: return "boring_unappealing";
    case FeedbackCategory::VisuallyDisturbing: return "visually_disturbing";
  }
  return "unknown";
}

std::optional<FeedbackCategory> category_from_string(const std::string& name) {
  if (name == "negative_or_conflicting") return FeedbackCategory::NegativeOrConflicting;
  if (name == "boring_unappealing") return FeedbackCategory::BoringUnappealing;
  if (name == "visually_disturbing") return FeedbackCategory::VisuallyDisturbing;
  return std::nullopt;
}

std::pair<std::vector<InteractionRecord>, DropReport> ingest_interactions(std::istream& source) {
  std::vector<InteractionRecord> records;
  DropReport report;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(source, line)) {
    ++line_no;
    if (line.empty()) continue;
    ++report.input_count;
    InteractionRecord r = parse_interaction(parse_line(line, line_no), line_no);
    if (r.play_rate > kMaxPlayRate) {
      ++report.anomalous_play_rate;
      continue;
    }
    if (r.watch_time_s < kMinWatchSeconds) {
      ++report.accidental_tap;
      continue;
    }
    records.push_back(std::move(r));
  }

  // Cohort floors, user floor first. One floor can re-expose the other, so
  // iterate to a fixed point; otherwise ingestion would not be idempotent.
  bool changed = true;
  while (changed) {
    changed = false;
    ++report.floor_rounds;

    std::unordered_map<std::string, int> per_user;
    for (const auto& r : records) ++per_user[r.user_id];
    std::vector<InteractionRecord> kept;
    kept.reserve(records.size());
    for (auto& r : records) {
      if (per_user[r.user_id] < kMinUserRecords) {
        ++report.user_floor;
        changed = true;
      } else {
        kept.push_back(std::move(r));
      }
    }
    records = std::move(kept);

    std::unordered_map<std::string, int> per_video;
    for (const auto& r : records) ++per_video[r.video_id];
    kept.clear();
    kept.reserve(records.size());
    for (auto& r : records) {
      if (per_video[r.video_id] < kMinVideoViews) {
        ++report.video_floor;
        changed = true;
      } else {
        kept.push_back(std::move(r));
      }
    }
    records = std::move(kept);
  }

  report.retained_count = records.size();
  return {std::move(records), report};
}

GroundTruth label_implicit(const InteractionRecord& record) {
  GroundTruth truth;
  truth.attitude =
      record.play_rate < kImplicitNegativeThreshold ? Attitude::Negative : Attitude::Positive;
  return truth;
}

bool validate_explicit(const ExplicitFeedback& feedback) {
  const auto& events = feedback.surrounding_events;
  const TimedAction* marker = nullptr;
  for (const auto& e : events) {
    if (e.action == "dislike") {
      if (marker != nullptr) return false;  // ambiguous feedback moment
      marker = &e;
    }
  }
  if (marker == nullptr) return false;
  const std::int64_t t = marker->ts;

  const TimedAction* before = nullptr;
  const TimedAction* after = nullptr;
  for (const auto& e : events) {
    if (&e == marker) continue;
    if (e.ts < t) before = &e;  // events are sorted, keep the latest
    if (e.ts > t && after == nullptr) after = &e;
  }
  if (before == nullptr || after == nullptr) return false;
  if (t - before->ts > kExplicitWindowSeconds) return false;
  if (after->ts - t > kExplicitWindowSeconds) return false;
  for (const auto& e : events) {
    if (e.action == "leave_app" && e.ts >= before->ts && e.ts <= after->ts) return false;
  }
  return true;
}

std::vector<UserProfile> read_users(std::istream& source) {
  std::vector<UserProfile> users;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(source, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = parse_line(line, line_no);
    UserProfile u;
    u.user_id = require_string(j, "user_id", line_no);
    if (u.user_id.empty()) throw ParseError(line_no, "empty user_id");
    const double age = require_number(j, "age", line_no);
    if (age < 0) throw ParseError(line_no, "negative age");
    u.age = static_cast<int>(age);
    const std::string gender = require_string(j, "gender", line_no);
    if (gender == "male") {
      u.gender = Gender::Male;
    } else if (gender == "female") {
      u.gender = Gender::Female;
    } else if (gender == "unspecified") {
      u.gender = Gender::Unspecified;
    } else {
      throw ParseError(line_no, "unknown gender '" + gender + "'");
    }
    u.occupation = require_string(j, "occupation", line_no);
    const json& interests = require_key(j, "interests", line_no);
    if (!interests.is_array()) throw ParseError(line_no, "key 'interests' is not an array");
    for (const auto& tag : interests) {
      if (!tag.is_string()) throw ParseError(line_no, "interest tag is not a string");
      u.interests.push_back(tag.get<std::string>());
    }
    users.push_back(std::move(u));
  }
  return users;
}

std::vector<ExplicitFeedback> read_explicit_feedback(std::istream& source) {
  std::vector<ExplicitFeedback> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(source, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = parse_line(line, line_no);
    ExplicitFeedback f;
    f.user_id = require_string(j, "user_id", line_no);
    f.video_id = require_string(j, "video_id", line_no);
    f.reason_text = require_string(j, "reason", line_no);
    if (f.reason_text.empty()) throw ParseError(line_no, "empty reason");
    const std::string cat = require_string(j, "category", line_no);
    auto parsed = category_from_string(cat);
    if (!parsed) throw ParseError(line_no, "unknown category '" + cat + "'");
    f.category = *parsed;
    const json& events = require_key(j, "events", line_no);
    if (!events.is_array()) throw ParseError(line_no, "key 'events' is not an array");
    for (const auto& e : events) {
      if (!e.is_object()) throw ParseError(line_no, "event is not an object");
      TimedAction a;
      a.action = require_string(e, "action", line_no);
      a.ts = static_cast<std::int64_t>(require_number(e, "ts", line_no));
      f.surrounding_events.push_back(std::move(a));
    }
    std::sort(f.surrounding_events.begin(), f.surrounding_events.end(),
              [](const TimedAction& a, const TimedAction& b) { return a.ts < b.ts; });
    out.push_back(std::move(f));
  }
  return out;
}

void write_interaction(std::ostream& out, const InteractionRecord& r) {
  json j{{"user_id", r.user_id},       {"video_id", r.video_id}, {"watch_time_s", r.watch_time_s},
         {"duration_s", r.duration_s}, {"play_rate", r.play_rate}, {"ts", r.ts}};
  out << j.dump() << '\n';
}

void write_user(std::ostream& out, const UserProfile& u) {
  const char* gender = u.gender == Gender::Male     ? "male"
                       : u.gender == Gender::Female ? "female"
                                                    : "unspecified";
  json j{{"user_id", u.user_id},
         {"age", u.age},
         {"gender", gender},
         {"occupation", u.occupation},
         {"interests", u.interests}};
  out << j.dump() << '\n';
}

void write_explicit_feedback(std::ostream& out, const ExplicitFeedback& f) {
  json events = json::array();
  for (const auto& e : f.surrounding_events) {
    events.push_back(json{{"action", e.action}, {"ts", e.ts}});
  }
  json j{{"user_id", f.user_id},
         {"video_id", f.video_id},
         {"reason", f.reason_text},
         {"category", to_string(f.category)},
         {"events", events}};
  out << j.dump() << '\n';
}

}  // namespace sgrpo::domain
