#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace sgrpo::domain {

enum class Gender { Male, Female, Unspecified };

struct UserProfile {
  std::string user_id;
  int age = 0;
  Gender gender = Gender::Unspecified;
  std::string occupation;
  std::vector<std::string> interests;  // may be empty, never meaningless
};

// Stand-in for frame-level visual analysis: short free-form descriptors of
// what the footage shows.
struct AttributeAnnotation {
  std::vector<std::string> descriptors;
};

struct VideoItem {
  std::string video_id;
  std::string title;
  double duration_s = 0.0;  // must be > 0
  std::string topic;
  AttributeAnnotation attributes;
  std::int64_t view_count = 0;
};

struct InteractionRecord {
  std::string user_id;
  std::string video_id;
  double watch_time_s = 0.0;
  double duration_s = 0.0;
  double play_rate = 0.0;  // watch_time_s / duration_s
  std::int64_t ts = 0;     // epoch seconds
};

enum class FeedbackCategory : int {
  NegativeOrConflicting = 0,
  BoringUnappealing = 1,
  VisuallyDisturbing = 2,
};
inline constexpr int kNumCategories = 3;

std::string to_string(FeedbackCategory c);
std::optional<FeedbackCategory> category_from_string(const std::string& name);

struct TimedAction {
  std::string action;
  std::int64_t ts = 0;
};

struct ExplicitFeedback {
  std::string user_id;
  std::string video_id;
  std::string reason_text;
  FeedbackCategory category = FeedbackCategory::NegativeOrConflicting;
  // Action log around the feedback moment, sorted by timestamp. The feedback
  // itself appears as the single event with action == "dislike".
  std::vector<TimedAction> surrounding_events;
};

enum class Attitude { Positive, Negative };

struct GroundTruth {
  Attitude attitude = Attitude::Positive;
  // Required for fully labeled Negative truths; implicit labeling leaves it
  // unset until the category pass runs.
  std::optional<FeedbackCategory> category;
  std::optional<std::string> reason_text;
};

// Ingestion thresholds.
inline constexpr double kMaxPlayRate = 5.0;
inline constexpr double kMinWatchSeconds = 0.5;
inline constexpr int kMinUserRecords = 15;
inline constexpr int kMinVideoViews = 10;
inline constexpr double kImplicitNegativeThreshold = 0.3;
inline constexpr std::int64_t kExplicitWindowSeconds = 120;

struct DropReport {
  std::size_t input_count = 0;
  std::size_t retained_count = 0;
  std::size_t anomalous_play_rate = 0;  // play_rate > 5
  std::size_t accidental_tap = 0;       // watch_time < 0.5 s
  std::size_t user_floor = 0;           // users left with < 15 records
  std::size_t video_floor = 0;          // videos left with < 10 views
  // Floors are re-applied in this order until stable so that re-ingesting an
  // already-filtered dataset drops nothing.
  std::string filter_order = "anomaly,user_floor,video_floor";
  std::size_t floor_rounds = 0;

  std::size_t dropped_total() const {
    return anomalous_play_rate + accidental_tap + user_floor + video_floor;
  }
};

// Reads one JSON record per line, validates, applies the cleaning filters and
// cohort floors. Retained records keep their input order. Malformed lines
// throw ParseError carrying the 1-based line number.
std::pair<std::vector<InteractionRecord>, DropReport> ingest_interactions(std::istream& source);

// Attitude from viewing behavior: Negative iff play_rate < 0.3 (strict).
// The category is assigned by a later labeling pass, not here.
GroundTruth label_implicit(const InteractionRecord& record);

// True iff the action log shows activity both before and after the feedback
// moment, each within 120 s, with no "leave_app" in between.
bool validate_explicit(const ExplicitFeedback& feedback);

// Line-delimited readers/writers for the companion schemas.
std::vector<UserProfile> read_users(std::istream& source);
std::vector<ExplicitFeedback> read_explicit_feedback(std::istream& source);
void write_interaction(std::ostream& out, const InteractionRecord& r);
void write_user(std::ostream& out, const UserProfile& u);
void write_explicit_feedback(std::ostream& out, const ExplicitFeedback& f);

}  // namespace sgrpo::domain
