#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sstream>

#include "sgrpo/domain.hpp"
#include "sgrpo/errors.hpp"
#include "sgrpo/rng.hpp"

using namespace sgrpo;
using namespace sgrpo::domain;

namespace {

std::string interaction_line(const std::string& user, const std::string& video, double watch,
                             double duration, long ts) {
  std::ostringstream out;
  out << R"({"user_id":")" << user << R"(","video_id":")" << video << R"(","watch_time_s":)"
      << watch << R"(,"duration_s":)" << duration << R"(,"ts":)" << ts << "}";
  return out.str();
}

// n clean records for one user spread over the given videos.
void append_records(std::string& data, const std::string& user, int n,
                    const std::vector<std::string>& videos, long& ts) {
  for (int i = 0; i < n; ++i) {
    data += interaction_line(user, videos[i % videos.size()], 10.0, 20.0, ts++) + "\n";
  }
}

}  // namespace

TEST_CASE("anomalous records are dropped before the cohort floors") {
  std::string data;
  long ts = 1000;
  // 20 users x 20 records over 2 well-viewed videos keeps the floors quiet.
  for (int u = 0; u < 20; ++u) {
    append_records(data, "u" + std::to_string(u), 20, {"v1", "v2"}, ts);
  }
  data += interaction_line("u0", "v1", 120.0, 20.0, ts++) + "\n";  // play_rate 6
  data += interaction_line("u1", "v2", 0.4, 20.0, ts++) + "\n";    // sub-half-second tap

  std::istringstream in(data);
  const auto [records, report] = ingest_interactions(in);
  CHECK(report.anomalous_play_rate == 1);
  CHECK(report.accidental_tap == 1);
  CHECK(report.user_floor == 0);
  CHECK(report.video_floor == 0);
  CHECK(records.size() == 400);
  CHECK(report.input_count == 402);
  CHECK(report.dropped_total() + report.retained_count == report.input_count);
}

TEST_CASE("user floor drops the 14-record user, keeps 20 and 15") {
  std::string data;
  long ts = 0;
  append_records(data, "alice", 20, {"v1", "v2"}, ts);
  append_records(data, "bob", 15, {"v1", "v2"}, ts);
  append_records(data, "carol", 14, {"v1", "v2"}, ts);

  std::istringstream in(data);
  const auto [records, report] = ingest_interactions(in);
  // alice and bob leave 35 records; both videos keep >= 10 views.
  CHECK(report.user_floor == 14);
  CHECK(report.video_floor == 0);
  CHECK(records.size() == 35);
  for (const auto& r : records) CHECK(r.user_id != "carol");
}

TEST_CASE("video floor can re-trigger the user floor") {
  std::string data;
  long ts = 0;
  // dave: 15 records on v_rare (9 views from him is impossible; give v_rare
  // only his 6 views) -> video floor removes v_rare, dave drops to 9 -> user
  // floor removes dave entirely on the next round.
  append_records(data, "erin", 20, {"v1", "v2"}, ts);
  append_records(data, "frank", 20, {"v1", "v2"}, ts);
  append_records(data, "dave", 9, {"v1"}, ts);
  append_records(data, "dave", 6, {"v_rare"}, ts);

  std::istringstream in(data);
  const auto [records, report] = ingest_interactions(in);
  CHECK(records.size() == 40);
  CHECK(report.video_floor == 6);
  CHECK(report.user_floor == 9);
  CHECK(report.floor_rounds >= 2);
  CHECK(report.dropped_total() + report.retained_count == report.input_count);
}

TEST_CASE("ingestion is idempotent") {
  Rng rng(31);
  std::string data;
  long ts = 0;
  for (int u = 0; u < 12; ++u) {
    const int n = 5 + static_cast<int>(rng.uniform_int(30));
    std::vector<std::string> videos;
    for (int v = 0; v < 6; ++v) videos.push_back("v" + std::to_string(rng.uniform_int(9)));
    append_records(data, "u" + std::to_string(u), n, videos, ts);
  }
  std::istringstream first_in(data);
  const auto [first, first_report] = ingest_interactions(first_in);
  CHECK(first_report.dropped_total() + first_report.retained_count == first_report.input_count);

  std::string again;
  for (const auto& r : first) {
    std::ostringstream line;
    write_interaction(line, r);
    again += line.str();
  }
  std::istringstream second_in(again);
  const auto [second, second_report] = ingest_interactions(second_in);
  CHECK(second.size() == first.size());
  CHECK(second_report.dropped_total() == 0);
}

TEST_CASE("malformed lines raise ParseError with the line number") {
  SUBCASE("unparseable json") {
    std::istringstream in("not json at all\n");
    CHECK_THROWS_AS(ingest_interactions(in), ParseError);
  }
  SUBCASE("missing required key") {
    std::istringstream in(R"({"user_id":"u","video_id":"v","watch_time_s":1.0,"ts":5})"
                          "\n");
    try {
      ingest_interactions(in);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 1);
      CHECK(std::string(e.what()).find("duration_s") != std::string::npos);
    }
  }
  SUBCASE("stored play_rate disagreeing with watch/duration") {
    std::istringstream in(
        R"({"user_id":"u","video_id":"v","watch_time_s":10.0,"duration_s":20.0,"play_rate":0.9,"ts":5})"
        "\n");
    CHECK_THROWS_AS(ingest_interactions(in), ParseError);
  }
  SUBCASE("consistent stored play_rate is accepted, unknown keys ignored") {
    std::istringstream in(
        R"({"user_id":"u","video_id":"v","watch_time_s":10.0,"duration_s":20.0,"play_rate":0.5,"ts":5,"extra":1})"
        "\n");
    const auto [records, report] = ingest_interactions(in);
    CHECK(report.input_count == 1);  // floors drop it, parsing accepted it
  }
  SUBCASE("empty input is a legal empty dataset") {
    std::istringstream in("");
    const auto [records, report] = ingest_interactions(in);
    CHECK(records.empty());
    CHECK(report.input_count == 0);
  }
}

TEST_CASE("implicit labeling uses a strict 0.3 threshold") {
  InteractionRecord r;
  r.play_rate = 0.25;
  CHECK(label_implicit(r).attitude == Attitude::Negative);
  CHECK_FALSE(label_implicit(r).category.has_value());  // category comes later
  r.play_rate = 0.30;
  CHECK(label_implicit(r).attitude == Attitude::Positive);
  r.play_rate = 1.0;
  CHECK(label_implicit(r).attitude == Attitude::Positive);
}

TEST_CASE("explicit feedback window validation") {
  const auto feedback = [](std::vector<TimedAction> events) {
    ExplicitFeedback f;
    f.user_id = "u";
    f.video_id = "v";
    f.reason_text = "r";
    f.surrounding_events = std::move(events);
    return f;
  };
  const std::int64_t t = 10000;

  CHECK(validate_explicit(feedback({{"browse", t - 30}, {"dislike", t}, {"browse", t + 60}})));
  CHECK_FALSE(
      validate_explicit(feedback({{"browse", t - 30}, {"dislike", t}, {"browse", t + 150}})));
  CHECK_FALSE(validate_explicit(feedback(
      {{"browse", t - 30}, {"dislike", t}, {"leave_app", t + 10}, {"browse", t + 50}})));
  SUBCASE("no activity before the feedback") {
    CHECK_FALSE(validate_explicit(feedback({{"dislike", t}, {"browse", t + 60}})));
  }
  SUBCASE("no activity after the feedback") {
    CHECK_FALSE(validate_explicit(feedback({{"browse", t - 30}, {"dislike", t}})));
  }
  SUBCASE("exactly at the two-minute boundary is still valid") {
    CHECK(validate_explicit(feedback({{"browse", t - 120}, {"dislike", t}, {"browse", t + 120}})));
  }
  SUBCASE("no dislike marker means nothing to validate") {
    CHECK_FALSE(validate_explicit(feedback({{"browse", t - 30}, {"browse", t + 60}})));
  }
}

TEST_CASE("user and explicit-feedback readers enforce their schemas") {
  SUBCASE("round trip") {
    UserProfile u;
    u.user_id = "u1";
    u.age = 34;
    u.gender = Gender::Female;
    u.occupation = "chef";
    u.interests = {"food", "travel"};
    std::ostringstream out;
    write_user(out, u);
    std::istringstream in(out.str());
    const auto users = read_users(in);
    REQUIRE(users.size() == 1);
    CHECK(users[0].user_id == "u1");
    CHECK(users[0].gender == Gender::Female);
    CHECK(users[0].interests == std::vector<std::string>{"food", "travel"});
  }
  SUBCASE("unknown gender is an error") {
    std::istringstream in(
        R"({"user_id":"u","age":3,"gender":"x","occupation":"o","interests":[]})" "\n");
    CHECK_THROWS_AS(read_users(in), ParseError);
  }
  SUBCASE("explicit feedback round trip sorts events") {
    ExplicitFeedback f;
    f.user_id = "u";
    f.video_id = "v";
    f.reason_text = "dull plotline";
    f.category = FeedbackCategory::BoringUnappealing;
    f.surrounding_events = {{"browse", 90}, {"dislike", 60}, {"browse", 30}};
    std::ostringstream out;
    write_explicit_feedback(out, f);
    std::istringstream in(out.str());
    const auto fbs = read_explicit_feedback(in);
    REQUIRE(fbs.size() == 1);
    CHECK(fbs[0].category == FeedbackCategory::BoringUnappealing);
    CHECK(fbs[0].surrounding_events.front().ts == 30);
  }
}
