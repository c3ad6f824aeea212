#include <fstream>
#include <functional>

#include "doctest.h"
#include "qs/error.hpp"
#include "qs/ingest.hpp"
#include "support.hpp"

using namespace qs;

namespace {

const char* kQuizHeader = "quizID,courseID,attemptID,attemptNo,startTime,endTime,quizStatus,maxPoints,points\n";
const char* kLogHeader = "studentID,courseID,objectID,component,event,timestamp,origin\n";

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected qs::Error");
  return ErrorCode::Io;
}

}  // namespace

TEST_SUITE("ingest") {
  TEST_CASE("one submitted quiz row") {
    auto t = parse_quiz_table(std::string(kQuizHeader) +
                                  "q1,c1,a1,1,2018-10-01T09:00:00Z,2018-10-03T10:00:00Z,submitted,10,7.5\n",
                              TableFormat::Csv);
    REQUIRE(t.attempts.size() == 1);
    CHECK(t.issues.empty());
    const auto& a = t.attempts[0];
    CHECK(a.status == QuizStatus::Submitted);
    CHECK(a.attempt_id == "a1");
    CHECK(a.start_time == make_timestamp(2018, 10, 1, 9));
    CHECK(a.end_time == make_timestamp(2018, 10, 3, 10));
    CHECK(a.points == 7.5);
  }

  TEST_CASE("header only gives an empty table") {
    CHECK(parse_quiz_table(kQuizHeader, TableFormat::Csv).attempts.empty());
    CHECK(parse_log_table(kLogHeader, TableFormat::Csv).events.empty());
  }

  TEST_CASE("submitted row without endTime is rejected per row") {
    auto t = parse_quiz_table(std::string(kQuizHeader) + "q1,c1,a1,1,100,,submitted,10,5\n" +
                                  "q1,c1,a2,1,100,,inprogress,10,\n",
                              TableFormat::Csv);
    REQUIRE(t.issues.size() == 1);
    CHECK(t.issues[0].row == 1);
    CHECK(t.issues[0].code == ErrorCode::RowInvariantViolation);
    REQUIRE(t.attempts.size() == 1);
    CHECK(t.attempts[0].attempt_id == "a2");
  }

  TEST_CASE("other row invariants") {
    auto t = parse_quiz_table(std::string(kQuizHeader) +
                                  "q1,c1,a1,0,100,200,submitted,10,5\n"    // attemptNo 0
                                  "q1,c1,a2,1,300,200,submitted,10,5\n"    // end before start
                                  "q1,c1,a3,1,100,200,submitted,10,11\n"   // points > max
                                  "q1,c1,a4,1,100,200,weird,10,5\n"        // status
                                  "q1,c1,a5,1,100,200,submitted,10,5\n"
                                  "q1,c1,a5,1,100,200,submitted,10,5\n",   // duplicate
                              TableFormat::Csv);
    CHECK(t.attempts.size() == 1);
    CHECK(t.issues.size() == 5);
  }

  TEST_CASE("Moodle column aliases and case") {
    auto t = parse_quiz_table(
        "Quiz,Course,ID,Attempt_Number,TimeStart,TimeFinish,State,MaxGrade,SumGrades\n"
        "q1,c1,a1,2,1538384400,1538388000,finished,10,9\n",
        TableFormat::Csv);
    REQUIRE(t.attempts.size() == 1);
    CHECK(t.attempts[0].attempt_no == 2);
    CHECK(t.attempts[0].status == QuizStatus::Submitted);

    auto l = parse_log_table(
        "userid,course,contextinstanceid,component,eventname,timecreated,platform\n"
        "u1,c1,a1,mod_quiz,view,1538384400,ws\n",
        TableFormat::Csv);
    REQUIRE(l.events.size() == 1);
    CHECK(l.events[0].component.kind == ComponentKind::Quiz);
    CHECK(l.events[0].origin.kind == OriginKind::Mobile);
  }

  TEST_CASE("missing column is structural") {
    CHECK(code_of([] { parse_quiz_table("quizID,courseID\nq,c\n", TableFormat::Csv); }) ==
          ErrorCode::MissingColumn);
    CHECK(code_of([] { parse_log_table("studentID\n", TableFormat::Csv); }) == ErrorCode::MissingColumn);
  }

  TEST_CASE("invalid UTF-8 is structural") {
    std::string bad = std::string(kLogHeader) + "s\xFF,c,a,quiz,view,1,web\n";
    CHECK(code_of([&] { parse_log_table(bad, TableFormat::Csv); }) == ErrorCode::EncodingError);
  }

  TEST_CASE("log components and timestamps") {
    auto l = parse_log_table(std::string(kLogHeader) +
                                 "s1,c1,a1,quiz,view,100,web\n"
                                 "s1,c1,m9,module,view,200,web\n"
                                 "s1,c1,a1,forum,post,300,desktop\n"
                                 "s1,c1,a1,quiz,view,not-a-time,web\n",
                             TableFormat::Csv);
    REQUIRE(l.events.size() == 3);
    CHECK(l.events[0].component.kind == ComponentKind::Quiz);
    CHECK(l.events[0].event == "view");
    CHECK(l.events[1].component.kind == ComponentKind::Module);
    CHECK(l.events[2].component.kind == ComponentKind::Other);
    CHECK(to_string(l.events[2].component) == "forum");
    CHECK(to_string(l.events[2].origin) == "desktop");
    REQUIRE(l.issues.size() == 1);
    CHECK(l.issues[0].code == ErrorCode::TimestampParseError);
    CHECK(l.issues[0].row == 4);
  }

  TEST_CASE("jsonl tables") {
    auto t = parse_quiz_table(
        R"({"quizID":"q1","courseID":"c1","attemptID":"a1","attemptNo":1,"startTime":100,"endTime":null,"quizStatus":"inprogress","maxPoints":10,"points":null})"
        "\n\n",
        TableFormat::Jsonl);
    REQUIRE(t.attempts.size() == 1);
    CHECK_FALSE(t.attempts[0].end_time.has_value());
    CHECK(code_of([] { parse_log_table("{not json}\n", TableFormat::Jsonl); }) == ErrorCode::EncodingError);
  }

  TEST_CASE("writers round-trip in both formats") {
    QuizAttempt a{"q1", "c,1", "a1", 1, 100, 250, QuizStatus::Submitted, 10, 2.5};
    QuizAttempt b{"q1", "c,1", "a2", 2, 300, std::nullopt, QuizStatus::InProgress, 10, std::nullopt};
    LogEvent e{"s1", "c,1", "a1", {ComponentKind::Quiz, {}}, "view", 120, {OriginKind::Web, {}}};
    LogEvent f{"s1", "c,1", "x", {ComponentKind::Other, "forum"}, "post \"x\"", 130, {OriginKind::Other, "tv"}};
    std::vector<QuizAttempt> attempts = {a, b};
    std::vector<LogEvent> events = {e, f};
    for (auto fmt : {TableFormat::Csv, TableFormat::Jsonl}) {
      CHECK(parse_quiz_table(write_quiz_table(attempts, fmt), fmt).attempts == attempts);
      CHECK(parse_log_table(write_log_table(events, fmt), fmt).events == events);
    }
  }

  TEST_CASE("join by objectID") {
    QuizAttempt x{"q1", "c1", "x", 1, 1000, 5000, QuizStatus::Submitted, 10, 8};
    QuizAttempt z{"q1", "c1", "z", 1, 1000, std::nullopt, QuizStatus::InProgress, 10, std::nullopt};
    auto ev = [](std::string obj, std::string event, Timestamp t) {
      return LogEvent{"s1", "c1", std::move(obj), {ComponentKind::Quiz, {}}, std::move(event), t, {}};
    };
    std::vector<LogEvent> logs = {ev("x", "submit", 5000), ev("x", "view", 1000), ev("x", "answer", 2000),
                                  ev("y", "view", 1500)};
    logs.push_back(LogEvent{"s1", "c1", "x", {ComponentKind::Module, {}}, "view", 1200, {}});
    std::vector<QuizAttempt> attempts = {x, z};

    auto r = join_attempt_events(attempts, logs);
    REQUIRE(r.streams.size() == 2);
    const auto& s = r.streams[0];
    CHECK(s.events.size() == 3);
    CHECK(test::tags(s.events) == std::vector<std::string>{"view", "answer", "submit"});
    CHECK(s.student_id == "s1");
    CHECK(s.submitted);
    CHECK(s.submission_time == Timestamp{5000});
    CHECK(r.report.dangling_events == 1);
    CHECK(r.report.non_quiz_events == 1);
    CHECK(r.report.matched_events == 3);
    CHECK(r.report.attempts_without_events == std::vector<std::string>{"z"});
    CHECK(r.streams[1].events.empty());
  }

  TEST_CASE("orphan event alone yields no stream") {
    std::vector<QuizAttempt> attempts;
    std::vector<LogEvent> logs = {LogEvent{"s1", "c1", "y", {ComponentKind::Quiz, {}}, "view", 1, {}}};
    auto r = join_attempt_events(attempts, logs);
    CHECK(r.streams.empty());
    CHECK(r.report.dangling_events == 1);
  }

  TEST_CASE("join consistency flags") {
    QuizAttempt x{"q1", "c1", "x", 1, 10000, std::nullopt, QuizStatus::InProgress, 10, std::nullopt};
    std::vector<LogEvent> logs = {
        LogEvent{"s1", "c1", "x", {ComponentKind::Quiz, {}}, "view", 10000 - kClockSkewTolerance - 1, {}},
        LogEvent{"s2", "c2", "x", {ComponentKind::Quiz, {}}, "view", 10100, {}},
    };
    std::vector<QuizAttempt> attempts = {x};
    auto r = join_attempt_events(attempts, logs);
    CHECK(r.report.early_event_attempts == std::vector<std::string>{"x"});
    CHECK(r.report.student_mismatches == std::vector<std::string>{"x"});
    CHECK(r.report.course_mismatches == std::vector<std::string>{"x"});
  }

  TEST_CASE("submission time falls back to endTime without a submit event") {
    QuizAttempt x{"q1", "c1", "x", 1, 1000, 4000, QuizStatus::Submitted, 10, 8};
    std::vector<LogEvent> logs = {LogEvent{"s1", "c1", "x", {ComponentKind::Quiz, {}}, "view", 1000, {}}};
    std::vector<QuizAttempt> attempts = {x};
    auto r = join_attempt_events(attempts, logs);
    CHECK(r.streams[0].submission_time == Timestamp{4000});
  }

  TEST_CASE("file readers pick the format from the extension") {
    test::TempDir dir("ingest");
    {
      std::ofstream(dir / "quiz.csv") << kQuizHeader << "q1,c1,a1,1,100,,inprogress,10,\n";
      std::ofstream(dir / "quiz.txt") << kQuizHeader;
    }
    CHECK(read_quiz_file(dir / "quiz.csv").attempts.size() == 1);
    CHECK(code_of([&] { read_quiz_file(dir / "quiz.txt"); }) == ErrorCode::Io);
    CHECK(format_for_path("a/b.NDJSON") == TableFormat::Jsonl);
  }
}
