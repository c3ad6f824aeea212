#pragma once

// Quiz-attempt and interaction-log tables, and the attempt join.
//
// Column names are matched case-insensitively, ignoring '_', '-' and spaces,
// through the alias map below (Moodle export dialects):
//
//   quiz table                       log table
//   quizID     quiz, quizid          studentID  userid, user, relateduserid
//   courseID   course                courseID   course
//   attemptID  attempt, id           objectID   objectid, contextinstanceid
//   attemptNo  attempt_number,       component  component
//              attemptnr             event      eventname, action
//   startTime  timestart             timestamp  timecreated, time
//   endTime    timefinish            origin     origin, platform
//   quizStatus state, status
//   maxPoints  maxgrade, sumgrades_max
//   points     sumgrades, grade

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qs/error.hpp"
#include "qs/time.hpp"

namespace qs {

enum class TableFormat { Csv, Jsonl };

// Picks the format from a file extension (.csv / .jsonl / .ndjson).
std::optional<TableFormat> format_for_path(const std::filesystem::path& path);

enum class QuizStatus { InProgress, Submitted };

struct QuizAttempt {
  std::string quiz_id;
  std::string course_id;
  std::string attempt_id;
  int attempt_no = 1;
  Timestamp start_time = 0;
  std::optional<Timestamp> end_time;
  QuizStatus status = QuizStatus::InProgress;
  double max_points = 0.0;
  std::optional<double> points;

  friend bool operator==(const QuizAttempt&, const QuizAttempt&) = default;
};

// Enum with an escape hatch that keeps the raw label of unknown values.
template <class Kind>
struct Tagged {
  Kind kind{};
  std::string other;  // raw label when kind == Kind::Other

  friend bool operator==(const Tagged&, const Tagged&) = default;
};

enum class ComponentKind { Quiz, Module, Other };
enum class OriginKind { Web, Mobile, Other };
using Component = Tagged<ComponentKind>;
using Origin = Tagged<OriginKind>;

Component parse_component(std::string_view raw);
Origin parse_origin(std::string_view raw);
std::string to_string(const Component& c);
std::string to_string(const Origin& o);
std::string_view to_string(QuizStatus s);

struct LogEvent {
  std::string student_id;
  std::string course_id;
  std::string object_id;
  Component component;
  std::string event;
  Timestamp timestamp = 0;
  Origin origin;

  friend bool operator==(const LogEvent&, const LogEvent&) = default;
};

struct RowIssue {
  std::size_t row = 0;  // 1-based data row (header excluded)
  ErrorCode code = ErrorCode::RowInvariantViolation;
  std::string reason;
};

struct QuizTable {
  std::vector<QuizAttempt> attempts;
  std::vector<RowIssue> issues;
};

struct LogTable {
  std::vector<LogEvent> events;
  std::vector<RowIssue> issues;
};

// Invalid rows are skipped and reported in `issues`. Structural problems
// (missing column, bad UTF-8, malformed JSON line) throw qs::Error.
QuizTable parse_quiz_table(std::string_view source, TableFormat format);
LogTable parse_log_table(std::string_view source, TableFormat format);

QuizTable read_quiz_file(const std::filesystem::path& path);
LogTable read_log_file(const std::filesystem::path& path);

std::string write_quiz_table(std::span<const QuizAttempt> attempts, TableFormat format);
std::string write_log_table(std::span<const LogEvent> events, TableFormat format);

struct TimedEvent {
  std::string tag;
  Timestamp time = 0;

  friend bool operator==(const TimedEvent&, const TimedEvent&) = default;
};

bool is_submit_tag(std::string_view tag);

struct AttemptEventStream {
  QuizAttempt attempt;
  std::string student_id;  // from the matched log rows; empty when none matched
  std::vector<TimedEvent> events;
  bool submitted = false;
  std::optional<Timestamp> submission_time;

  const std::string& attempt_id() const { return attempt.attempt_id; }
  const std::string& course_id() const { return attempt.course_id; }
  const std::string& quiz_id() const { return attempt.quiz_id; }
};

inline constexpr Timestamp kClockSkewTolerance = 60;

struct JoinReport {
  std::size_t matched_events = 0;
  std::size_t dangling_events = 0;  // quiz events whose objectID names no attempt
  std::size_t non_quiz_events = 0;
  std::vector<std::string> attempts_without_events;
  std::vector<std::string> course_mismatches;     // attempt ids
  std::vector<std::string> student_mismatches;    // attempt ids with >1 student
  std::vector<std::string> early_event_attempts;  // events before start - skew tolerance
};

struct JoinResult {
  std::vector<AttemptEventStream> streams;  // one per attempt, input order
  JoinReport report;
};

JoinResult join_attempt_events(std::span<const QuizAttempt> attempts,
                               std::span<const LogEvent> logs);

}  // namespace qs
