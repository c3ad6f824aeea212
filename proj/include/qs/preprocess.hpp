#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "qs/ingest.hpp"
#include "qs/time.hpp"

namespace qs {

// One attempt-day. `activity_on_day` holds every event of the local calendar
// day (E_start and E_end included); `accumulated_activity` runs from E_start
// through this day with the submission event left out.
struct DailyActivityRecord {
  std::string attempt_id;
  int date_rel = 0;
  std::vector<TimedEvent> activity_on_day;
  int inactive_days = 0;
  std::optional<int> submission_day;
  std::optional<int> days_before_submit;
  std::vector<TimedEvent> accumulated_activity;
  bool did_submit = false;

  friend bool operator==(const DailyActivityRecord&, const DailyActivityRecord&) = default;
};

inline constexpr int kDefaultHorizonDays = 28;

// Last day index for a never-submitted attempt: min(horizon, semester end),
// never below 0.
int effective_cutoff(const AttemptEventStream& stream, int horizon_days,
                     std::optional<Timestamp> semester_end, TimeZone tz);

// Records for dateRel = 0..lastDay (lastDay = submission day, or `cutoff_days`
// when the attempt was never submitted). Events after the submission and, for
// unsubmitted attempts, after the cutoff day are not part of any record. An
// attempt without events yields no records.
std::vector<DailyActivityRecord> build_daily_records(const AttemptEventStream& stream,
                                                     int cutoff_days, TimeZone tz = {});

nlohmann::json to_json(const DailyActivityRecord& record);
DailyActivityRecord daily_record_from_json(const nlohmann::json& j);

struct Semester {
  std::string tag;
  Timestamp start = 0;
  Timestamp end = 0;  // exclusive
};

class SemesterCalendar {
 public:
  SemesterCalendar() = default;
  explicit SemesterCalendar(std::vector<Semester> semesters);

  // semesters.csv: tag,start,end (epoch seconds or RFC-3339)
  static SemesterCalendar parse_csv(std::string_view text);
  std::string to_csv() const;

  const Semester* find(Timestamp ts) const;
  const std::vector<Semester>& semesters() const { return semesters_; }
  bool empty() const { return semesters_.empty(); }

 private:
  std::vector<Semester> semesters_;
};

enum class KnowledgeLevel { Novice, Expert };

struct PriorKnowledgeClass {
  std::string student_id;
  double score = 0.0;
  KnowledgeLevel level = KnowledgeLevel::Novice;
};

// Novice below 50 %, Expert otherwise. Throws ScoreOutOfRange outside [0, 100].
PriorKnowledgeClass classify_prior_knowledge(std::string student_id, double score);

}  // namespace qs
