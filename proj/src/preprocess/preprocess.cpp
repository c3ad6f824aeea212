#include "qs/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include "qs/csv.hpp"
#include "qs/error.hpp"

namespace qs {
namespace {

using nlohmann::json;

json events_json(const std::vector<TimedEvent>& events) {
  json arr = json::array();
  for (const auto& e : events) arr.push_back(json::array({e.tag, e.time}));
  return arr;
}

std::vector<TimedEvent> events_from_json(const json& arr) {
  std::vector<TimedEvent> out;
  for (const auto& e : arr) out.push_back(TimedEvent{e.at(0).get<std::string>(), e.at(1).get<Timestamp>()});
  return out;
}

}  // namespace

int effective_cutoff(const AttemptEventStream& stream, int horizon_days,
                     std::optional<Timestamp> semester_end, TimeZone tz) {
  int cutoff = std::max(0, horizon_days);
  if (semester_end) {
    auto until_end = calendar_days_between(stream.attempt.start_time, *semester_end, tz);
    cutoff = static_cast<int>(std::clamp<std::int64_t>(until_end, 0, cutoff));
  }
  return cutoff;
}

std::vector<DailyActivityRecord> build_daily_records(const AttemptEventStream& stream,
                                                     int cutoff_days, TimeZone tz) {
  std::vector<DailyActivityRecord> records;
  if (stream.events.empty()) return records;

  const Timestamp start = stream.attempt.start_time;
  auto day_of = [&](Timestamp ts) {
    return static_cast<int>(std::max<std::int64_t>(0, calendar_days_between(start, ts, tz)));
  };

  // E_end: the first submit-tagged event at the submission time, when logged.
  std::optional<int> submission_day;
  std::optional<std::size_t> end_index;
  if (stream.submitted && stream.submission_time) {
    submission_day = day_of(*stream.submission_time);
    for (std::size_t i = 0; i < stream.events.size(); ++i) {
      if (stream.events[i].time == *stream.submission_time && is_submit_tag(stream.events[i].tag)) {
        end_index = i;
        break;
      }
    }
  }
  const int last_day = submission_day ? *submission_day : std::max(0, cutoff_days);

  std::vector<std::vector<TimedEvent>> per_day(static_cast<std::size_t>(last_day) + 1);
  std::vector<std::vector<TimedEvent>> accumulated_per_day(per_day.size());
  for (std::size_t i = 0; i < stream.events.size(); ++i) {
    const auto& e = stream.events[i];
    if (stream.submission_time && stream.submitted) {
      if (e.time > *stream.submission_time) continue;
      if (end_index && i > *end_index && e.time == *stream.submission_time) continue;
    }
    int d = day_of(e.time);
    if (d > last_day) continue;
    per_day[d].push_back(e);
    if (!end_index || i != *end_index) accumulated_per_day[d].push_back(e);
  }

  records.reserve(per_day.size());
  std::vector<TimedEvent> accumulated;
  int empty_prior = 0;
  for (int d = 0; d <= last_day; ++d) {
    DailyActivityRecord r;
    r.attempt_id = stream.attempt.attempt_id;
    r.date_rel = d;
    r.activity_on_day = per_day[d];
    r.inactive_days = empty_prior;
    r.submission_day = submission_day;
    if (submission_day) r.days_before_submit = *submission_day - d;
    accumulated.insert(accumulated.end(), accumulated_per_day[d].begin(),
                       accumulated_per_day[d].end());
    r.accumulated_activity = accumulated;
    r.did_submit = submission_day && d == *submission_day;
    if (per_day[d].empty()) ++empty_prior;
    records.push_back(std::move(r));
  }
  return records;
}

json to_json(const DailyActivityRecord& r) {
  json j = json::object();
  j["attemptID"] = r.attempt_id;
  j["dateRel"] = r.date_rel;
  j["activityOnDay"] = events_json(r.activity_on_day);
  j["inactiveDays"] = r.inactive_days;
  j["submissionDay"] = r.submission_day ? json(*r.submission_day) : json(nullptr);
  j["daysBeforeSubmit"] = r.days_before_submit ? json(*r.days_before_submit) : json(nullptr);
  j["accumulatedActivity"] = events_json(r.accumulated_activity);
  j["didSubmit"] = r.did_submit;
  return j;
}

DailyActivityRecord daily_record_from_json(const json& j) {
  DailyActivityRecord r;
  r.attempt_id = j.at("attemptID").get<std::string>();
  r.date_rel = j.at("dateRel").get<int>();
  r.activity_on_day = events_from_json(j.at("activityOnDay"));
  r.inactive_days = j.at("inactiveDays").get<int>();
  if (!j.at("submissionDay").is_null()) r.submission_day = j.at("submissionDay").get<int>();
  if (!j.at("daysBeforeSubmit").is_null()) r.days_before_submit = j.at("daysBeforeSubmit").get<int>();
  r.accumulated_activity = events_from_json(j.at("accumulatedActivity"));
  r.did_submit = j.at("didSubmit").get<bool>();
  return r;
}

SemesterCalendar::SemesterCalendar(std::vector<Semester> semesters)
    : semesters_(std::move(semesters)) {
  std::stable_sort(semesters_.begin(), semesters_.end(),
                   [](const Semester& a, const Semester& b) { return a.start < b.start; });
}

SemesterCalendar SemesterCalendar::parse_csv(std::string_view text) {
  auto rows = csv::parse(csv::strip_bom(text));
  std::vector<Semester> out;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() < 3) {
      if (row.size() == 1 && row[0].empty()) continue;
      throw Error(ErrorCode::InvalidConfig, "semesters row " + std::to_string(r) + " needs tag,start,end");
    }
    auto start = parse_timestamp(row[1]);
    auto end = parse_timestamp(row[2]);
    if (!start || !end) {
      if (r == 0) continue;  // header
      throw Error(ErrorCode::TimestampParseError, "semesters row " + std::to_string(r));
    }
    if (*end <= *start) throw Error(ErrorCode::InvalidConfig, "semester '" + row[0] + "' ends before it starts");
    out.push_back(Semester{row[0], *start, *end});
  }
  return SemesterCalendar(std::move(out));
}

std::string SemesterCalendar::to_csv() const {
  std::string out = "tag,start,end\r\n";
  for (const auto& s : semesters_) {
    std::vector<std::string> f = {s.tag, std::to_string(s.start), std::to_string(s.end)};
    out += csv::format_row(f);
  }
  return out;
}

const Semester* SemesterCalendar::find(Timestamp ts) const {
  for (const auto& s : semesters_) {
    if (ts >= s.start && ts < s.end) return &s;
  }
  return nullptr;
}

PriorKnowledgeClass classify_prior_knowledge(std::string student_id, double score) {
  if (!std::isfinite(score) || score < 0.0 || score > 100.0) {
    throw Error(ErrorCode::ScoreOutOfRange,
                "prior-knowledge score " + std::to_string(score) + " outside [0, 100]");
  }
  return PriorKnowledgeClass{std::move(student_id), score,
                             score < 50.0 ? KnowledgeLevel::Novice : KnowledgeLevel::Expert};
}

}  // namespace qs
